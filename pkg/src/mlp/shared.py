"""Shared-representation nuisance network

Layout (one trunk, two group branches):

    x -> trunk -> h_G -> group head ............................ pi_G (logit of G=E)
                  h_G -> E block -> E head ..................... mu_S_E(0), mu_S_E(1), pi_E
                  h_G -> O block -> O propensity head .......... pi_O
                                    O block -> SY block -> head  mu_S_O(0), mu_S_O(1), mu_Y_O(0), mu_Y_O(1)

Dropout applies to the trunk only.
"""
import logging
from functools import partial
from typing import Dict, Optional

import numpy as np
from scipy.special import expit

from src.common.seeding import make_rng
from src.dataset.panel import PanelDataset
from src.mlp.layers import Block, Dense
from src.mlp.network import LOGISTIC, SQUARED, MLPConfig, Network, Standardizer, train
from src.nuisance.types import ArmPair, NuisanceSet, NUISANCE_NAMES
from src.regress.specs import DEFAULT_CLIP, as_design, clip_probabilities

logger = logging.getLogger(__name__)

HEADS = (
    "mu_S_E0",
    "mu_S_E1",
    "pi_E",
    "mu_S_O0",
    "mu_S_O1",
    "mu_Y_O0",
    "mu_Y_O1",
    "pi_O",
    "pi_G",
)
HEAD_INDEX = {name: i for i, name in enumerate(HEADS)}
PROBABILITY_HEADS = ("pi_E", "pi_O", "pi_G")


def _head_nuisance(head):
    return head if head in PROBABILITY_HEADS else head[:-1]


class SharedNuisanceNet(Network):
    def __init__(self, n_in, config: MLPConfig, clip=DEFAULT_CLIP):
        rng = make_rng(config.seed)
        self.config = config
        self.clip = clip
        self.n_in = n_in
        self.head_kinds = tuple(LOGISTIC if h in PROBABILITY_HEADS else SQUARED for h in HEADS)

        self.trunk = Block.hidden(config.widths, n_in, config.activation, rng, config.dropout)
        h_dim = self.trunk.n_out or n_in
        branch = config.widths[-1] if config.widths else h_dim

        self.group_head = Dense(h_dim, 1, rng)
        self.exp_block = Block.hidden([branch], h_dim, config.activation, rng)
        self.exp_head = Dense(branch, 3, rng)
        self.obs_block = Block.hidden([branch], h_dim, config.activation, rng)
        self.obs_propensity_head = Dense(branch, 1, rng)
        self.outcome_block = Block.hidden([branch], branch, config.activation, rng)
        self.outcome_head = Dense(branch, 4, rng)

        # identity scalings until fit_nuisances_shared sets them
        self.x_scaler = Standardizer(mean=np.zeros(n_in), scale=np.ones(n_in))
        self.s_scaler = Standardizer(mean=np.zeros(1), scale=np.ones(1))
        self.y_scaler = Standardizer(mean=np.zeros(1), scale=np.ones(1))

    def dense_layers(self):
        layers = [layer for layer in self.trunk.layers if isinstance(layer, Dense)]
        layers.append(self.group_head)
        for block, head in (
            (self.exp_block, self.exp_head),
            (self.obs_block, self.obs_propensity_head),
            (self.outcome_block, self.outcome_head),
        ):
            layers.extend(layer for layer in block.layers if isinstance(layer, Dense))
            layers.append(head)
        return layers

    def forward_raw(self, X, training=False):
        """Raw outputs in HEADS order; probability heads are logits"""
        h = self.trunk.forward(X, training=training)
        exp_out = self.exp_head.forward(self.exp_block.forward(h, training), training)
        obs = self.obs_block.forward(h, training)
        propensity = self.obs_propensity_head.forward(obs, training)
        outcomes = self.outcome_head.forward(self.outcome_block.forward(obs, training), training)
        group = self.group_head.forward(h, training)
        return np.hstack([exp_out, outcomes, propensity, group])

    def backward(self, grad_raw):
        grad_exp = grad_raw[:, 0:3]
        grad_outcomes = grad_raw[:, 3:7]
        grad_propensity = grad_raw[:, 7:8]
        grad_group = grad_raw[:, 8:9]

        grad_obs = self.outcome_block.backward(self.outcome_head.backward(grad_outcomes))
        grad_obs = grad_obs + self.obs_propensity_head.backward(grad_propensity)
        grad_h = (
            self.exp_block.backward(self.exp_head.backward(grad_exp))
            + self.obs_block.backward(grad_obs)
            + self.group_head.backward(grad_group)
        )
        return self.trunk.backward(grad_h)

    def forward(self, X) -> Dict[str, np.ndarray]:
        """All head outputs on the data scale; probabilities sigmoid-squashed and clipped"""
        raw = self.forward_raw(self.x_scaler.transform(as_design(X)))
        outputs = {}
        for name, i in HEAD_INDEX.items():
            if name in PROBABILITY_HEADS:
                outputs[name] = clip_probabilities(expit(raw[:, i]), self.clip)
            elif name.startswith("mu_Y"):
                outputs[name] = self.y_scaler.inverse(raw[:, i])
            else:
                outputs[name] = self.s_scaler.inverse(raw[:, i])
        return outputs


def forward(net: SharedNuisanceNet, X) -> Dict[str, np.ndarray]:
    return net.forward(X)


def build_targets(dataset: PanelDataset, s_scaler: Standardizer, y_scaler: Standardizer):
    """Per-head targets and supervision masks (n x len(HEADS))"""
    n = dataset.n
    targets = np.zeros((n, len(HEADS)))
    masks = np.zeros((n, len(HEADS)))
    is_exp = dataset.is_experimental
    is_obs = dataset.is_observational
    s_std = s_scaler.transform(dataset.s)
    y_std = np.where(is_obs, y_scaler.transform(dataset.y_filled(0.0)), 0.0)

    for a in (0, 1):
        arm = dataset.a == a
        targets[:, HEAD_INDEX[f"mu_S_E{a}"]] = s_std
        masks[:, HEAD_INDEX[f"mu_S_E{a}"]] = is_exp & arm
        targets[:, HEAD_INDEX[f"mu_S_O{a}"]] = s_std
        masks[:, HEAD_INDEX[f"mu_S_O{a}"]] = is_obs & arm
        targets[:, HEAD_INDEX[f"mu_Y_O{a}"]] = y_std
        masks[:, HEAD_INDEX[f"mu_Y_O{a}"]] = is_obs & arm

    targets[:, HEAD_INDEX["pi_E"]] = dataset.a
    masks[:, HEAD_INDEX["pi_E"]] = is_exp
    targets[:, HEAD_INDEX["pi_O"]] = dataset.a
    masks[:, HEAD_INDEX["pi_O"]] = is_obs
    targets[:, HEAD_INDEX["pi_G"]] = is_exp
    masks[:, HEAD_INDEX["pi_G"]] = 1.0
    return targets, masks


def head_weight_vector(head_weights: Optional[Dict[str, float]]) -> np.ndarray:
    """Expand per-nuisance weights to per-head weights"""
    head_weights = head_weights or {}
    return np.array([float(head_weights.get(_head_nuisance(h), 1.0)) for h in HEADS])


def _head_output(X, net, head):
    return net.forward(X)[head]


def fit_nuisances_shared(
    dataset: PanelDataset,
    config: Optional[MLPConfig] = None,
    head_weights: Optional[Dict[str, float]] = None,
    clip=DEFAULT_CLIP,
    p_O=None,
) -> NuisanceSet:
    """Train one SharedNuisanceNet on all rows and expose its heads as a NuisanceSet"""
    dataset.require_positivity()
    config = config or MLPConfig()
    net = SharedNuisanceNet(dataset.d, config, clip=clip)
    net.x_scaler = Standardizer.fit(dataset.x)
    net.s_scaler = Standardizer.fit(dataset.s)
    net.y_scaler = Standardizer.fit(dataset.y.compressed())

    targets, masks = build_targets(dataset, net.s_scaler, net.y_scaler)
    diagnostics = train(
        net,
        net.x_scaler.transform(dataset.x),
        targets,
        masks,
        weights=head_weight_vector(head_weights),
    )

    def head(name):
        return partial(_head_output, net=net, head=name)

    return NuisanceSet(
        mu_S_E=ArmPair(head("mu_S_E0"), head("mu_S_E1")),
        mu_S_O=ArmPair(head("mu_S_O0"), head("mu_S_O1")),
        mu_Y_O=ArmPair(head("mu_Y_O0"), head("mu_Y_O1")),
        pi_E=head("pi_E"),
        pi_O=head("pi_O"),
        pi_G=head("pi_G"),
        p_O=float(p_O) if p_O is not None else dataset.group_prior(),
        clip=clip,
        provenance={
            "backends": {name: "mlp-shared" for name in NUISANCE_NAMES},
            "training": {k: v for k, v in diagnostics.items() if k != "loss_history"},
            "head_weights": dict(head_weights or {}),
        },
    )
