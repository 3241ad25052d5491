"""Feedforward networks, the masked multi-task loss and SGD with momentum"""
import logging
from dataclasses import dataclass, field, replace
from functools import partial
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import expit

from src.common.batch_utils import iter_minibatches
from src.common.errors import PreconditionError, TrainingError
from src.common.seeding import make_rng
from src.mlp.layers import ACTIVATIONS, Block, Dense
from src.regress.specs import DEFAULT_CLIP, FittedModel, check_binary_labels, check_training_data, clip_probabilities

logger = logging.getLogger(__name__)

SQUARED = "squared"
LOGISTIC = "logistic"


@dataclass(frozen=True)
class MLPConfig:
    widths: Tuple[int, ...] = (32, 32)
    activation: str = "relu"
    learning_rate: float = 1e-3
    weight_decay: float = 1e-4
    batch_size: int = 64
    dropout: float = 0.0
    epochs: int = 30
    momentum: float = 0.9
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        if any(w < 1 for w in self.widths):
            raise PreconditionError(f"layer widths must be >= 1, got {self.widths}")
        if self.activation not in ACTIVATIONS:
            raise PreconditionError(f"unknown activation '{self.activation}'")
        if self.learning_rate <= 0:
            raise PreconditionError(f"learning rate must be > 0, got {self.learning_rate}")
        if not 0.0 <= self.dropout < 1.0:
            raise PreconditionError(f"dropout must lie in [0, 1), got {self.dropout}")
        if self.weight_decay < 0 or self.batch_size < 1 or self.epochs < 1:
            raise PreconditionError("weight decay must be >= 0, batch size and epochs >= 1")
        if not 0.0 <= self.momentum < 1.0:
            raise PreconditionError(f"momentum must lie in [0, 1), got {self.momentum}")

    @classmethod
    def from_settings(cls, settings: Optional[Dict[str, Any]] = None, **overrides):
        """Build from the config.yaml `mlp` section, ignoring unknown keys"""
        known = set(cls.__dataclass_fields__)
        values = {k: v for k, v in (settings or {}).items() if k in known}
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)

    def with_seed(self, seed):
        return replace(self, seed=int(seed))


class Network:
    """Shared plumbing: parameters, gradients with weight decay, raw forward/backward"""

    config: MLPConfig
    head_kinds: Tuple[str, ...]

    def dense_layers(self) -> List[Dense]:
        raise NotImplementedError

    def forward_raw(self, X, training=False):
        raise NotImplementedError

    def backward(self, grad_raw):
        raise NotImplementedError

    def parameters(self) -> List[np.ndarray]:
        return [p for layer in self.dense_layers() for p in layer.parameters()]

    def gradients(self) -> List[np.ndarray]:
        wd = self.config.weight_decay
        grads = []
        for layer in self.dense_layers():
            grads.append(layer.grad_W + wd * layer.W)
            grads.append(layer.grad_b)
        return grads

    def penalty(self) -> float:
        return 0.5 * self.config.weight_decay * sum(float(np.sum(layer.W**2)) for layer in self.dense_layers())


def masked_multitask_loss(raw, targets, masks, kinds, weights=None):
    """Weighted sum over heads of the masked mean loss, and its gradient w.r.t. raw outputs

    Squared heads use (out - t)^2; logistic heads take logits with binary cross-entropy.
    Each head is averaged over its supervised rows only.
    """
    n_heads = raw.shape[1]
    weights = np.ones(n_heads) if weights is None else np.asarray(weights, dtype=float)
    grad = np.zeros_like(raw)
    total = 0.0

    for h in range(n_heads):
        mask = masks[:, h].astype(bool)
        count = int(mask.sum())
        if count == 0 or weights[h] == 0:
            continue
        out = raw[mask, h]
        t = targets[mask, h]
        if kinds[h] == SQUARED:
            residual = out - t
            total += weights[h] * float(np.mean(residual**2))
            grad[mask, h] = weights[h] * 2.0 * residual / count
        else:
            total += weights[h] * float(np.mean(np.logaddexp(0.0, out) - t * out))
            grad[mask, h] = weights[h] * (expit(out) - t) / count

    return total, grad


def loss_and_gradients(net: Network, batch, weights=None):
    """Loss (with weight decay) on one batch and the matching parameter gradients"""
    X, targets, masks = batch
    raw = net.forward_raw(X, training=True)
    loss, grad_raw = masked_multitask_loss(raw, targets, masks, net.head_kinds, weights)
    net.backward(grad_raw)
    return loss + net.penalty(), net.gradients()


class SGD:
    """Stochastic gradient descent with classical momentum, updating parameters in place"""

    def __init__(self, parameters: Sequence[np.ndarray], learning_rate, momentum=0.0):
        self.parameters = list(parameters)
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.velocity = [np.zeros_like(p) for p in self.parameters]

    def step(self, gradients):
        for param, vel, grad in zip(self.parameters, self.velocity, gradients):
            vel *= self.momentum
            vel -= self.learning_rate * grad
            param += vel


def backward_and_step(net: Network, batch, optimizer: SGD, weights=None) -> float:
    """One optimizer step on the masked multi-task loss; returns the pre-step loss"""
    loss, grads = loss_and_gradients(net, batch, weights)
    if not np.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads):
        raise TrainingError(
            f"non-finite training loss ({loss})",
            diagnostics={"loss": loss, "learning_rate": optimizer.learning_rate},
        )
    optimizer.step(grads)
    return loss


def train(net: Network, X, targets, masks, weights=None) -> Dict[str, Any]:
    """Run the configured number of epochs of minibatch SGD"""
    config = net.config
    rng = make_rng(config.seed + 1)
    optimizer = SGD(net.parameters(), config.learning_rate, config.momentum)
    history = []
    steps = 0

    for epoch in range(config.epochs):
        epoch_losses = []
        for idx in iter_minibatches(X.shape[0], config.batch_size, rng):
            loss = backward_and_step(net, (X[idx], targets[idx], masks[idx]), optimizer, weights)
            epoch_losses.append(loss)
            steps += 1
        history.append(float(np.mean(epoch_losses)))

    logger.info(f"Trained {type(net).__name__} for {config.epochs} epochs, final loss {history[-1]:.4f}")
    return {"iterations": steps, "final_loss": history[-1], "loss_history": history}


@dataclass
class Standardizer:
    mean: np.ndarray = field(default_factory=lambda: np.zeros(1))
    scale: np.ndarray = field(default_factory=lambda: np.ones(1))

    @classmethod
    def fit(cls, values):
        values = np.asarray(values, dtype=float)
        mean = values.mean(axis=0)
        scale = values.std(axis=0)
        return cls(mean=mean, scale=np.where(scale > 0, scale, 1.0))

    def transform(self, values):
        return (values - self.mean) / self.scale

    def inverse(self, values):
        return values * self.scale + self.mean


class MLP(Network):
    """Trunk of hidden blocks followed by one dense output layer"""

    def __init__(self, n_in, config: MLPConfig, n_out=1, head_kind=SQUARED):
        rng = make_rng(config.seed)
        self.config = config
        self.n_in = n_in
        self.trunk = Block.hidden(config.widths, n_in, config.activation, rng, config.dropout)
        self.head = Dense(self.trunk.n_out or n_in, n_out, rng)
        self.head_kinds = (head_kind,) * n_out

    def dense_layers(self):
        return [layer for layer in self.trunk.layers if isinstance(layer, Dense)] + [self.head]

    def forward_raw(self, X, training=False):
        return self.head.forward(self.trunk.forward(X, training=training), training=training)

    def backward(self, grad_raw):
        return self.trunk.backward(self.head.backward(grad_raw))


def _mlp_regress_predict(X, net, x_scaler, y_scaler):
    return y_scaler.inverse(net.forward_raw(x_scaler.transform(X))[:, 0])


def _mlp_classify_predict(X, net, x_scaler, clip):
    return clip_probabilities(expit(net.forward_raw(x_scaler.transform(X))[:, 0]), clip)


def fit_mlp_regressor(X, y, config: MLPConfig) -> FittedModel:
    X, y = check_training_data(X, y)
    x_scaler = Standardizer.fit(X)
    y_scaler = Standardizer.fit(y)
    net = MLP(X.shape[1], config)

    ones = np.ones((X.shape[0], 1))
    diagnostics = train(net, x_scaler.transform(X), y_scaler.transform(y).reshape(-1, 1), ones)

    return FittedModel(
        predict_fn=partial(_mlp_regress_predict, net=net, x_scaler=x_scaler, y_scaler=y_scaler),
        kind="mlp",
        params={"config": config},
        diagnostics=diagnostics,
        n_features=X.shape[1],
    )


def fit_mlp_classifier(X, labels, config: MLPConfig, clip=DEFAULT_CLIP) -> FittedModel:
    X, labels = check_training_data(X, labels)
    labels = check_binary_labels(labels)
    if labels.min() == labels.max():
        raise PreconditionError("both classes must be present to fit a classifier")
    x_scaler = Standardizer.fit(X)
    net = MLP(X.shape[1], config, head_kind=LOGISTIC)

    ones = np.ones((X.shape[0], 1))
    diagnostics = train(net, x_scaler.transform(X), labels.reshape(-1, 1), ones)

    return FittedModel(
        predict_fn=partial(_mlp_classify_predict, net=net, x_scaler=x_scaler, clip=clip),
        kind="mlp",
        params={"config": config, "clip": clip},
        diagnostics=diagnostics,
        is_classifier=True,
        n_features=X.shape[1],
    )
