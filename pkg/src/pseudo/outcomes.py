"""Naive plug-in effect and the reg / pro / mr pseudo outcomes, vectorized over panel rows"""
from enum import Enum
from typing import Tuple

import numpy as np

from src.dataset.panel import PanelDataset
from src.nuisance.types import NuisanceSet, NuisanceValues


class PseudoKind(str, Enum):
    REG = "reg"
    PRO = "pro"
    MR = "mr"


def arm_sign(a):
    """(-1)^(1-a)"""
    return 2.0 * np.asarray(a, dtype=float) - 1.0


def signed_inverse_weight(a, pi):
    """(-1)^(1-a) / (1 - a + (-1)^(1-a) pi): 1/pi for a=1, -1/(1-pi) for a=0"""
    a = np.asarray(a, dtype=float)
    sign = arm_sign(a)
    return sign / (1.0 - a + sign * np.asarray(pi, dtype=float))


def tau_naive(X, ns: NuisanceSet) -> np.ndarray:
    """mu_Y^O(1,x) - mu_Y^O(0,x) + mu_S^E(1,x) - mu_S^E(0,x) + mu_S^O(0,x) - mu_S^O(1,x)"""
    return ns.evaluate(X).plug_in()


def _row_parts(dataset: PanelDataset, ns: NuisanceSet):
    values = ns.evaluate(dataset.x)
    is_obs = dataset.is_observational
    # y is masked on experimental rows; those entries never reach the output
    y = dataset.y_filled(0.0)
    return values, is_obs, dataset.a.astype(float), dataset.s, y


def pseudo_reg(dataset: PanelDataset, ns: NuisanceSet) -> np.ndarray:
    values, is_obs, a, s, y = _row_parts(dataset, ns)
    sign = arm_sign(a)
    other = 1.0 - a

    observational = (
        sign * (y - values.at_arm("mu_Y_O", other) - s + values.at_arm("mu_S_O", other))
        + values.mu_S_E1 - values.mu_S_E0
    )
    experimental = (
        sign * (s - values.at_arm("mu_S_E", other))
        + values.mu_Y_O1 - values.mu_Y_O0
        + values.mu_S_O0 - values.mu_S_O1
    )
    return np.where(is_obs, observational, experimental)


def _group_weights(values: NuisanceValues, is_obs, a):
    """Experimental and observational weights, each zero outside its own group"""
    w_exp = np.where(
        is_obs,
        0.0,
        signed_inverse_weight(a, values.pi_E) / values.p_O * (1.0 / values.pi_G - 1.0),
    )
    w_obs = np.where(is_obs, signed_inverse_weight(a, values.pi_O) / values.p_O, 0.0)
    return w_exp, w_obs


def pseudo_pro(dataset: PanelDataset, ns: NuisanceSet) -> np.ndarray:
    values, is_obs, a, s, y = _row_parts(dataset, ns)
    w_exp, w_obs = _group_weights(values, is_obs, a)
    return w_exp * s + w_obs * (y - s)


def pseudo_mr_terms(dataset: PanelDataset, ns: NuisanceSet) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(experimental correction, observational correction, plug-in contrast) per row"""
    values, is_obs, a, s, y = _row_parts(dataset, ns)
    w_exp, w_obs = _group_weights(values, is_obs, a)

    exp_residual = s - values.at_arm("mu_S_E", a)
    obs_residual = y - values.at_arm("mu_Y_O", a) - s + values.at_arm("mu_S_O", a)
    experimental = np.where(is_obs, 0.0, w_exp * exp_residual)
    observational = np.where(is_obs, w_obs * obs_residual, 0.0)
    return experimental, observational, values.plug_in()


def pseudo_mr(dataset: PanelDataset, ns: NuisanceSet) -> np.ndarray:
    experimental, observational, plug_in = pseudo_mr_terms(dataset, ns)
    return experimental + observational + plug_in


PSEUDO_OUTCOMES = {
    PseudoKind.REG: pseudo_reg,
    PseudoKind.PRO: pseudo_pro,
    PseudoKind.MR: pseudo_mr,
}


def pseudo_outcome(kind, dataset: PanelDataset, ns: NuisanceSet) -> np.ndarray:
    return PSEUDO_OUTCOMES[PseudoKind(kind)](dataset, ns)
