"""Analytic nuisances of the closed-form simulated dataset

Derived from the generating process by conditional-Gaussian algebra:
in the experimental group U is independent of X, in the observational group
E[U | x, a] = (a - 1/2) (x - (1 - 2a)/2). The within-group propensities follow
from the Gaussian class-conditionals (log-odds x in E, -x in O) and the two
groups share one X marginal, so p(G=E | x) is constant.
"""
from functools import partial

import numpy as np
from scipy.special import expit

from src.nuisance.types import ArmPair, NuisanceSet, NUISANCE_NAMES
from src.regress.specs import DEFAULT_CLIP, as_design

# (constant, x, x^2) coefficients per arm
MU_S_E = {0: (1.0, 1.0, 0.5), 1: (2.0, 3.0, 1.5)}
MU_S_O = {0: (1.25, 0.5, 0.5), 1: (2.25, 3.5, 1.5)}
MU_Y_O = {0: (1.25, -0.5, 0.5), 1: (3.25, 2.5, 1.5)}


def _quadratic(X, coefs):
    x = as_design(X)[:, 0]
    return coefs[0] + coefs[1] * x + coefs[2] * x**2


def _logit_slope(X, slope):
    return expit(slope * as_design(X)[:, 0])


def _constant(X, value):
    return np.full(as_design(X).shape[0], value)


def true_tau_dataset1(X):
    """tau(x) = 2 + 2x + x^2"""
    return _quadratic(X, (2.0, 2.0, 1.0))


def _pair(table):
    return ArmPair(partial(_quadratic, coefs=table[0]), partial(_quadratic, coefs=table[1]))


def oracle_nuisances_dataset1(p_O=0.6, clip=DEFAULT_CLIP) -> NuisanceSet:
    """All six nuisances in closed form; pi_G is the experimental share 1 - p_O"""
    return NuisanceSet(
        mu_S_E=_pair(MU_S_E),
        mu_S_O=_pair(MU_S_O),
        mu_Y_O=_pair(MU_Y_O),
        pi_E=partial(_logit_slope, slope=1.0),
        pi_O=partial(_logit_slope, slope=-1.0),
        pi_G=partial(_constant, value=1.0 - p_O),
        p_O=p_O,
        clip=clip,
        provenance={"backends": {name: "oracle" for name in NUISANCE_NAMES}, "oracle": "dataset1"},
    )


ORACLES = {"dataset1": oracle_nuisances_dataset1}
