"""Probability models: IRLS logistic regression, the quadratic-logit misspecified propensity, and constant frequencies"""
import logging
from functools import partial

import numpy as np
from scipy import linalg
from scipy.optimize import minimize_scalar
from scipy.special import expit

from src.common.errors import PreconditionError
from src.common.linalg_utils import solve_spd
from src.regress.specs import (
    DEFAULT_CLIP,
    FittedModel,
    check_binary_labels,
    check_training_data,
    clip_probabilities,
)

logger = logging.getLogger(__name__)

# Mean negative log-likelihood below which the classes are treated as separated
SEPARATION_NLL = 1e-6
MAX_STEP_HALVINGS = 30


def _require_both_classes(labels):
    if labels.min() == labels.max():
        raise PreconditionError("both classes must be present to fit a classifier")


def _logistic_predict(X, coef, intercept, clip):
    return clip_probabilities(expit(X @ coef + intercept), clip)


def _quadratic_logit_predict(X, alpha, clip):
    return clip_probabilities(expit(-alpha * X[:, 0] ** 2), clip)


def _constant_predict(X, value):
    return np.full(X.shape[0], value)


def _mean_nll(eta, labels):
    return float(np.mean(np.logaddexp(0.0, eta) - labels * eta))


def fit_logistic(X, labels, max_iter=100, tol=1e-8, clip=DEFAULT_CLIP) -> FittedModel:
    """Maximum-likelihood logistic regression by iteratively reweighted least squares"""
    X, labels = check_training_data(X, labels)
    labels = check_binary_labels(labels)
    _require_both_classes(labels)

    Z = np.column_stack([np.ones(X.shape[0]), X])
    beta = np.zeros(Z.shape[1])
    converged = False
    separated = False
    iterations = 0

    nll = _mean_nll(Z @ beta, labels)
    for iterations in range(1, max_iter + 1):
        p = expit(Z @ beta)
        weights = np.maximum(p * (1.0 - p), 1e-10)
        hessian = Z.T @ (weights[:, None] * Z) + 1e-10 * np.eye(Z.shape[1])
        gradient = Z.T @ (labels - p)
        try:
            step = solve_spd(hessian, gradient)
        except linalg.LinAlgError:
            separated = True
            break

        # damped Newton: halve the step until the likelihood does not get worse
        for _ in range(MAX_STEP_HALVINGS):
            new_nll = _mean_nll(Z @ (beta + step), labels)
            if new_nll <= nll:
                break
            step = 0.5 * step
        beta = beta + step
        change, nll = nll - new_nll, new_nll
        if nll < SEPARATION_NLL:
            separated = True
            break
        if np.max(np.abs(step)) < tol or abs(change) < tol * (1.0 + nll):
            converged = True
            break

    if separated:
        logger.warning(f"Logistic fit stopped at iteration {iterations}: classes look separated, probabilities will be clipped")
    elif not converged:
        logger.warning(f"Logistic fit did not converge in {max_iter} iterations")

    return FittedModel(
        predict_fn=partial(_logistic_predict, coef=beta[1:], intercept=float(beta[0]), clip=clip),
        kind="logistic",
        params={"coef": beta[1:], "intercept": float(beta[0]), "clip": clip},
        diagnostics={
            "iterations": iterations,
            "final_loss": nll,
            "converged": converged,
            "separation": separated,
        },
        is_classifier=True,
        n_features=X.shape[1],
    )


def _quadratic_logit_nll(alpha, q, labels):
    # p = 1 / (1 + exp(alpha * q)); logaddexp keeps both tails finite
    return float(
        np.sum(labels * np.logaddexp(0.0, alpha * q) + (1 - labels) * np.logaddexp(0.0, -alpha * q))
    )


def fit_misspec_propensity(X, labels, clip=DEFAULT_CLIP, bounds=(-50.0, 50.0)) -> FittedModel:
    """Fit alpha of p(a=1|x) = 1 / (1 + exp(alpha x^2)) by bounded scalar likelihood maximization"""
    X, labels = check_training_data(X, labels)
    if X.shape[1] != 1:
        raise PreconditionError(f"the quadratic-logit propensity needs a scalar covariate, got d={X.shape[1]}")
    labels = check_binary_labels(labels)
    _require_both_classes(labels)

    q = X[:, 0] ** 2
    result = minimize_scalar(
        _quadratic_logit_nll,
        bounds=tuple(bounds),
        args=(q, labels),
        method="bounded",
        options={"xatol": 1e-8},
    )
    alpha = float(result.x)

    return FittedModel(
        predict_fn=partial(_quadratic_logit_predict, alpha=alpha, clip=clip),
        kind="misspec-quadratic-logit",
        params={"alpha": alpha, "clip": clip},
        diagnostics={"iterations": int(result.nfev), "final_loss": float(result.fun) / X.shape[0]},
        is_classifier=True,
        n_features=1,
    )


def fit_frequency(labels, clip=DEFAULT_CLIP, complement=False) -> FittedModel:
    """Constant prediction: the sample frequency of label 1 (of label 0 when complement)"""
    labels = check_binary_labels(labels)
    if labels.shape[0] < 1:
        raise PreconditionError("at least one label is required")

    rate = float(labels.mean())
    if complement:
        rate = 1.0 - rate
    value = float(clip_probabilities(rate, clip))

    return FittedModel(
        predict_fn=partial(_constant_predict, value=value),
        kind="frequency",
        params={"value": value, "complement": complement, "clip": clip},
        diagnostics={"iterations": 0, "final_loss": 0.0},
        is_classifier=True,
    )
