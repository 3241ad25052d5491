"""Least squares, ridge and polynomial regression"""
import logging
import math
from functools import partial

import numpy as np
from sklearn.preprocessing import PolynomialFeatures

from src.common.errors import PreconditionError, RankDeficientError
from src.common.linalg_utils import solve_spd
from src.regress.specs import FittedModel, as_design, check_training_data

logger = logging.getLogger(__name__)

DEFAULT_MAX_COLUMNS = 10000


def polynomial_column_count(d, degree):
    return math.comb(d + degree, degree) - 1


def polynomial_features(X, degree, max_columns=DEFAULT_MAX_COLUMNS):
    """All monomials of total degree <= degree, graded lexicographic, no intercept column"""
    degree = int(degree)
    if degree < 1:
        raise PreconditionError(f"polynomial degree must be >= 1, got {degree}")
    X = as_design(X)

    n_columns = polynomial_column_count(X.shape[1], degree)
    if n_columns > max_columns:
        raise PreconditionError(
            f"degree {degree} over {X.shape[1]} inputs gives {n_columns} columns, above the cap of {max_columns}"
        )
    if degree == 1:
        return X.copy()
    return PolynomialFeatures(degree=degree, include_bias=False).fit_transform(X)


def _affine_predict(X, coef, intercept):
    return X @ coef + intercept


def _polynomial_predict(X, coef, intercept, degree, max_columns):
    return polynomial_features(X, degree, max_columns) @ coef + intercept


def _solve_centered(X, y, penalty):
    x_mean = X.mean(axis=0)
    y_mean = y.mean()
    Xc = X - x_mean
    yc = y - y_mean

    if penalty == 0 and np.linalg.matrix_rank(Xc) < X.shape[1]:
        raise RankDeficientError(
            f"design of rank {np.linalg.matrix_rank(Xc)} < {X.shape[1]} columns; use a ridge penalty lambda > 0"
        )

    gram = Xc.T @ Xc + penalty * np.eye(X.shape[1])
    coef = solve_spd(gram, Xc.T @ yc)
    intercept = float(y_mean - x_mean @ coef)
    return coef, intercept


def fit_least_squares(X, y, penalty=0.0) -> FittedModel:
    """Minimize sum (y - X b - b0)^2 + penalty * |b|^2 with an unpenalized intercept"""
    X, y = check_training_data(X, y)
    penalty = float(penalty or 0.0)
    if penalty < 0:
        raise PreconditionError(f"ridge penalty must be >= 0, got {penalty}")

    coef, intercept = _solve_centered(X, y, penalty)
    residuals = y - (X @ coef + intercept)

    return FittedModel(
        predict_fn=partial(_affine_predict, coef=coef, intercept=intercept),
        kind="ridge" if penalty > 0 else "ols",
        params={"coef": coef, "intercept": intercept, "penalty": penalty},
        diagnostics={"iterations": 1, "final_loss": float(np.mean(residuals**2))},
        n_features=X.shape[1],
    )


def fit_polynomial(X, y, degree=2, penalty=0.0, max_columns=DEFAULT_MAX_COLUMNS) -> FittedModel:
    X, y = check_training_data(X, y)
    features = polynomial_features(X, degree, max_columns)
    base = fit_least_squares(features, y, penalty)

    return FittedModel(
        predict_fn=partial(
            _polynomial_predict,
            coef=base.params["coef"],
            intercept=base.params["intercept"],
            degree=int(degree),
            max_columns=max_columns,
        ),
        kind="polynomial",
        params={**base.params, "degree": int(degree)},
        diagnostics=base.diagnostics,
        n_features=X.shape[1],
    )
