"""Kernel ridge regression with a median-heuristic bandwidth and a Nystroem path for large n"""
import logging
from functools import partial

import numpy as np
from scipy import linalg
from scipy.spatial.distance import pdist

from src.common.batch_utils import predict_in_chunks
from src.common.errors import PreconditionError
from src.common.linalg_utils import cholesky_with_jitter, solve_spd
from src.common.seeding import make_rng
from src.regress.specs import FittedModel, check_training_data
from src.simgen.kernels import matern_gram, rbf_gram

logger = logging.getLogger(__name__)


def median_bandwidth(X, sample=2000, seed=0):
    """Median pairwise Euclidean distance, on a seeded subsample above `sample` rows"""
    X = np.asarray(X, dtype=float).reshape(len(X), -1)
    if X.shape[0] > sample:
        X = X[make_rng(seed).choice(X.shape[0], size=sample, replace=False)]
    if X.shape[0] < 2:
        return 1.0
    median = float(np.median(pdist(X)))
    return median if median > 0 else 1.0


def kernel_matrix(A, B, family="rbf", bandwidth=1.0, nu=2.5):
    if family == "rbf":
        return rbf_gram(A, B, bandwidth)
    if family == "matern":
        return matern_gram(A, B, length_scale=bandwidth, nu=nu)
    raise PreconditionError(f"unknown kernel family '{family}'")


def _kernel_predict(X, centers, weights, offset, family, bandwidth, nu):
    def page(chunk):
        return kernel_matrix(chunk, centers, family, bandwidth, nu) @ weights + offset

    return predict_in_chunks(page, X)


def fit_kernel_ridge(
    X,
    y,
    family="rbf",
    penalty=None,
    bandwidth=None,
    nu=2.5,
    lambda_per_row=1e-3,
    max_exact_points=4000,
    landmarks=1000,
    bandwidth_sample=2000,
    seed=0,
) -> FittedModel:
    """Solve (K + lambda I) alpha = y - mean(y) and predict k(x, X) alpha + mean(y)"""
    X, y = check_training_data(X, y)
    n = X.shape[0]
    if penalty is None:
        penalty = lambda_per_row * n
    penalty = float(penalty)
    if penalty <= 0:
        raise PreconditionError(f"kernel ridge needs a positive penalty, got {penalty}")
    if bandwidth is None:
        bandwidth = median_bandwidth(X, sample=bandwidth_sample, seed=seed)

    offset = float(y.mean())
    yc = y - offset

    if n <= max_exact_points:
        gram = kernel_matrix(X, X, family, bandwidth, nu)
        lower = cholesky_with_jitter(gram + penalty * np.eye(n))
        weights = linalg.cho_solve((lower, True), yc)
        centers = X
        solver = "exact"
        n_landmarks = n
    else:
        # subset of regressors on a Nystroem feature map
        n_landmarks = min(int(landmarks), n)
        logger.warning(f"Kernel ridge on {n} rows uses a Nystroem approximation with {n_landmarks} landmarks")
        idx = np.sort(make_rng(seed).choice(n, size=n_landmarks, replace=False))
        centers = X[idx]
        eigvals, eigvecs = linalg.eigh(kernel_matrix(centers, centers, family, bandwidth, nu))
        keep = eigvals > 1e-12 * eigvals.max()
        projection = eigvecs[:, keep] / np.sqrt(eigvals[keep])

        features = kernel_matrix(X, centers, family, bandwidth, nu) @ projection
        beta = solve_spd(features.T @ features + penalty * np.eye(features.shape[1]), features.T @ yc)
        weights = projection @ beta
        solver = "nystroem"

    fitted = _kernel_predict(X, centers, weights, offset, family, bandwidth, nu)

    return FittedModel(
        predict_fn=partial(
            _kernel_predict,
            centers=centers,
            weights=weights,
            offset=offset,
            family=family,
            bandwidth=bandwidth,
            nu=nu,
        ),
        kind="kernel-ridge",
        params={"family": family, "bandwidth": bandwidth, "penalty": penalty, "nu": nu},
        diagnostics={
            "iterations": 1,
            "final_loss": float(np.mean((y - fitted) ** 2)),
            "solver": solver,
            "landmarks": n_landmarks,
        },
        n_features=X.shape[1],
    )
