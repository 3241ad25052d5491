"""Spec-driven dispatch to the regression and classification backends"""
import logging
from typing import Any, Dict, Optional

from src.common.config import load_config
from src.common.errors import PreconditionError
from src.mlp.network import MLPConfig, fit_mlp_classifier, fit_mlp_regressor
from src.regress.kernel import fit_kernel_ridge
from src.regress.linear import fit_least_squares, fit_polynomial
from src.regress.logistic import fit_frequency, fit_logistic, fit_misspec_propensity
from src.regress.specs import ClassifierSpec, FittedModel, RegressorSpec

logger = logging.getLogger(__name__)


def _settings(config: Optional[Dict[str, Any]]) -> Dict[str, Any]:
    return config if config is not None else load_config()


def _mlp_config(spec_mlp, config, seed):
    return MLPConfig.from_settings({**config.get("mlp", {}), **(spec_mlp or {})}).with_seed(seed)


def fit_regressor(X, y, spec: RegressorSpec, config=None, seed=0) -> FittedModel:
    """Fit the regressor family named by spec.kind"""
    config = _settings(config)
    regress = config.get("regress", {})
    max_columns = regress.get("max_polynomial_columns", 10000)

    if spec.kind in ("ols", "misspec-linear"):
        return fit_least_squares(X, y, penalty=spec.penalty or 0.0)
    if spec.kind == "ridge":
        if not spec.penalty:
            raise PreconditionError("ridge regression needs a positive penalty")
        return fit_least_squares(X, y, penalty=spec.penalty)
    if spec.kind == "polynomial":
        return fit_polynomial(X, y, degree=spec.degree, penalty=spec.penalty or 0.0, max_columns=max_columns)
    if spec.kind == "kernel-ridge":
        kernel = regress.get("kernel", {})
        return fit_kernel_ridge(
            X,
            y,
            family=spec.kernel,
            penalty=spec.penalty,
            bandwidth=spec.bandwidth,
            nu=spec.nu,
            lambda_per_row=kernel.get("lambda_per_row", 1e-3),
            max_exact_points=kernel.get("max_exact_points", 4000),
            landmarks=kernel.get("landmarks", 1000),
            bandwidth_sample=kernel.get("bandwidth_sample", 2000),
            seed=seed,
        )
    if spec.kind == "mlp":
        return fit_mlp_regressor(X, y, _mlp_config(spec.mlp, config, seed))

    raise PreconditionError(f"unsupported regressor kind '{spec.kind}'")


def fit_classifier(X, labels, spec: ClassifierSpec, config=None, seed=0) -> FittedModel:
    """Fit the probability model named by spec.kind; outputs are clipped to [clip, 1 - clip]"""
    config = _settings(config)
    regress = config.get("regress", {})

    if spec.kind == "logistic":
        logistic = regress.get("logistic", {})
        return fit_logistic(
            X,
            labels,
            max_iter=logistic.get("max_iter", 100),
            tol=logistic.get("tol", 1e-8),
            clip=spec.clip,
        )
    if spec.kind == "frequency":
        return fit_frequency(labels, clip=spec.clip, complement=spec.complement)
    if spec.kind == "misspec-quadratic-logit":
        bounds = regress.get("misspec_propensity", {}).get("alpha_bounds", (-50.0, 50.0))
        return fit_misspec_propensity(X, labels, clip=spec.clip, bounds=bounds)
    if spec.kind == "mlp":
        return fit_mlp_classifier(X, labels, _mlp_config(spec.mlp, config, seed), clip=spec.clip)

    raise PreconditionError(f"unsupported classifier kind '{spec.kind}'")
