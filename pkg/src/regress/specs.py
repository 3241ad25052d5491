"""Specs and the fitted-model container shared by all regression backends"""
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Optional

import numpy as np

from src.common.errors import PreconditionError

REGRESSOR_KINDS = ("ols", "ridge", "polynomial", "kernel-ridge", "mlp", "misspec-linear")
CLASSIFIER_KINDS = ("logistic", "frequency", "misspec-quadratic-logit", "mlp")
KERNEL_FAMILIES = ("rbf", "matern")

DEFAULT_CLIP = 0.01


@dataclass(frozen=True)
class RegressorSpec:
    kind: str = "kernel-ridge"
    degree: int = 2
    # None lets the backend choose (0 for linear fits, lambda_per_row * n for kernel ridge)
    penalty: Optional[float] = None
    kernel: str = "rbf"
    nu: float = 2.5
    bandwidth: Optional[float] = None
    mlp: Optional[Dict[str, Any]] = None

    def __post_init__(self):
        if self.kind not in REGRESSOR_KINDS:
            raise PreconditionError(f"unknown regressor kind '{self.kind}'")
        if self.kind == "polynomial" and int(self.degree) < 1:
            raise PreconditionError(f"polynomial degree must be >= 1, got {self.degree}")
        if self.penalty is not None and self.penalty < 0:
            raise PreconditionError(f"ridge penalty must be >= 0, got {self.penalty}")
        if self.kernel not in KERNEL_FAMILIES:
            raise PreconditionError(f"unknown kernel family '{self.kernel}'")

    def describe(self) -> Dict[str, Any]:
        desc = {"kind": self.kind}
        if self.kind == "polynomial":
            desc["degree"] = int(self.degree)
        if self.kind == "kernel-ridge":
            desc.update({"kernel": self.kernel, "bandwidth": self.bandwidth or "median"})
            if self.kernel == "matern":
                desc["nu"] = self.nu
        if self.penalty is not None:
            desc["penalty"] = self.penalty
        return desc


@dataclass(frozen=True)
class ClassifierSpec:
    kind: str = "logistic"
    clip: float = DEFAULT_CLIP
    # frequency kind: predict the frequency of the complementary label
    complement: bool = False
    mlp: Optional[Dict[str, Any]] = None

    def __post_init__(self):
        if self.kind not in CLASSIFIER_KINDS:
            raise PreconditionError(f"unknown classifier kind '{self.kind}'")
        if not 0.0 < self.clip < 0.5:
            raise PreconditionError(f"probability clip must lie in (0, 0.5), got {self.clip}")


@dataclass(frozen=True, eq=False)
class FittedModel:
    """Immutable prediction map with its parameters and training diagnostics"""

    predict_fn: Callable[[np.ndarray], np.ndarray]
    kind: str
    params: Dict[str, Any] = field(default_factory=dict)
    diagnostics: Dict[str, Any] = field(default_factory=dict)
    is_classifier: bool = False
    n_features: Optional[int] = None

    def predict(self, X) -> np.ndarray:
        X = as_design(X)
        if self.n_features is not None and X.shape[1] != self.n_features:
            raise PreconditionError(
                f"{self.kind} model expects {self.n_features} covariates, got {X.shape[1]}"
            )
        return np.asarray(self.predict_fn(X), dtype=float).reshape(-1)

    def __call__(self, X) -> np.ndarray:
        return self.predict(X)


def as_design(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    if X.ndim != 2:
        raise PreconditionError(f"design must be two-dimensional, got shape {X.shape}")
    return X


def check_training_data(X, y):
    X = as_design(X)
    y = np.asarray(y, dtype=float).reshape(-1)
    if X.shape[0] < 1:
        raise PreconditionError("at least one training row is required")
    if X.shape[0] != y.shape[0]:
        raise PreconditionError(f"design has {X.shape[0]} rows but target has {y.shape[0]}")
    if not (np.isfinite(X).all() and np.isfinite(y).all()):
        raise PreconditionError("training data must be finite")
    return X, y


def check_binary_labels(labels):
    labels = np.asarray(labels, dtype=float).reshape(-1)
    if not np.isin(labels, (0.0, 1.0)).all():
        raise PreconditionError("classifier labels must be 0/1")
    return labels


def clip_probabilities(p, clip):
    return np.clip(p, clip, 1.0 - clip)
