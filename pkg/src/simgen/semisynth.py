"""IHDP-style and News-style semi-synthetic generators over a user covariate matrix

Covariate columns are split into observed X and unobserved U. Group and
treatment assignment follow logistic forms with sampled weights; outcomes
follow preset structural equations. Offsets are calibrated against the
preset targets unless given explicitly.
"""
import logging
from dataclasses import dataclass, replace
from typing import Dict, Optional, Tuple

import numpy as np
from scipy.optimize import bisect
from scipy.special import expit, logit

from src.common.config import load_config
from src.common.errors import CalibrationError, PreconditionError
from src.common.seeding import derive_seed, make_rng
from src.dataset.panel import EXPERIMENTAL, OBSERVATIONAL, GroundTruth, PanelDataset
from src.simgen.synthetic import GenOutput

logger = logging.getLogger(__name__)

PRESETS = ("ihdp", "news")
OFFSET_NAMES = ("g", "e", "o")


@dataclass(frozen=True, eq=False)
class SemiSynthParams:
    covariates: np.ndarray
    preset: str = "ihdp"
    unobserved: Optional[Tuple[int, ...]] = None
    unobserved_count: Optional[int] = None
    coefficient_seed: Optional[int] = None
    offsets: Optional[Dict[str, float]] = None
    exp_fraction: float = 1.0 / 3.0
    expected_columns: Optional[int] = None
    propensity_bounds: Tuple[float, float] = (0.05, 0.95)
    coefficient_values: Tuple[float, ...] = (0.0, 0.1, 0.2, 0.3, 0.4)
    coefficient_probs: Tuple[float, ...] = (0.6, 0.1, 0.1, 0.1, 0.1)
    bisection_maxiter: int = 200
    standardize: bool = True
    noise_s: float = 1.0
    noise_y: float = 1.0

    def __post_init__(self):
        if self.preset not in PRESETS:
            raise PreconditionError(f"unknown semi-synthetic preset '{self.preset}'")
        X = np.asarray(self.covariates, dtype=float)
        if X.ndim != 2 or X.shape[0] < 4 or X.shape[1] < 2:
            raise PreconditionError(f"covariates must be a matrix with >= 4 rows and >= 2 columns, got {X.shape}")
        if not np.all(np.isfinite(X)):
            raise PreconditionError("covariates contain non-finite values")
        object.__setattr__(self, "covariates", X)

        if self.unobserved is not None:
            cols = tuple(int(c) for c in self.unobserved)
            if len(set(cols)) != len(cols) or not all(0 <= c < X.shape[1] for c in cols):
                raise PreconditionError(f"invalid unobserved column indices {cols}")
            if not 0 < len(cols) < X.shape[1]:
                raise PreconditionError("observed and unobserved column sets must both be non-empty")
            object.__setattr__(self, "unobserved", cols)
        if not 0.0 < self.exp_fraction < 1.0:
            raise PreconditionError(f"exp_fraction must be in (0, 1), got {self.exp_fraction}")
        lo, hi = self.propensity_bounds
        if not 0.0 < lo < hi < 1.0:
            raise PreconditionError(f"invalid propensity bounds {self.propensity_bounds}")
        if len(self.coefficient_values) != len(self.coefficient_probs) or not np.isclose(sum(self.coefficient_probs), 1.0):
            raise PreconditionError("coefficient probabilities must match the values and sum to 1")
        if self.offsets is not None and set(self.offsets) != set(OFFSET_NAMES):
            raise PreconditionError(f"offsets must name exactly {OFFSET_NAMES}")

    @classmethod
    def from_preset(cls, preset, covariates, settings=None, **overrides) -> "SemiSynthParams":
        """Preset targets and coefficient laws from the generators section of config.yaml"""
        settings = settings if settings is not None else load_config()
        generators = settings.get("generators", {})
        semisynth = generators.get("semisynth", {})
        if preset not in PRESETS:
            raise PreconditionError(f"unknown semi-synthetic preset '{preset}'")
        target = semisynth.get(preset, {})
        kwargs = {
            "covariates": covariates,
            "preset": preset,
            "exp_fraction": target.get("exp_fraction", 1.0 / 3.0 if preset == "ihdp" else 0.2),
            "expected_columns": target.get("expected_columns"),
            "unobserved_count": target.get("unobserved"),
            "propensity_bounds": tuple(semisynth.get("propensity_bounds", (0.05, 0.95))),
            "bisection_maxiter": semisynth.get("bisection_maxiter", 200),
            "coefficient_values": tuple(semisynth.get("coefficient_values", (0.0, 0.1, 0.2, 0.3, 0.4))),
            "coefficient_probs": tuple(semisynth.get("coefficient_probs", (0.6, 0.1, 0.1, 0.1, 0.1))),
            "noise_s": generators.get("noise_s", 1.0),
            "noise_y": generators.get("noise_y", 1.0),
        }
        kwargs.update(overrides)
        return cls(**kwargs)

    def with_offsets(self, offsets) -> "SemiSynthParams":
        return replace(self, offsets=dict(offsets))


def _unobserved_columns(params: SemiSynthParams, rng) -> np.ndarray:
    d = params.covariates.shape[1]
    if params.unobserved is not None:
        return np.sort(np.asarray(params.unobserved, dtype=int))
    count = params.unobserved_count
    if params.expected_columns is not None and d != params.expected_columns:
        logger.warning(f"{params.preset} preset expects {params.expected_columns} covariate columns, got {d}")
        # keep the preset's observed/unobserved ratio
        count = round(d * params.unobserved_count / params.expected_columns) if count else None
    if not count:
        count = max(1, d // 3)
    count = int(min(max(count, 1), d - 1))
    return np.sort(rng.choice(d, size=count, replace=False))


def _standardize(X):
    scale = X.std(axis=0)
    scale[scale == 0.0] = 1.0
    return (X - X.mean(axis=0)) / scale


def sample_sparse_coefficients(size, rng, values=(0.0, 0.1, 0.2, 0.3, 0.4), probs=(0.6, 0.1, 0.1, 0.1, 0.1)):
    """Entries drawn independently from a small value set"""
    return rng.choice(np.asarray(values, dtype=float), size=size, p=np.asarray(probs, dtype=float))


def normalized_mean_weights(size, rng):
    """V / mean(V) with V ~ N(1, I)"""
    raw = rng.normal(1.0, 1.0, size=size)
    mean = raw.mean()
    if abs(mean) < 1e-12:
        raise CalibrationError("weight vector has a zero mean", achieved={"mean": float(mean)})
    return raw / mean


def calibrate_group_offset(logits, target, maxiter=200) -> float:
    """Offset c with mean(sigmoid(logits - c)) equal to target"""
    def gap(offset):
        return float(expit(logits - offset).mean() - target)

    span = float(np.max(np.abs(logits))) + 50.0
    lo, hi = -span, span
    if gap(lo) * gap(hi) > 0:
        raise CalibrationError(
            f"group fraction {target} not reachable",
            achieved={"low": gap(lo) + target, "high": gap(hi) + target},
        )
    try:
        return bisect(gap, lo, hi, xtol=1e-10, maxiter=maxiter)
    except RuntimeError as err:
        raise CalibrationError(f"group offset bisection did not converge: {err}", achieved={"target": target}) from err


def center_offset(logits, bounds=(0.05, 0.95)) -> float:
    """Offset centring the logit range inside the logit bounds

    Treatment offsets need no search: every row lands inside the bounds for some
    offset exactly when the logit range is narrower than logit(hi) - logit(lo), and
    this midpoint is then one such offset. Wider ranges cannot be fitted by any
    offset; the midpoint splits the overflow evenly and sample_semisynth clips
    (and counts) the rows left outside.
    """
    lo, hi = (float(logit(b)) for b in bounds)
    return 0.5 * (float(np.max(logits)) + float(np.min(logits))) - 0.5 * (lo + hi)


def _bounded(p, bounds, name):
    """Clip to the bounds; returns the clipped probabilities and the number of rows moved"""
    lo, hi = bounds
    outside = int(np.sum((p < lo) | (p > hi)))
    if outside:
        logger.warning(
            f"{name}: {outside} rows outside [{lo}, {hi}] after calibration (range {p.min():.4f}..{p.max():.4f}); clipping"
        )
    return np.clip(p, lo, hi), outside


def _assignment_logits(preset, X, U, rng):
    """Group, experimental-treatment and observational-treatment logits before offsets"""
    dx, du = X.shape[1], U.shape[1]
    if preset == "ihdp":
        w_g, w_e, w_ox = (rng.standard_normal(dx) for _ in range(3))
        w_ou = rng.standard_normal(du)
        return X @ w_g, X @ w_e, X @ w_ox + 3.0 * (U @ w_ou)
    v1, v2, v3 = (normalized_mean_weights(dx, rng) for _ in range(3))
    v4 = normalized_mean_weights(du, rng)
    return -(X @ v1), -(X @ v2), -(X @ v3) - U @ v4


def _ihdp_outcomes(X, U, params, rng):
    dx, du = X.shape[1], U.shape[1]
    def draw(size):
        return sample_sparse_coefficients(size, rng, params.coefficient_values, params.coefficient_probs)

    w_s1, w_s0, w_y1, w_y0 = (draw(dx) for _ in range(4))
    w_u = draw(du)
    confounding = U @ w_u
    base_s1 = X @ w_s1 + 4.0
    base_s0 = np.exp((X + 0.5) @ w_s0)
    base_y1 = X @ w_y1 + 8.0
    base_y0 = np.exp((X + 0.5) @ w_y0)
    return base_s0, base_s1, base_y0, base_y1, confounding


def _news_outcomes(X, U, params, rng):
    dx, du = X.shape[1], U.shape[1]
    v5, v7, v8, v9 = (rng.normal(1.0, 1.0, size=dx) for _ in range(4))
    v6 = rng.normal(1.0, 1.0, size=du)
    X2 = X**2
    confounding = U @ v6
    base_s1 = X @ v5 + X2 @ v5
    base_s0 = 2.0 * (X @ v7) + 3.0 * (X2 @ v7)
    base_y1 = X @ v8 + X2 @ v8 + 4.0
    base_y0 = 2.0 * (X @ v9) + 3.0 * (X2 @ v9)
    return base_s0, base_s1, base_y0, base_y1, confounding


OUTCOME_EQUATIONS = {"ihdp": _ihdp_outcomes, "news": _news_outcomes}


def sample_semisynth(params: SemiSynthParams, seed) -> GenOutput:
    """Draw one semi-synthetic panel with per-row analytic tau"""
    coefficient_rng = make_rng(params.coefficient_seed if params.coefficient_seed is not None else derive_seed(seed, 0))
    rng = make_rng(derive_seed(seed, 1))

    covariates = _standardize(params.covariates) if params.standardize else params.covariates
    hidden = _unobserved_columns(params, coefficient_rng)
    observed = np.setdiff1d(np.arange(covariates.shape[1]), hidden)
    X, U = covariates[:, observed], covariates[:, hidden]
    n = X.shape[0]

    logit_g, logit_e, logit_o = _assignment_logits(params.preset, X, U, coefficient_rng)
    if params.offsets is not None:
        offsets = {name: float(params.offsets[name]) for name in OFFSET_NAMES}
    else:
        offsets = {
            "g": calibrate_group_offset(logit_g, params.exp_fraction, params.bisection_maxiter),
            "e": center_offset(logit_e, params.propensity_bounds),
            "o": center_offset(logit_o, params.propensity_bounds),
        }
    p_g = expit(logit_g - offsets["g"])
    p_e, clipped_e = _bounded(expit(logit_e - offsets["e"]), params.propensity_bounds, "p_e")
    p_o, clipped_o = _bounded(expit(logit_o - offsets["o"]), params.propensity_bounds, "p_o")

    is_exp = rng.random(n) < p_g
    g = np.where(is_exp, EXPERIMENTAL, OBSERVATIONAL)
    a = (rng.random(n) < np.where(is_exp, p_e, p_o)).astype(int)

    base_s0, base_s1, base_y0, base_y1, confounding = OUTCOME_EQUATIONS[params.preset](X, U, params, coefficient_rng)
    eps_s = params.noise_s * rng.standard_normal(n)
    eps_y0 = params.noise_y * rng.standard_normal(n)
    eps_y1 = params.noise_y * rng.standard_normal(n)
    s0 = base_s0 + confounding + eps_s
    s1 = base_s1 + confounding + eps_s
    y0 = base_y0 + 2.0 * confounding - s0 + eps_y0
    y1 = base_y1 + 2.0 * confounding - s1 + eps_y1
    # U and the shared short-term noise cancel in the contrast
    tau = base_y1 - base_y0 - (base_s1 - base_s0)

    s = np.where(a == 1, s1, s0)
    y = np.where(is_exp, np.nan, np.where(a == 1, y1, y0))
    dataset = PanelDataset.from_arrays(g=g, a=a, x=X, s=s, y=y)
    truth = GroundTruth(tau=tau, s0=s0, s1=s1, y0=y0, y1=y1)

    achieved = float(is_exp.mean())
    logger.info(
        f"Sampled {params.preset} panel: n={n}, observed={X.shape[1]}, unobserved={U.shape[1]}, "
        f"experimental share {achieved:.3f} (target {params.exp_fraction:.3f})"
    )
    return GenOutput(
        dataset=dataset,
        truth=truth,
        meta={
            "generator": params.preset,
            "seed": seed,
            "offsets": offsets,
            "unobserved": [int(c) for c in hidden],
            "exp_fraction": achieved,
            "p_e": p_e,
            "p_o": p_o,
            "p_g": p_g,
            "clipped": {"p_e": clipped_e, "p_o": clipped_o},
        },
    )


def placeholder_covariates(preset, n, seed) -> np.ndarray:
    """Stand-in covariates with the preset's column count when no covariate file is supplied"""
    rng = make_rng(seed)
    if preset == "ihdp":
        # 6 continuous and 19 binary columns
        continuous = rng.standard_normal((n, 6))
        binary = rng.binomial(1, 0.3, size=(n, 19)).astype(float)
        return np.hstack([continuous, binary])
    if preset == "news":
        return rng.poisson(0.5, size=(n, 498)).astype(float)
    raise PreconditionError(f"unknown semi-synthetic preset '{preset}'")
