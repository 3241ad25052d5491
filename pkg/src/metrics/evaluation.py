"""Evaluation metrics, empirical convergence rates and replication summaries"""
import logging
from dataclasses import asdict, dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import stats

from src.common.errors import PreconditionError

logger = logging.getLogger(__name__)


def _paired(tau_hat, tau):
    tau_hat = np.asarray(tau_hat, dtype=float).reshape(-1)
    tau = np.asarray(tau, dtype=float).reshape(-1)
    if tau_hat.shape != tau.shape:
        raise PreconditionError(f"length mismatch: {tau_hat.shape[0]} estimates for {tau.shape[0]} truths")
    if tau.shape[0] == 0:
        raise PreconditionError("metrics need at least one row")
    return tau_hat, tau


def pehe(tau_hat, tau) -> float:
    """Root mean squared error of the effect estimates"""
    tau_hat, tau = _paired(tau_hat, tau)
    return float(np.sqrt(np.mean((tau_hat - tau) ** 2)))


def ate_error(tau_hat, tau, normalized=True) -> float:
    """|mean(tau) - mean(tau_hat)|, or the difference of sums when normalized is False"""
    tau_hat, tau = _paired(tau_hat, tau)
    if normalized:
        return float(abs(tau.mean() - tau_hat.mean()))
    return float(abs(tau.sum() - tau_hat.sum()))


def rate_slope(points: Iterable[Tuple[float, float]]) -> float:
    """OLS slope of log(err) on log(n)"""
    points = list(points)
    if len(points) < 3:
        raise PreconditionError(f"rate_slope needs at least 3 points, got {len(points)}")
    n = np.array([p[0] for p in points], dtype=float)
    err = np.array([p[1] for p in points], dtype=float)
    if np.unique(n).shape[0] != n.shape[0]:
        raise PreconditionError("rate_slope needs distinct sample sizes")
    if np.any(n <= 0):
        raise PreconditionError("sample sizes must be positive")
    if np.any(~np.isfinite(err)) or np.any(err <= 0):
        raise PreconditionError("errors must be finite and positive")
    return float(stats.linregress(np.log(n), np.log(err)).slope)


def spearman_trend(sizes: Sequence[float], values: Sequence[float]) -> float:
    """Rank correlation between sample size and a metric"""
    if len(sizes) != len(values) or len(sizes) < 2:
        raise PreconditionError("spearman_trend needs two equal-length sequences of at least 2 entries")
    rho = stats.spearmanr(sizes, values).correlation
    return float(rho)


@dataclass(frozen=True)
class MetricRecord:
    estimator: str
    preset: str
    n_e: int
    n_o: int
    seed: int
    pehe: float
    ate_error: float
    wall_ms: float = 0.0
    split: str = "test"

    def __post_init__(self):
        if not self.pehe >= 0.0 or not self.ate_error >= 0.0:
            raise PreconditionError(f"metrics must be non-negative, got pehe={self.pehe}, ate_error={self.ate_error}")

    def to_dict(self) -> Dict:
        return asdict(self)


RECORD_COLUMNS = ("estimator", "preset", "n_e", "n_o", "seed", "pehe", "ate_error", "wall_ms", "split")
GROUP_COLUMNS = ["estimator", "preset", "split", "n_e", "n_o"]


def records_frame(records: List[MetricRecord]) -> pd.DataFrame:
    return pd.DataFrame([r.to_dict() for r in records], columns=list(RECORD_COLUMNS))


def summarize(records: List[MetricRecord], by: Optional[List[str]] = None) -> pd.DataFrame:
    """Median, quartiles, mean and std of PEHE and ATE error per cell"""
    if not records:
        raise PreconditionError("nothing to summarize")
    by = by or GROUP_COLUMNS
    frame = records_frame(records)
    grouped = frame.groupby(by, sort=True)
    parts = []
    for metric in ("pehe", "ate_error"):
        column = grouped[metric]
        parts.append(
            pd.DataFrame(
                {
                    f"{metric}_median": column.median(),
                    f"{metric}_q1": column.quantile(0.25),
                    f"{metric}_q3": column.quantile(0.75),
                    f"{metric}_mean": column.mean(),
                    f"{metric}_std": column.std(ddof=0),
                }
            )
        )
    summary = pd.concat(parts, axis=1)
    summary["replications"] = grouped.size()
    return summary.reset_index()
