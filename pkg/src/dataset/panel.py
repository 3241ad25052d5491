"""Combined experimental/observational panel, ground truth and stratified splits"""
import logging
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np

from src.common.errors import PositivityError, PreconditionError, SchemaError
from src.common.seeding import make_rng

logger = logging.getLogger(__name__)

EXPERIMENTAL = "E"
OBSERVATIONAL = "O"
GROUPS = (EXPERIMENTAL, OBSERVATIONAL)
ARMS = (0, 1)


def _frozen(values, dtype):
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


def _first_row(mask):
    """1-based number of the first flagged row"""
    return int(np.flatnonzero(mask)[0]) + 1


@dataclass(frozen=True, eq=False)
class PanelDataset:
    """Rows (g, a, x, s, y?) pooled from both data sources

    y is a masked array: masked exactly on experimental rows.
    """

    g: np.ndarray
    a: np.ndarray
    x: np.ndarray
    s: np.ndarray
    y: np.ma.MaskedArray

    def __post_init__(self):
        g = np.asarray(self.g).astype(str)
        n = g.shape[0]

        x = np.asarray(self.x, dtype=float)
        if x.ndim == 1:
            x = x.reshape(-1, 1)
        if x.ndim != 2 or x.shape[0] != n or x.shape[1] < 1:
            raise SchemaError(f"x must be an n x d matrix with n={n}, got shape {x.shape}")

        a_raw = np.asarray(self.a, dtype=float).reshape(-1)
        s = np.asarray(self.s, dtype=float).reshape(-1)
        if a_raw.shape[0] != n or s.shape[0] != n:
            raise SchemaError("g, a, x and s must have the same number of rows")

        if isinstance(self.y, np.ma.MaskedArray):
            y_values = np.asarray(self.y.filled(np.nan), dtype=float).reshape(-1)
            y_missing = np.ma.getmaskarray(self.y).reshape(-1)
        else:
            y_values = np.asarray(self.y, dtype=float).reshape(-1)
            y_missing = np.isnan(y_values)
        if y_values.shape[0] != n:
            raise SchemaError("y must have one entry per row")

        bad_group = ~np.isin(g, GROUPS)
        if bad_group.any():
            row = _first_row(bad_group)
            raise SchemaError(f"invalid group '{g[row - 1]}' at row {row}", row=row)

        bad_arm = ~np.isin(a_raw, ARMS)
        if bad_arm.any():
            row = _first_row(bad_arm)
            raise SchemaError(f"non-binary a at row {row}", row=row)

        is_exp = g == EXPERIMENTAL
        present_exp = is_exp & ~y_missing
        if present_exp.any():
            row = _first_row(present_exp)
            raise SchemaError(f"y present for experimental row {row}", row=row)
        missing_obs = ~is_exp & y_missing
        if missing_obs.any():
            row = _first_row(missing_obs)
            raise SchemaError(f"y missing for observational row {row}", row=row)

        for name, bad in (
            ("x", ~np.isfinite(x).all(axis=1)),
            ("s", ~np.isfinite(s)),
            ("y", ~is_exp & ~np.isfinite(np.where(y_missing, 0.0, y_values))),
        ):
            if bad.any():
                row = _first_row(bad)
                raise SchemaError(f"non-finite {name} at row {row}", row=row)

        y_data = _frozen(np.where(is_exp, 0.0, y_values), float)
        y = np.ma.MaskedArray(y_data, mask=is_exp.copy(), copy=False)
        y.harden_mask()

        object.__setattr__(self, "g", _frozen(g, "<U1"))
        object.__setattr__(self, "a", _frozen(a_raw, np.int8))
        object.__setattr__(self, "x", _frozen(x, float))
        object.__setattr__(self, "s", _frozen(s, float))
        object.__setattr__(self, "y", y)

    @classmethod
    def from_arrays(cls, g, a, x, s, y=None):
        """Build from plain arrays; y uses NaN for missing entries"""
        g = np.asarray(g).astype(str)
        if y is None:
            y = np.full(g.shape[0], np.nan)
        return cls(g=g, a=a, x=x, s=s, y=y)

    @property
    def n(self) -> int:
        return int(self.g.shape[0])

    @property
    def d(self) -> int:
        return int(self.x.shape[1])

    @property
    def is_experimental(self) -> np.ndarray:
        return self.g == EXPERIMENTAL

    @property
    def is_observational(self) -> np.ndarray:
        return self.g == OBSERVATIONAL

    def y_filled(self, fill=0.0) -> np.ndarray:
        return self.y.filled(fill)

    def take(self, indices) -> "PanelDataset":
        idx = np.asarray(indices, dtype=int)
        return PanelDataset(
            g=self.g[idx],
            a=self.a[idx],
            x=self.x[idx],
            s=self.s[idx],
            y=np.ma.MaskedArray(self.y.data[idx], mask=np.ma.getmaskarray(self.y)[idx]),
        )

    def subgroup(self, g=None, a=None) -> "PanelDataset":
        """Rows matching the group/arm filter (None means any)"""
        keep = np.ones(self.n, dtype=bool)
        if g is not None:
            keep &= self.g == g
        if a is not None:
            keep &= self.a == int(a)
        if not keep.any():
            raise PositivityError(f"empty subgroup (g={g or 'any'}, a={'any' if a is None else a})")
        return self.take(np.flatnonzero(keep))

    def counts(self) -> Dict[Tuple[str, int], int]:
        return {
            (grp, arm): int(np.sum((self.g == grp) & (self.a == arm)))
            for grp in GROUPS
            for arm in ARMS
        }

    def require_positivity(self):
        """Both groups and, within each, both arms must be non-empty"""
        for (grp, arm), count in self.counts().items():
            if count == 0:
                raise PositivityError(f"positivity violated: no rows with g={grp}, a={arm}")

    def group_prior(self) -> float:
        """Empirical p(G=O)"""
        n_obs = int(np.sum(self.is_observational))
        if n_obs == 0 or n_obs == self.n:
            raise PositivityError("group_prior requires both experimental and observational rows")
        return n_obs / self.n

    def equals(self, other: "PanelDataset") -> bool:
        return (
            np.array_equal(self.g, other.g)
            and np.array_equal(self.a, other.a)
            and np.array_equal(self.x, other.x)
            and np.array_equal(self.s, other.s)
            and np.array_equal(np.ma.getmaskarray(self.y), np.ma.getmaskarray(other.y))
            and np.array_equal(self.y.filled(0.0), other.y.filled(0.0))
        )


@dataclass(frozen=True, eq=False)
class GroundTruth:
    """Per-row true effect and optional potential outcomes"""

    tau: np.ndarray
    s0: Optional[np.ndarray] = None
    s1: Optional[np.ndarray] = None
    y0: Optional[np.ndarray] = None
    y1: Optional[np.ndarray] = None
    columns: Tuple[str, ...] = field(init=False)

    def __post_init__(self):
        tau = _frozen(np.asarray(self.tau, dtype=float).reshape(-1), float)
        object.__setattr__(self, "tau", tau)

        outcomes = [self.s0, self.s1, self.y0, self.y1]
        if any(v is not None for v in outcomes):
            if any(v is None for v in outcomes):
                raise SchemaError("potential outcomes must be all present or all absent")
            for name, values in zip(("s0", "s1", "y0", "y1"), outcomes):
                arr = _frozen(np.asarray(values, dtype=float).reshape(-1), float)
                if arr.shape != tau.shape:
                    raise SchemaError(f"{name} is not row-aligned with tau")
                object.__setattr__(self, name, arr)
            object.__setattr__(self, "columns", ("tau", "s0", "s1", "y0", "y1"))
        else:
            object.__setattr__(self, "columns", ("tau",))

    @property
    def n(self) -> int:
        return int(self.tau.shape[0])

    @property
    def has_potential_outcomes(self) -> bool:
        return self.s0 is not None

    def take(self, indices) -> "GroundTruth":
        idx = np.asarray(indices, dtype=int)
        if not self.has_potential_outcomes:
            return GroundTruth(tau=self.tau[idx])
        return GroundTruth(
            tau=self.tau[idx],
            s0=self.s0[idx],
            s1=self.s1[idx],
            y0=self.y0[idx],
            y1=self.y1[idx],
        )

    def equals(self, other: "GroundTruth") -> bool:
        if self.columns != other.columns:
            return False
        return all(np.array_equal(getattr(self, c), getattr(other, c)) for c in self.columns)


def subgroup(dataset: PanelDataset, g=None, a=None) -> PanelDataset:
    return dataset.subgroup(g=g, a=a)


def group_prior(dataset: PanelDataset) -> float:
    return dataset.group_prior()


def _part_sizes(n, fractions):
    fractions = np.asarray(fractions, dtype=float)
    if fractions.ndim != 1 or fractions.shape[0] < 2:
        raise PreconditionError("fractions must list at least two parts")
    if np.any(fractions <= 0):
        raise PreconditionError(f"fractions must all be positive, got {fractions.tolist()}")
    if abs(fractions.sum() - 1.0) > 1e-9:
        raise PreconditionError(f"fractions must sum to 1, got {fractions.sum()}")

    # parts after the first are rounded; the remainder goes to train
    rest = [int(round(n * f)) for f in fractions[1:]]
    sizes = [n - sum(rest)] + rest
    if min(sizes) < 1:
        raise PositivityError(f"{n} rows cannot fill {len(sizes)} parts with fractions {fractions.tolist()}")
    return sizes


def _allocate(stratum_counts, capacity, size, n):
    """Spread one part of the given size over strata, at least one row each"""
    raw = stratum_counts * (size / n)
    alloc = np.maximum(1, np.floor(raw)).astype(int)
    alloc = np.minimum(alloc, capacity)
    remainder = raw - np.floor(raw)

    diff = size - int(alloc.sum())
    order = np.argsort(-remainder, kind="stable")
    while diff > 0:
        grew = False
        for i in order:
            if diff == 0:
                break
            if alloc[i] < capacity[i]:
                alloc[i] += 1
                diff -= 1
                grew = True
        if not grew:
            break
    order = np.argsort(remainder, kind="stable")
    while diff < 0:
        shrank = False
        for i in order:
            if diff == 0:
                break
            if alloc[i] > 1:
                alloc[i] -= 1
                diff += 1
                shrank = True
        if not shrank:
            break
    return alloc


def split_indices(dataset: PanelDataset, fractions, seed) -> Tuple[np.ndarray, ...]:
    """Stratified (g, a) partition of row indices; part 0 takes the rounding remainder"""
    sizes = _part_sizes(dataset.n, fractions)
    n_parts = len(sizes)

    strata = [(grp, arm) for grp in GROUPS for arm in ARMS]
    members = [np.flatnonzero((dataset.g == grp) & (dataset.a == arm)) for grp, arm in strata]
    present = [i for i, m in enumerate(members) if m.size > 0]

    for i in present:
        if members[i].size < n_parts:
            grp, arm = strata[i]
            raise PositivityError(
                f"stratum (g={grp}, a={arm}) has {members[i].size} rows, too few for {n_parts} split parts"
            )

    counts = np.array([members[i].size for i in present])
    allocations = np.zeros((len(present), n_parts), dtype=int)
    for k in range(1, n_parts):
        # leave one row per stratum for every part not yet allocated, train included
        capacity = counts - allocations.sum(axis=1) - (n_parts - k)
        allocations[:, k] = _allocate(counts, capacity, sizes[k], dataset.n)
    allocations[:, 0] = counts - allocations[:, 1:].sum(axis=1)

    for row, i in enumerate(present):
        if allocations[row, 0] < 1:
            grp, arm = strata[i]
            raise PositivityError(f"stratum (g={grp}, a={arm}) leaves no rows for the first split part")

    rng = make_rng(seed)
    parts = [[] for _ in range(n_parts)]
    for row, i in enumerate(present):
        shuffled = members[i][rng.permutation(members[i].size)]
        bounds = np.cumsum(allocations[row])
        for k, chunk in enumerate(np.split(shuffled, bounds[:-1])):
            parts[k].append(chunk)

    return tuple(np.sort(np.concatenate(p)) for p in parts)


def split(dataset: PanelDataset, fractions, seed) -> Tuple[PanelDataset, ...]:
    """Stratified train/validation/test (or any k-part) split"""
    return tuple(dataset.take(idx) for idx in split_indices(dataset, fractions, seed))
