"""Grid-sampled Gaussian-process paths with a Matern prior"""
import logging
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from src.common.errors import PreconditionError
from src.common.linalg_utils import cholesky_with_jitter
from src.common.seeding import make_rng
from src.simgen.kernels import matern_kernel

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class GPPath:
    """A sampled path: linear interpolation inside the grid, clamped edge values outside"""

    grid: np.ndarray
    values: np.ndarray

    def __call__(self, x):
        return np.interp(np.asarray(x, dtype=float), self.grid, self.values)


def make_grid(lo=-5.0, hi=5.0, points=501):
    return np.linspace(lo, hi, int(points))


@lru_cache(maxsize=16)
def _grid_factor(grid_key, length_scale, nu):
    grid = np.asarray(grid_key)
    gram = matern_kernel(np.abs(grid[:, None] - grid[None, :]), length_scale, nu)
    factor = cholesky_with_jitter(gram)
    factor.setflags(write=False)
    return factor


def sample_gp_path(grid, length_scale=1.0, nu=2.0, seed=None) -> GPPath:
    """Draw a zero-mean GP vector over the grid and wrap it as an interpolating function"""
    grid = np.asarray(grid, dtype=float).reshape(-1)
    if grid.shape[0] < 2:
        raise PreconditionError("GP grid needs at least two points")
    if not np.all(np.diff(grid) > 0):
        raise PreconditionError("GP grid must be strictly increasing")

    factor = _grid_factor(tuple(grid.tolist()), float(length_scale), float(nu))
    values = factor @ make_rng(seed).standard_normal(grid.shape[0])
    values.setflags(write=False)
    return GPPath(grid=grid, values=values)
