"""Simulated datasets with a scalar covariate: closed-form and Gaussian-process variants"""
import logging
from dataclasses import dataclass, field
from typing import Any, Dict

import numpy as np

from src.common.errors import PreconditionError
from src.common.seeding import derive_seed, make_rng
from src.dataset.panel import EXPERIMENTAL, OBSERVATIONAL, GroundTruth, PanelDataset
from src.simgen.gp import make_grid, sample_gp_path

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class GenOutput:
    dataset: PanelDataset
    truth: GroundTruth
    meta: Dict[str, Any] = field(default_factory=dict)


def _check_sizes(n_e, n_o):
    if n_e < 2 or n_o < 2:
        raise PreconditionError(f"need n_e >= 2 and n_o >= 2, got {n_e}, {n_o}")


def sample_confounded_covariates(n_e, n_o, rng):
    """Groups, arms and (X, U)

    A ~ Bernoulli(0.5). Given A, (X, U) is bivariate normal with unit variances:
    experimental rows have mean ((2A-1)/2, 0) and no correlation, observational
    rows have mean ((1-2A)/2, 0) and correlation A - 1/2.
    """
    n = n_e + n_o
    g = np.array([EXPERIMENTAL] * n_e + [OBSERVATIONAL] * n_o)
    a = rng.binomial(1, 0.5, size=n)
    is_obs = g == OBSERVATIONAL

    z_x = rng.standard_normal(n)
    z_u = rng.standard_normal(n)
    x_mean = np.where(is_obs, (1 - 2 * a) / 2.0, (2 * a - 1) / 2.0)
    rho = np.where(is_obs, a - 0.5, 0.0)
    x = x_mean + z_x
    u = rho * z_x + np.sqrt(1.0 - rho**2) * z_u
    return g, a, x, u


def _assemble(g, a, x, s0, s1, y0, y1, tau):
    s = np.where(a == 1, s1, s0)
    y = np.where(a == 1, y1, y0)
    # long-term outcome unobserved in the experiment
    y = np.where(g == EXPERIMENTAL, np.nan, y)
    dataset = PanelDataset.from_arrays(g=g, a=a, x=x.reshape(-1, 1), s=s, y=y)
    truth = GroundTruth(tau=tau, s0=s0, s1=s1, y0=y0, y1=y1)
    return dataset, truth


def sample_dataset1(n_e, n_o, seed, noise_s=1.0, noise_y=1.0) -> GenOutput:
    """Quadratic structural equations with tau(x) = 2 + 2x + x^2

    U and the short-term noise are shared by both arms of a unit; the
    long-term noise is drawn per arm.
    """
    _check_sizes(n_e, n_o)
    rng = make_rng(seed)
    g, a, x, u = sample_confounded_covariates(n_e, n_o, rng)
    n = g.shape[0]
    eps_s = noise_s * rng.standard_normal(n)
    eps_y0 = noise_y * rng.standard_normal(n)
    eps_y1 = noise_y * rng.standard_normal(n)

    def short_term(arm):
        return 1 + arm + x + 2 * arm * x + 0.5 * x**2 + arm * x**2 + u + eps_s

    def long_term(arm, s_arm, eps):
        return 2 + 3 * arm + x + 4 * arm * x + x**2 + 2 * arm * x**2 + 2 * u - s_arm + eps

    s0, s1 = short_term(0), short_term(1)
    y0, y1 = long_term(0, s0, eps_y0), long_term(1, s1, eps_y1)
    tau = 2 + 2 * x + x**2

    dataset, truth = _assemble(g, a, x, s0, s1, y0, y1, tau)
    logger.info(f"Sampled dataset1 with n_e={n_e}, n_o={n_o}, seed={seed}")
    return GenOutput(dataset=dataset, truth=truth, meta={"generator": "dataset1", "n_e": n_e, "n_o": n_o, "seed": seed})


def sample_dataset2(
    n_e,
    n_o,
    seed,
    length_scale=1.0,
    nu=2.0,
    noise_s=1.0,
    noise_y=1.0,
    grid_min=-5.0,
    grid_max=5.0,
    grid_points=501,
) -> GenOutput:
    """Covariates as in dataset1 with Matern-GP baseline functions f0 (short) and f1 (long)"""
    _check_sizes(n_e, n_o)
    rng = make_rng(seed)
    grid = make_grid(grid_min, grid_max, grid_points)
    f0 = sample_gp_path(grid, length_scale, nu, seed=derive_seed(seed, 1))
    f1 = sample_gp_path(grid, length_scale, nu, seed=derive_seed(seed, 2))

    g, a, x, u = sample_confounded_covariates(n_e, n_o, rng)
    n = g.shape[0]
    eps_s = noise_s * rng.standard_normal(n)
    eps_y0 = noise_y * rng.standard_normal(n)
    eps_y1 = noise_y * rng.standard_normal(n)
    f0_x = f0(x)
    f1_x = f1(x)

    def short_term(arm):
        return f0_x + arm + 2 * arm * x + arm * x**2 + u + eps_s

    def long_term(arm, s_arm, eps):
        return f1_x + 3 * arm + x + 4 * arm * x + 2 * arm * x**2 + 2 * u - s_arm + eps

    s0, s1 = short_term(0), short_term(1)
    y0, y1 = long_term(0, s0, eps_y0), long_term(1, s1, eps_y1)
    tau = 2 + 2 * x + x**2

    dataset, truth = _assemble(g, a, x, s0, s1, y0, y1, tau)
    logger.info(f"Sampled dataset2 with n_e={n_e}, n_o={n_o}, seed={seed}, l={length_scale}, nu={nu}")
    return GenOutput(
        dataset=dataset,
        truth=truth,
        meta={
            "generator": "dataset2",
            "n_e": n_e,
            "n_o": n_o,
            "seed": seed,
            "length_scale": length_scale,
            "nu": nu,
            "f0": f0,
            "f1": f1,
        },
    )
