#!/usr/bin/env python3
"""Nuisance containers, oracle functions and stage-1 fitting tests"""

import numpy as np
import pytest
from scipy.special import expit

from src.common.errors import PositivityError, PreconditionError
from src.dataset.panel import PanelDataset
from src.nuisance.fit import classifier_spec_for, fit_nuisances, regressor_spec_for
from src.nuisance.oracle import oracle_nuisances_dataset1, true_tau_dataset1
from src.nuisance.types import LEMMA_SETS, NUISANCE_NAMES, NuisanceSet, NuisanceSpec, with_additive_bias

GRID = np.linspace(-2, 2, 9)


def test_oracle_plug_in_is_tau(oracle_set):
    """Test the identification contrast of the oracle equals 2 + 2x + x^2"""
    values = oracle_set.evaluate(GRID)
    np.testing.assert_allclose(values.plug_in(), 2 + 2 * GRID + GRID**2)
    np.testing.assert_allclose(true_tau_dataset1(GRID), 2 + 2 * GRID + GRID**2)


def test_oracle_propensities(oracle_set):
    values = oracle_set.evaluate(np.array([0.0, 1.0]))
    np.testing.assert_allclose(values.pi_E, expit([0.0, 1.0]))
    np.testing.assert_allclose(values.pi_O, expit([0.0, -1.0]))
    np.testing.assert_allclose(values.pi_G, [0.4, 0.4])
    assert oracle_set.p_O == 0.6


def test_propensities_are_clipped():
    values = oracle_nuisances_dataset1(clip=0.05).evaluate(np.array([-10.0, 10.0]))
    assert values.pi_E.tolist() == pytest.approx([0.05, 0.95])


def test_arm_pair_selects_per_row(oracle_set):
    a = np.array([0, 1])
    X = np.array([0.0, 0.0])
    assert oracle_set.mu_S_E(a, X).tolist() == [1.0, 2.0]


def test_additive_bias_shifts_contrast(oracle_set):
    """Test outcome corruption moves the arm contrast by twice the bias"""
    corrupted = with_additive_bias(oracle_set, ["mu_Y_O", "pi_E"], 0.1)
    before = oracle_set.evaluate(GRID)
    after = corrupted.evaluate(GRID)
    np.testing.assert_allclose(after.mu_Y_O1 - after.mu_Y_O0, before.mu_Y_O1 - before.mu_Y_O0 + 0.2)
    np.testing.assert_allclose(after.mu_S_E1, before.mu_S_E1)
    assert corrupted.provenance["corrupted"] == {"mu_Y_O": 0.1, "pi_E": 0.1}
    with pytest.raises(PreconditionError):
        with_additive_bias(oracle_set, ["mu_Z"], 0.1)


def test_nuisance_set_validates_p_O():
    with pytest.raises(PreconditionError):
        NuisanceSet.constant(p_O=1.0)
    with pytest.raises(PreconditionError):
        NuisanceSet.constant(clip=0.5)


def test_spec_validation_and_from_correct():
    with pytest.raises(PreconditionError):
        NuisanceSpec.uniform("gbm")
    with pytest.raises(PreconditionError):
        NuisanceSpec.uniform("oracle")
    with pytest.raises(PreconditionError):
        NuisanceSpec.from_correct(["mu_Z"])

    spec = NuisanceSpec.from_correct(LEMMA_SETS["set3"])
    mask = spec.correct_mask()
    assert [name for name in NUISANCE_NAMES if mask[name]] == ["mu_S_E", "pi_O"]
    assert spec.pi_G == "misspecified-parametric"


def test_backend_to_model_mapping(settings):
    assert regressor_spec_for("correct-parametric", settings).kind == "polynomial"
    assert regressor_spec_for("misspecified-parametric", settings).kind == "misspec-linear"
    assert regressor_spec_for("kernel", settings).kind == "kernel-ridge"
    assert classifier_spec_for("pi_G", "correct-parametric", 0.01).kind == "frequency"
    assert classifier_spec_for("pi_G", "misspecified-parametric", 0.01).complement
    assert classifier_spec_for("pi_E", "misspecified-parametric", 0.01).kind == "misspec-quadratic-logit"


def test_correct_parametric_recovers_dataset1(medium_draw, settings):
    """Test well-specified stage-1 models land near the closed-form nuisances"""
    ns = fit_nuisances(medium_draw.dataset, NuisanceSpec.uniform("correct-parametric"), settings)
    fitted = ns.evaluate(np.array([-0.5, 0.5]))
    truth = oracle_nuisances_dataset1(p_O=ns.p_O).evaluate(np.array([-0.5, 0.5]))
    for name in ("mu_S_E0", "mu_S_E1", "mu_S_O0", "mu_S_O1", "mu_Y_O0", "mu_Y_O1"):
        np.testing.assert_allclose(getattr(fitted, name), getattr(truth, name), atol=0.2)
    np.testing.assert_allclose(fitted.pi_E, truth.pi_E, atol=0.05)
    np.testing.assert_allclose(fitted.pi_O, truth.pi_O, atol=0.05)
    assert fitted.pi_G[0] == pytest.approx(0.4)
    assert ns.p_O == pytest.approx(0.6)
    assert ns.provenance["counts"]["E1"] > 0


def test_misspecified_pi_G_is_complement(small_draw, settings):
    ns = fit_nuisances(small_draw.dataset, NuisanceSpec.uniform("misspecified-parametric"), settings)
    assert ns.evaluate(np.zeros(1)).pi_G[0] == pytest.approx(0.6)


def test_pinned_p_O_overrides_empirical(small_draw, settings):
    """Test the pinned group prior reaches both p_O and the oracle pi_G"""
    spec = NuisanceSpec.uniform("oracle", oracle="dataset1", pin_p_O=0.5)
    ns = fit_nuisances(small_draw.dataset, spec, settings)
    assert ns.p_O == 0.5
    assert ns.evaluate(np.zeros(1)).pi_G[0] == pytest.approx(0.5)


def test_kernel_backend_fits(small_draw, settings):
    ns = fit_nuisances(small_draw.dataset, NuisanceSpec.uniform("kernel"), settings, seed=3)
    values = ns.evaluate(GRID)
    assert np.all(np.isfinite(values.plug_in()))
    assert ns.provenance["backends"]["mu_S_E"] == "kernel"


def test_fit_requires_every_stratum(settings):
    panel = PanelDataset.from_arrays(
        g=["E", "E", "O", "O"], a=[0, 0, 0, 1], x=[0.0, 1.0, 2.0, 3.0], s=[0.0] * 4, y=[np.nan, np.nan, 1.0, 2.0]
    )
    with pytest.raises(PositivityError):
        fit_nuisances(panel, NuisanceSpec.uniform("correct-parametric"), settings)
