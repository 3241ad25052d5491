#!/usr/bin/env python3
"""Network layers, masked loss, training loop and shared nuisance net tests"""

import numpy as np
import pytest

from src.common.errors import PreconditionError, TrainingError
from src.mlp.network import (
    LOGISTIC,
    MLP,
    SQUARED,
    Standardizer,
    MLPConfig,
    fit_mlp_classifier,
    fit_mlp_regressor,
    loss_and_gradients,
    masked_multitask_loss,
    train,
)
from src.mlp.shared import HEADS, SharedNuisanceNet, build_targets, fit_nuisances_shared, head_weight_vector


def _numeric_loss(net, X, targets, masks):
    raw = net.forward_raw(X)
    loss, _ = masked_multitask_loss(raw, targets, masks, net.head_kinds)
    return loss + net.penalty()


def _max_relative_error(net, X, targets, masks, eps=1e-6):
    _, grads = loss_and_gradients(net, (X, targets, masks))
    worst = 0.0
    for param, grad in zip(net.parameters(), grads):
        flat = param.reshape(-1)
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + eps
            up = _numeric_loss(net, X, targets, masks)
            flat[i] = original - eps
            down = _numeric_loss(net, X, targets, masks)
            flat[i] = original
            numeric = (up - down) / (2 * eps)
            analytic = grad.reshape(-1)[i]
            worst = max(worst, abs(numeric - analytic) / max(1e-6, abs(numeric) + abs(analytic)))
    return worst


def test_mlp_gradients_match_finite_differences():
    """Test backward passes agree with central differences"""
    rng = np.random.default_rng(0)
    config = MLPConfig(widths=(6, 4), weight_decay=1e-3, seed=1)
    net = MLP(3, config, n_out=2)
    X = rng.standard_normal((12, 3))
    targets = rng.standard_normal((12, 2))
    masks = (rng.random((12, 2)) < 0.7).astype(float)
    assert _max_relative_error(net, X, targets, masks) < 1e-4


def test_shared_net_gradients_match_finite_differences():
    """Test the branched backward pass with mixed squared and logistic heads"""
    rng = np.random.default_rng(1)
    net = SharedNuisanceNet(2, MLPConfig(widths=(5,), weight_decay=1e-3, seed=2))
    X = rng.standard_normal((10, 2))
    targets = rng.standard_normal((10, len(HEADS)))
    for i, kind in enumerate(net.head_kinds):
        if kind == LOGISTIC:
            targets[:, i] = rng.random(10) < 0.5
    masks = (rng.random((10, len(HEADS))) < 0.6).astype(float)
    assert _max_relative_error(net, X, targets, masks) < 1e-4


def test_masked_loss_ignores_unsupervised_rows():
    raw = np.array([[1.0, 0.0], [100.0, 0.0]])
    targets = np.array([[0.0, 1.0], [0.0, 1.0]])
    masks = np.array([[1.0, 1.0], [0.0, 1.0]])
    loss, grad = masked_multitask_loss(raw, targets, masks, (SQUARED, LOGISTIC))
    assert loss == pytest.approx(1.0 + np.log(2.0))
    assert grad[1, 0] == 0.0
    assert grad[0, 1] == pytest.approx(-0.25)


def test_mlp_config_validation():
    with pytest.raises(PreconditionError):
        MLPConfig(widths=(0,))
    with pytest.raises(PreconditionError):
        MLPConfig(activation="tanh")
    with pytest.raises(PreconditionError):
        MLPConfig(dropout=1.0)
    with pytest.raises(PreconditionError):
        MLPConfig(learning_rate=0.0)
    config = MLPConfig.from_settings({"widths": [8], "epochs": 3, "unknown": 1}, seed=4)
    assert config.widths == (8,)
    assert config.seed == 4


def test_training_reduces_loss():
    """Test SGD lowers the epoch loss on a learnable target"""
    rng = np.random.default_rng(2)
    X = rng.standard_normal((256, 1))
    targets = np.sin(2 * X)
    net = MLP(1, MLPConfig(widths=(16,), epochs=60, learning_rate=0.01, seed=0))
    diagnostics = train(net, X, targets, np.ones_like(targets))
    history = diagnostics["loss_history"]
    assert len(history) == 60
    assert history[-1] < 0.7 * history[0]
    assert diagnostics["iterations"] == 60 * 4


def test_training_aborts_on_divergence():
    X = np.linspace(-1, 1, 64).reshape(-1, 1) * 1e3
    targets = X * 1e6
    net = MLP(1, MLPConfig(widths=(8,), epochs=50, learning_rate=10.0, seed=0))
    with pytest.raises(TrainingError) as info:
        train(net, X, targets, np.ones_like(targets))
    assert "learning_rate" in info.value.diagnostics


def test_mlp_regressor_and_classifier_fit():
    rng = np.random.default_rng(3)
    x = rng.uniform(-2, 2, 800)
    y = 1 + x**2 + 0.1 * rng.standard_normal(800)
    config = MLPConfig(widths=(32, 32), epochs=60, learning_rate=0.005, seed=0)
    regressor = fit_mlp_regressor(x, y, config)
    grid = np.linspace(-1.5, 1.5, 7)
    assert np.sqrt(np.mean((regressor.predict(grid) - (1 + grid**2)) ** 2)) < 0.3

    labels = (x > 0).astype(float)
    classifier = fit_mlp_classifier(x, labels, config)
    p = classifier.predict(np.array([-1.5, 1.5]))
    assert p[0] < 0.2 and p[1] > 0.8
    with pytest.raises(PreconditionError):
        fit_mlp_classifier(x, np.zeros_like(x), config)


def test_build_targets_masks_match_strata(tiny_panel):
    """Test each head is supervised on its own subgroup only"""
    s_scaler = Standardizer.fit(tiny_panel.s)
    y_scaler = Standardizer.fit(tiny_panel.y.compressed())
    _, masks = build_targets(tiny_panel, s_scaler, y_scaler)
    column = dict(zip(HEADS, masks.T))
    assert column["mu_S_E1"].tolist() == [0, 1, 0, 1, 0, 0, 0, 0]
    assert column["mu_Y_O0"].tolist() == [0, 0, 0, 0, 1, 0, 1, 0]
    assert column["pi_E"].tolist() == [1] * 4 + [0] * 4
    assert column["pi_G"].tolist() == [1] * 8


def test_head_weight_vector_expands_arms():
    weights = head_weight_vector({"mu_S_E": 2.0, "pi_G": 0.0})
    by_head = dict(zip(HEADS, weights))
    assert by_head["mu_S_E0"] == by_head["mu_S_E1"] == 2.0
    assert by_head["pi_G"] == 0.0
    assert by_head["mu_Y_O1"] == 1.0


def test_shared_net_exposes_every_nuisance(small_draw):
    """Test the trained shared net yields a full, clipped nuisance set"""
    ns = fit_nuisances_shared(small_draw.dataset, MLPConfig(widths=(16,), epochs=5, seed=0), p_O=0.6)
    values = ns.evaluate(np.linspace(-1, 1, 9))
    assert values.mu_S_E1.shape == (9,)
    for p in (values.pi_E, values.pi_O, values.pi_G):
        assert np.all((p >= 0.01) & (p <= 0.99))
    assert ns.p_O == 0.6
    assert set(ns.provenance["backends"].values()) == {"mlp-shared"}


REG_HEAD_WEIGHTS = {"pi_E": 0.0, "pi_O": 0.0, "pi_G": 0.0}


def test_zero_weight_heads_get_zero_gradient(small_draw):
    """Test propensity heads switched off for reg receive no gradient on real data"""
    ds = small_draw.dataset
    net = SharedNuisanceNet(ds.d, MLPConfig(widths=(8,), weight_decay=0.0, seed=3))
    targets, masks = build_targets(ds, Standardizer.fit(ds.s), Standardizer.fit(ds.y.compressed()))
    X = Standardizer.fit(ds.x).transform(ds.x)

    loss_and_gradients(net, (X, targets, masks), head_weight_vector(REG_HEAD_WEIGHTS))
    assert not net.group_head.grad_W.any() and not net.group_head.grad_b.any()
    assert not net.obs_propensity_head.grad_W.any()
    assert not net.exp_head.grad_W[:, HEADS.index("pi_E")].any()
    assert net.exp_head.grad_W[:, HEADS.index("mu_S_E0")].any()
    assert net.outcome_head.grad_W.any()


def test_shared_fit_leaves_zero_weight_heads_untrained(small_draw):
    config = MLPConfig(widths=(8,), weight_decay=0.0, epochs=3, seed=4)
    ns = fit_nuisances_shared(small_draw.dataset, config, head_weights=REG_HEAD_WEIGHTS)
    trained = ns.pi_G.keywords["net"]
    fresh = SharedNuisanceNet(small_draw.dataset.d, config)

    assert np.array_equal(trained.group_head.W, fresh.group_head.W)
    assert np.array_equal(trained.obs_propensity_head.W, fresh.obs_propensity_head.W)
    assert not np.array_equal(trained.outcome_head.W, fresh.outcome_head.W)
    assert ns.provenance["head_weights"] == REG_HEAD_WEIGHTS
