#!/usr/bin/env python3
"""Config, seeding, chunking and factorization helper tests"""

import json

import numpy as np
import pytest

from src.common.batch_utils import iter_minibatches, predict_in_chunks
from src.common.config import load_config, load_json_overrides, merge_overrides, section
from src.common.errors import ConfigError, FactorizationError, HLCEError, SchemaError
from src.common.linalg_utils import cholesky_with_jitter, jitter_retry, solve_spd
from src.common.seeding import derive_seed


def test_default_config_sections():
    """Test the shipped config.yaml carries the expected defaults"""
    config = load_config()
    assert config["clip"] == 0.01
    assert config["experiments"]["fractions"] == [0.63, 0.27, 0.10]
    assert config["experiments"]["sweep"]["default_n_e"] == 1000
    assert config["experiments"]["sweep"]["default_n_o"] == 2000
    assert config["generators"]["gp"]["grid_points"] == 501


def test_load_config_returns_copies():
    """Test mutating a loaded config does not leak into the next load"""
    first = load_config()
    first["clip"] = 0.2
    assert load_config()["clip"] == 0.01


def test_load_config_missing_file(tmp_path):
    """Test a missing config file raises ConfigError"""
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.yaml")


def test_load_config_invalid_yaml(tmp_path):
    path = tmp_path / "bad.yaml"
    path.write_text("clip: [0.1\n")
    with pytest.raises(ConfigError):
        load_config(path)


def test_merge_overrides_is_deep():
    """Test nested overrides keep sibling keys"""
    base = {"experiments": {"seed": 0, "replications": 10}, "clip": 0.01}
    merged = merge_overrides(base, {"experiments": {"replications": 3}})
    assert merged == {"experiments": {"seed": 0, "replications": 3}, "clip": 0.01}
    assert base["experiments"]["replications"] == 10


def test_load_json_overrides(tmp_path):
    path = tmp_path / "exp.json"
    path.write_text(json.dumps({"experiments": {"replications": 2}}))
    assert load_json_overrides(path) == {"experiments": {"replications": 2}}

    path.write_text("{not json")
    with pytest.raises(ConfigError):
        load_json_overrides(path)


def test_section_missing_key():
    """Test section names the missing path"""
    config = {"regress": {"kernel": {"nu": 2.5}}}
    assert section(config, "regress", "kernel", "nu") == 2.5
    with pytest.raises(ConfigError, match="regress.logistic"):
        section(config, "regress", "logistic")


def test_error_hierarchy():
    """Test library errors are ValueErrors and carry their context"""
    err = SchemaError("bad row", row=7)
    assert isinstance(err, HLCEError)
    assert isinstance(err, ValueError)
    assert err.row == 7


def test_derive_seed_is_deterministic_and_distinct():
    assert derive_seed(0, 1, 2) == derive_seed(0, 1, 2)
    assert derive_seed(0, 1, 2) != derive_seed(0, 2, 1)
    assert derive_seed(1, 1, 2) != derive_seed(0, 1, 2)
    assert 0 <= derive_seed(123) < 2**32


def test_iter_minibatches_covers_all_rows():
    """Test minibatches partition range(n) with and without shuffling"""
    pages = list(iter_minibatches(10, 4))
    assert [len(p) for p in pages] == [4, 4, 2]
    assert np.array_equal(np.concatenate(pages), np.arange(10))

    shuffled = np.concatenate(list(iter_minibatches(10, 3, np.random.default_rng(0))))
    assert sorted(shuffled.tolist()) == list(range(10))


def test_predict_in_chunks_matches_direct_call():
    X = np.arange(23, dtype=float).reshape(-1, 1)
    result = predict_in_chunks(lambda chunk: chunk[:, 0] * 2.0, X, chunk_size=5)
    assert np.array_equal(result, np.arange(23) * 2.0)
    assert predict_in_chunks(lambda chunk: chunk[:, 0], np.empty((0, 1))).shape == (0,)


def test_solve_spd_matches_numpy():
    rng = np.random.default_rng(3)
    B = rng.standard_normal((6, 6))
    A = B @ B.T + 6 * np.eye(6)
    b = rng.standard_normal(6)
    np.testing.assert_allclose(solve_spd(A, b), np.linalg.solve(A, b), atol=1e-10)


def test_cholesky_with_jitter_recovers_singular_psd():
    """Test a rank-deficient PSD matrix factorizes once jitter is added"""
    v = np.array([[1.0], [1.0], [1.0]])
    L = cholesky_with_jitter(v @ v.T)
    np.testing.assert_allclose(L @ L.T, v @ v.T, atol=1e-5)


def test_cholesky_with_jitter_gives_up_on_indefinite():
    """Test jitter escalation stops at the cap"""
    with pytest.raises(FactorizationError):
        cholesky_with_jitter(np.array([[1.0, 2.0], [2.0, 1.0]]))


def test_jitter_retry_escalates(mocker):
    """Test the decorator passes increasing jitter until the call succeeds"""
    attempts = []

    @jitter_retry(start=1e-3, factor=10.0, max_jitter=1e-1)
    def flaky(jitter=0.0):
        attempts.append(jitter)
        if jitter < 1e-2 * (1 - 1e-9):
            raise np.linalg.LinAlgError("not yet")
        return jitter

    warn = mocker.patch("src.common.linalg_utils.logger.warning")
    assert flaky() == pytest.approx(1e-2)
    assert attempts == pytest.approx([1e-3, 1e-2])
    assert warn.call_count == 1
