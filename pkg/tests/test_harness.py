#!/usr/bin/env python3
"""Experiment designs, report persistence, plots and the command line at toy sizes"""

import json

import numpy as np
import pandas as pd
import pytest

from app import main
from src.common.config import merge_overrides
from src.common.errors import PreconditionError, SchemaError
from src.harness.experiments import (
    ALL_MISSPECIFIED,
    MISSPEC_PRESETS,
    ExperimentConfig,
    ExperimentReport,
    run_experiment,
    run_misspec,
    run_oracle_check,
    run_rates,
    run_semisynth,
    run_sweep,
)
from src.harness.plots import build_figure, emit_plot
from src.harness.reports import (
    CSV_COLUMNS,
    emit_report,
    emit_reports,
    load_report_csv,
    load_report_json,
    validate_report_dict,
)
from src.metrics.evaluation import MetricRecord


def _config(experiment, settings, **overrides):
    overrides.setdefault("replications", 1)
    return ExperimentConfig.from_settings(experiment, settings, **overrides)


def _sweep_report():
    records = []
    for kind, scale in (("mr", 1.0), ("pro", 2.0)):
        for n_e in (100, 1000, 10000):
            for seed in range(3):
                value = scale * n_e**-0.5 * (1 + 0.1 * seed)
                records.append(MetricRecord(kind, "dataset2", n_e, 2000, seed, pehe=value, ate_error=value / 2))
    return ExperimentReport(config={"experiment": "sweep-e"}, records=records)


def _misspec_report():
    records = [
        MetricRecord("mr", label, 300, 450, seed, pehe=0.2 + i + 0.01 * seed, ate_error=0.1)
        for i, label in enumerate(MISSPEC_PRESETS)
        for seed in range(3)
    ]
    return ExperimentReport(config={"experiment": "misspec"}, records=records, summary={"note": "toy"})


def test_misspec_preset_labels():
    """Test the six presets and their correct-nuisance sets"""
    labels = list(MISSPEC_PRESETS)
    assert labels[0] == "M_{1,2,3,4}"
    assert "M_{1′,2′,3,4′}" in labels
    assert MISSPEC_PRESETS["M_{1′,2′,3,4′}"] == ("mu_S_E", "pi_O")
    assert ALL_MISSPECIFIED == "M_{1′,2′,3′,4′}"
    assert MISSPEC_PRESETS[ALL_MISSPECIFIED] == ()
    assert len(labels) == 6


def test_config_from_settings(settings):
    """Test defaults come from config.yaml and non-None overrides win"""
    sweep = ExperimentConfig.from_settings("sweep-e", settings, replications=None)
    assert sweep.n_o == 2000
    assert sweep.e_grid == (100, 150, 250, 500, 1000, 1500, 3000, 5000, 10000)
    assert sweep.replications == 10
    assert sweep.describe()["n_o"] == 2000

    fast = ExperimentConfig.from_settings("misspec", settings, fast=True)
    assert (fast.n_e, fast.n_o) == (5000, 7500)
    assert fast.estimators == ("mr",)
    assert ExperimentConfig.from_settings("rates", settings, seed=9).seed == 9


def test_config_validation():
    with pytest.raises(PreconditionError):
        ExperimentConfig(experiment="bootstrap")
    with pytest.raises(PreconditionError):
        ExperimentConfig(experiment="misspec", estimators=("reg",))
    with pytest.raises(PreconditionError):
        ExperimentConfig(experiment="rates", rate_grid=(100, 200, 300))
    with pytest.raises(PreconditionError):
        ExperimentConfig(experiment="oracle-check", replications=0)


def test_run_misspec_tiny(settings):
    """Test one record per preset per replication, all from the same draw"""
    report = run_misspec(_config("misspec", settings, n_e=300, n_o=450, replications=2))
    assert len(report.records) == 12
    assert [r.preset for r in report.records[::2]] == list(MISSPEC_PRESETS)
    assert {r.estimator for r in report.records} == {"mr"}
    seeds = {label: [r.seed for r in report.records if r.preset == label] for label in MISSPEC_PRESETS}
    assert len({tuple(s) for s in seeds.values()}) == 1
    assert set(report.summary["presets"]) == set(MISSPEC_PRESETS)


def test_run_misspec_custom_preset(settings):
    """Test a configured correctness mask runs next to the built-in presets"""
    custom = merge_overrides(settings, {"experiments": {"misspec": {"presets": {"M_{Y,G}": ["mu_Y_O", "pi_G"]}}}})
    config = _config("misspec", custom, n_e=300, n_o=450)
    assert config.presets["M_{Y,G}"] == ("mu_Y_O", "pi_G")
    assert list(config.presets)[:6] == list(MISSPEC_PRESETS)

    report = run_misspec(config)
    assert len(report.records) == 7
    assert report.records[-1].preset == "M_{Y,G}"
    assert report.summary["presets"]["M_{Y,G}"] == ["mu_Y_O", "pi_G"]
    assert report.config["presets"][-1] == "M_{Y,G}"

    fig = build_figure(report, "misspec-bars")
    assert [t.get_text() for t in fig.axes[0].get_xticklabels()][-1] == "M_{Y,G}"


def test_misspec_preset_with_unknown_nuisance(settings):
    custom = merge_overrides(settings, {"experiments": {"misspec": {"presets": {"bad": ["mu_Z"]}}}})
    with pytest.raises(PreconditionError, match="unknown nuisances"):
        _config("misspec", custom)


def test_run_sweep_tiny(settings):
    config = _config("sweep-e", settings, e_grid=(100, 200), n_o=300, estimators=("naive", "mr"))
    report = run_sweep(config, "e")
    assert len(report.records) == 4
    assert sorted({r.n_o for r in report.records}) == [300]
    assert sorted({r.n_e for r in report.records}) == [100, 200]
    assert set(report.summary["spearman"]) == {"naive", "mr"}
    assert report.config["n_o"] == 300
    with pytest.raises(PreconditionError):
        run_sweep(config, "x")


def test_run_rates_tiny(settings):
    config = _config("rates", settings, rate_grid=(400, 600, 800, 1000), estimators=("naive", "mr"))
    report = run_rates(config)
    assert len(report.records) == 8
    assert set(report.summary["slopes"]) == {"naive", "mr"}
    assert all(np.isfinite(v) for v in report.summary["slopes"].values())
    assert {r.n_e + r.n_o for r in report.records} == {400, 600, 800, 1000}


def test_run_oracle_check_tiny(settings):
    """Test four estimator records per replication and an exact naive plug-in"""
    report = run_oracle_check(_config("oracle-check", settings, n_e=500, n_o=750, replications=2))
    assert len(report.records) == 8
    naive = [r for r in report.records if r.estimator == "naive"]
    assert all(r.pehe < 1e-8 for r in naive)
    assert all(r.split == "test" for r in report.records)


def test_run_semisynth_with_covariate_file(settings, out_dir):
    path = out_dir / "covariates.csv"
    rng = np.random.default_rng(0)
    pd.DataFrame(rng.standard_normal((400, 6)), columns=[f"c{j}" for j in range(6)]).to_csv(path, index=False)
    config = _config("semisynth", settings, covariates=str(path), estimators=("naive", "mr"))
    report = run_semisynth(config)
    assert len(report.records) == 4
    assert {r.split for r in report.records} == {"train", "test"}
    assert report.summary["covariate_rows"] == 400
    assert all(r.n_e + r.n_o == 400 for r in report.records)


def test_workers_do_not_change_results(settings):
    """Test parallel cells give the same records in the same order"""
    serial = run_experiment(_config("oracle-check", settings, n_e=300, n_o=450, replications=2))
    parallel = run_experiment(_config("oracle-check", settings, n_e=300, n_o=450, replications=2, workers=2))
    assert [(r.estimator, r.seed) for r in serial.records] == [(r.estimator, r.seed) for r in parallel.records]
    for a, b in zip(serial.records, parallel.records):
        assert a.pehe == pytest.approx(b.pehe, rel=1e-9, abs=1e-12)


def test_report_csv_round_trip(out_dir):
    report = _misspec_report()
    path = emit_report(report, out_dir / "misspec.csv")
    header = path.read_text(encoding="utf-8").splitlines()[0]
    assert header.split(",") == CSV_COLUMNS
    assert load_report_csv(path).records == report.records


def test_report_json_round_trip(out_dir):
    """Test the JSON document validates and reloads to equal records"""
    report = _misspec_report()
    path = emit_report(report, out_dir / "misspec.json")
    doc = json.loads(path.read_text(encoding="utf-8"))
    validate_report_dict(doc)
    loaded = load_report_json(path)
    assert loaded.records == report.records
    assert loaded.summary == {"note": "toy"}
    assert "M_{1′,2′,3,4′}" in path.read_text(encoding="utf-8")


def test_report_validation_errors(out_dir):
    with pytest.raises(PreconditionError):
        emit_report(ExperimentReport(config={}, records=[]), out_dir / "empty.json")
    with pytest.raises(PreconditionError):
        emit_report(_misspec_report(), out_dir / "report.xml")
    with pytest.raises(SchemaError):
        validate_report_dict({"config": {}, "records": []})
    with pytest.raises(SchemaError):
        validate_report_dict({"config": {}, "records": [{"estimator": "mr"}], "summary": {}})

    bad = out_dir / "bad.csv"
    bad.write_text("estimator,pehe\nmr,0.1\n")
    with pytest.raises(SchemaError):
        load_report_csv(bad)


def test_emit_reports_writes_each_format(out_dir):
    paths = emit_reports(_misspec_report(), out_dir / "nested", "misspec")
    assert [p.name for p in paths] == ["misspec.csv", "misspec.json"]
    assert all(p.exists() for p in paths)


def test_sweep_plot_lines(settings):
    """Test one median line per estimator on a log x-axis"""
    fig = build_figure(_sweep_report(), "sweep-lines", settings=settings)
    ax = fig.axes[0]
    assert len(ax.get_lines()) == 2
    assert ax.get_xscale() == "log"
    assert ax.get_xlabel() == "n_e"


def test_misspec_plot_bars(settings):
    fig = build_figure(_misspec_report(), "misspec-bars", metric="ate_error", settings=settings)
    ax = fig.axes[0]
    assert len(ax.patches) == 6
    assert [t.get_text() for t in ax.get_xticklabels()] == list(MISSPEC_PRESETS)
    assert ax.get_ylabel() == "ATE error"


def test_plot_kind_must_match_report(settings):
    with pytest.raises(PreconditionError):
        build_figure(_misspec_report(), "sweep-lines", settings=settings)
    with pytest.raises(PreconditionError):
        build_figure(_sweep_report(), "misspec-bars", settings=settings)
    with pytest.raises(PreconditionError):
        build_figure(_sweep_report(), "heatmap", settings=settings)


def test_svg_output_is_deterministic(settings, out_dir):
    first = emit_plot(_sweep_report(), "sweep-lines", out_dir / "a.svg", settings=settings)
    second = emit_plot(_sweep_report(), "sweep-lines", out_dir / "b.svg", settings=settings)
    assert first.read_bytes() == second.read_bytes()
    assert first.read_bytes().lstrip().startswith(b"<?xml")


def test_cli_gen_fit_eval(out_dir):
    """Test the gen -> fit -> eval chain with oracle nuisances"""
    out = str(out_dir)
    assert main(["gen", "dataset1", "--n-e", "200", "--n-o", "300", "--seed", "3", "--out", out]) == 0
    data = out_dir / "dataset1_seed3.csv"
    truth = out_dir / "dataset1_seed3_truth.csv"
    assert data.exists() and truth.exists()

    assert main(["fit", str(data), "--estimator", "naive", "--backend", "oracle", "--out", out]) == 0
    provenance = json.loads((out_dir / "provenance.json").read_text())
    assert provenance["config"]["kind"] == "naive"

    assert main(["eval", str(out_dir / "tau_hat.csv"), str(truth), "--out", out]) == 0
    result = json.loads((out_dir / "eval.json").read_text())
    assert result["pehe"] < 1e-8
    assert result["rows"] == 500


def test_cli_exp_and_plot(out_dir):
    overrides = out_dir / "overrides.json"
    overrides.write_text(json.dumps({"experiments": {"oracle_check": {"n_e": 300, "n_o": 450}}}))
    out = str(out_dir)
    code = main(["exp", "oracle-check", "--config", str(overrides), "--replications", "1", "--out", out])
    assert code == 0
    report = load_report_json(out_dir / "oracle-check.json")
    assert len(report.records) == 4
    assert report.config["n_e"] == 300
    # an oracle-check report cannot be drawn as misspecification bars
    assert main(["plot", str(out_dir / "oracle-check.json"), "--kind", "misspec-bars", "--out", out]) == 1


def test_cli_error_exit_codes(out_dir):
    """Test library errors exit with 1"""
    bad = out_dir / "bad.csv"
    bad.write_text("g,a,s\nE,0,1.0\n")
    assert main(["fit", str(bad), "--out", str(out_dir)]) == 1
    assert main(["gen", "ihdp", "--out", str(out_dir)]) == 1


def test_cli_unexpected_failure_exit_code(out_dir, mocker):
    mocker.patch("src.harness.cli.sample_dataset1", side_effect=RuntimeError("boom"))
    assert main(["gen", "dataset1", "--out", str(out_dir)]) == 2
