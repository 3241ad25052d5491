"""Experiment designs: misspecification, sample-size sweeps, rates, oracle check, semi-synthetic runs"""
import logging
import time
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from joblib import Parallel, delayed

from src.common.config import load_config
from src.common.errors import PreconditionError
from src.common.seeding import derive_seed
from src.dataset.io import load_covariates
from src.dataset.panel import split_indices
from src.estimator.two_stage import EstimatorConfig, fit_two_stage, predict
from src.metrics.evaluation import MetricRecord, ate_error, pehe, rate_slope, spearman_trend, summarize
from src.nuisance.types import LEMMA_SETS, NUISANCE_NAMES, NuisanceSpec
from src.regress.specs import RegressorSpec
from src.simgen.semisynth import SemiSynthParams, placeholder_covariates, sample_semisynth
from src.simgen.synthetic import sample_dataset1, sample_dataset2

logger = logging.getLogger(__name__)

EXPERIMENTS = ("misspec", "sweep-e", "sweep-o", "rates", "oracle-check", "semisynth")


def _misspec_label(correct_sets):
    marks = [str(k) if f"set{k}" in correct_sets else f"{k}′" for k in range(1, 5)]
    return "M_{" + ",".join(marks) + "}"


# preset label -> nuisances fitted with the correct parametric family
MISSPEC_PRESETS = {
    _misspec_label({"set1", "set2", "set3", "set4"}): NUISANCE_NAMES,
    _misspec_label({"set1"}): LEMMA_SETS["set1"],
    _misspec_label({"set2"}): LEMMA_SETS["set2"],
    _misspec_label({"set3"}): LEMMA_SETS["set3"],
    _misspec_label({"set4"}): LEMMA_SETS["set4"],
    _misspec_label(set()): (),
}
ALL_MISSPECIFIED = _misspec_label(set())


def merge_presets(custom) -> Dict[str, Tuple[str, ...]]:
    """Built-in presets plus configured {label: [nuisance names]} masks"""
    presets = dict(MISSPEC_PRESETS)
    if not custom:
        return presets
    if not isinstance(custom, dict):
        raise PreconditionError("misspec presets must map a label to a list of nuisance names")
    for label, names in custom.items():
        if isinstance(names, str):
            names = [names]
        presets[str(label)] = tuple(names or ())
    logger.info(f"Using {len(presets)} misspecification presets ({len(custom)} configured)")
    return presets


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    experiment: str
    estimators: Tuple[str, ...] = ("naive", "reg", "pro", "mr")
    replications: int = 10
    seed: int = 0
    workers: int = 1
    fast: bool = False
    fractions: Tuple[float, ...] = (0.63, 0.27, 0.10)
    n_e: int = 1000
    n_o: int = 2000
    e_grid: Tuple[int, ...] = (100, 150, 250, 500, 1000, 1500, 3000, 5000, 10000)
    o_grid: Tuple[int, ...] = (400, 600, 800, 1000, 2000, 3000, 4000, 5000, 10000)
    rate_grid: Tuple[int, ...] = (2000, 4000, 8000, 16000, 32000)
    exp_fraction: float = 0.4
    nuisance_backend: str = "kernel"
    preset: str = "ihdp"
    covariates: Optional[str] = None
    # misspec label -> nuisances fitted with the correct parametric family
    presets: Dict[str, Tuple[str, ...]] = field(default_factory=lambda: dict(MISSPEC_PRESETS))
    settings: Dict[str, Any] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise PreconditionError(f"unknown experiment '{self.experiment}'")
        if self.replications < 1:
            raise PreconditionError(f"replications must be >= 1, got {self.replications}")
        if not self.estimators:
            raise PreconditionError("at least one estimator kind is required")
        if not self.e_grid or not self.o_grid or not self.rate_grid:
            raise PreconditionError("size grids must be non-empty")
        if self.experiment == "misspec" and "mr" not in self.estimators:
            raise PreconditionError("the misspecification experiment evaluates the mr estimator")
        if self.experiment == "rates" and len(self.rate_grid) < 4:
            raise PreconditionError(f"rate experiments need at least 4 grid sizes, got {len(self.rate_grid)}")
        if not self.presets:
            raise PreconditionError("at least one misspecification preset is required")
        for label, names in self.presets.items():
            unknown = set(names) - set(NUISANCE_NAMES)
            if unknown:
                raise PreconditionError(f"preset {label} names unknown nuisances {sorted(unknown)}")

    @classmethod
    def from_settings(cls, experiment, settings=None, **overrides) -> "ExperimentConfig":
        """Experiment defaults from config.yaml; keyword overrides (CLI flags) win when not None"""
        settings = settings if settings is not None else load_config()
        section = settings.get("experiments", {})
        kwargs = {
            "experiment": experiment,
            "estimators": tuple(section.get("estimators", ("naive", "reg", "pro", "mr"))),
            "replications": section.get("replications", 10),
            "seed": section.get("seed", 0),
            "workers": section.get("workers", 1),
            "fractions": tuple(section.get("fractions", (0.63, 0.27, 0.10))),
            "settings": settings,
        }
        fast = bool(overrides.get("fast"))
        if experiment == "misspec":
            misspec = section.get("misspec", {})
            kwargs["n_e"] = misspec.get("fast_n_e" if fast else "n_e", 10000)
            kwargs["n_o"] = misspec.get("fast_n_o" if fast else "n_o", 15000)
            kwargs["estimators"] = ("mr",)
            kwargs["presets"] = merge_presets(misspec.get("presets"))
        elif experiment in ("sweep-e", "sweep-o"):
            sweep = section.get("sweep", {})
            kwargs.update(
                n_e=sweep.get("default_n_e", 1000),
                n_o=sweep.get("default_n_o", 2000),
                e_grid=tuple(sweep.get("e_grid", cls.e_grid)),
                o_grid=tuple(sweep.get("o_grid", cls.o_grid)),
                nuisance_backend=sweep.get("nuisance_backend", "kernel"),
            )
        elif experiment == "rates":
            rates = section.get("rates", {})
            kwargs.update(rate_grid=tuple(rates.get("grid", cls.rate_grid)), exp_fraction=rates.get("exp_fraction", 0.4))
        elif experiment == "oracle-check":
            oracle = section.get("oracle_check", {})
            kwargs.update(n_e=oracle.get("n_e", 10000), n_o=oracle.get("n_o", 15000))
        else:
            semisynth = section.get("semisynth", {})
            kwargs.update(
                preset=semisynth.get("preset", "ihdp"),
                covariates=semisynth.get("covariates"),
                nuisance_backend=semisynth.get("nuisance_backend", "kernel"),
            )
        kwargs.update({key: value for key, value in overrides.items() if value is not None})
        for key in ("estimators", "fractions", "e_grid", "o_grid", "rate_grid"):
            kwargs[key] = tuple(kwargs[key])
        return cls(**kwargs)

    def describe(self) -> Dict[str, Any]:
        desc = {
            "experiment": self.experiment,
            "estimators": list(self.estimators),
            "replications": self.replications,
            "seed": self.seed,
            "fractions": list(self.fractions),
        }
        if self.experiment == "misspec":
            desc.update(n_e=self.n_e, n_o=self.n_o, presets=list(self.presets))
        elif self.experiment == "oracle-check":
            desc.update(n_e=self.n_e, n_o=self.n_o)
        elif self.experiment == "sweep-e":
            desc.update(e_grid=list(self.e_grid), n_o=self.n_o, nuisance_backend=self.nuisance_backend)
        elif self.experiment == "sweep-o":
            desc.update(o_grid=list(self.o_grid), n_e=self.n_e, nuisance_backend=self.nuisance_backend)
        elif self.experiment == "rates":
            desc.update(rate_grid=list(self.rate_grid), exp_fraction=self.exp_fraction)
        else:
            desc.update(preset=self.preset, covariates=self.covariates, nuisance_backend=self.nuisance_backend)
        if self.fast:
            desc["fast"] = True
        return desc


@dataclass(frozen=True)
class Cell:
    """One (configuration, replication) unit of work"""

    preset: str
    n_e: int
    n_o: int
    replication: int
    seed: int


@dataclass(eq=False)
class ExperimentReport:
    config: Dict[str, Any]
    records: List[MetricRecord]
    summary: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "config": self.config,
            "records": [record.to_dict() for record in self.records],
            "summary": self.summary,
        }


def _stage2_spec(config: ExperimentConfig, parametric: bool) -> RegressorSpec:
    stage2 = config.settings.get("stage2", {})
    if parametric:
        return RegressorSpec(kind="polynomial", degree=stage2.get("parametric", {}).get("degree", 2))
    kernel = config.settings.get("regress", {}).get("kernel", {})
    return RegressorSpec(kind="kernel-ridge", kernel=kernel.get("family", "rbf"), nu=kernel.get("nu", 2.5))


def estimator_config(config: ExperimentConfig, kind: str, cell: Cell) -> EstimatorConfig:
    """Nuisance backends, stage-2 learner and splitting used by each experiment"""
    clip = config.settings.get("clip", 0.01)
    seed = derive_seed(cell.seed, 1)
    if config.experiment == "misspec":
        nuisance = NuisanceSpec.from_correct(config.presets[cell.preset], clip=clip)
        return EstimatorConfig(kind=kind, nuisance=nuisance, stage2=_stage2_spec(config, True), seed=seed)
    if config.experiment == "rates":
        nuisance = NuisanceSpec.uniform("correct-parametric", clip=clip)
        return EstimatorConfig(
            kind=kind, nuisance=nuisance, stage2=_stage2_spec(config, True), splitting="two-fold-split", seed=seed
        )
    if config.experiment == "oracle-check":
        nuisance = NuisanceSpec.uniform("oracle", oracle="dataset1", clip=clip)
        return EstimatorConfig(kind=kind, nuisance=nuisance, stage2=_stage2_spec(config, True), seed=seed)

    estimator = config.settings.get("estimator", {})
    return EstimatorConfig(
        kind=kind,
        nuisance=NuisanceSpec.uniform(config.nuisance_backend, clip=clip),
        stage2=_stage2_spec(config, False),
        splitting=estimator.get("splitting", "full-data"),
        folds=estimator.get("folds", 5),
        seed=seed,
    )


def _covariate_matrix(config: ExperimentConfig):
    if config.covariates:
        return load_covariates(config.covariates)
    logger.warning(f"No covariate file configured for {config.preset}; using placeholder covariates")
    rows = 747 if config.preset == "ihdp" else 5000
    return placeholder_covariates(config.preset, rows, derive_seed(config.seed, 0))


def generate(config: ExperimentConfig, cell: Cell, covariates=None):
    generators = config.settings.get("generators", {})
    noise = {"noise_s": generators.get("noise_s", 1.0), "noise_y": generators.get("noise_y", 1.0)}
    if config.experiment in ("sweep-e", "sweep-o"):
        gp = generators.get("gp", {})
        return sample_dataset2(
            cell.n_e,
            cell.n_o,
            cell.seed,
            length_scale=gp.get("length_scale", 1.0),
            nu=gp.get("nu", 2.0),
            grid_min=gp.get("grid_min", -5.0),
            grid_max=gp.get("grid_max", 5.0),
            grid_points=gp.get("grid_points", 501),
            **noise,
        )
    if config.experiment == "semisynth":
        params = SemiSynthParams.from_preset(config.preset, covariates, config.settings)
        return sample_semisynth(params, cell.seed)
    return sample_dataset1(cell.n_e, cell.n_o, cell.seed, **noise)


def run_cell(config: ExperimentConfig, cell: Cell, covariates=None) -> List[MetricRecord]:
    """Fit every requested estimator on the train split and score it on the evaluation split(s)"""
    output = generate(config, cell, covariates)
    dataset, truth = output.dataset, output.truth
    train_idx, _, test_idx = split_indices(dataset, config.fractions, cell.seed)
    train = dataset.take(train_idx)
    counts = dataset.counts()
    n_e = counts[("E", 0)] + counts[("E", 1)]
    n_o = counts[("O", 0)] + counts[("O", 1)]

    splits = [("test", test_idx)]
    if config.experiment == "semisynth":
        splits.insert(0, ("train", train_idx))

    records = []
    for kind in config.estimators:
        started = time.perf_counter()
        model = fit_two_stage(train, estimator_config(config, kind, cell), config.settings)
        for split_name, idx in splits:
            tau_hat = predict(model, dataset.x[idx])
            records.append(
                MetricRecord(
                    estimator=kind,
                    preset=cell.preset,
                    n_e=n_e,
                    n_o=n_o,
                    seed=cell.seed,
                    pehe=pehe(tau_hat, truth.tau[idx]),
                    ate_error=ate_error(tau_hat, truth.tau[idx]),
                    wall_ms=round(1000.0 * (time.perf_counter() - started), 3),
                    split=split_name,
                )
            )
    logger.info(f"Cell {cell.preset} n_e={n_e} n_o={n_o} rep={cell.replication} done ({len(records)} records)")
    return records


def run_cells(config: ExperimentConfig, cells: List[Cell], covariates=None) -> List[MetricRecord]:
    """Evaluate cells, concurrently when workers > 1; results keep the cell order"""
    logger.info(f"Running {len(cells)} cells of {config.experiment} with {config.workers} worker(s)")
    results = Parallel(n_jobs=config.workers)(delayed(run_cell)(config, cell, covariates) for cell in cells)
    return [record for cell_records in results for record in cell_records]


def _cell(config, preset, n_e, n_o, replication):
    return Cell(preset, n_e, n_o, replication, derive_seed(config.seed, n_e, n_o, replication))


def _summary_table(records):
    return summarize(records).to_dict(orient="records")


def _report(config, records, **extra):
    return ExperimentReport(config=config.describe(), records=records, summary={"cells": _summary_table(records), **extra})


def run_misspec(config: ExperimentConfig) -> ExperimentReport:
    """mr under each correctness preset; presets of one replication share a data draw"""
    config = replace(config, estimators=("mr",))
    cells = [
        _cell(config, preset, config.n_e, config.n_o, rep)
        for preset in config.presets
        for rep in range(config.replications)
    ]
    records = run_cells(config, cells)
    return _report(config, records, presets={label: list(names) for label, names in config.presets.items()})


def _median_by(records, estimator, key):
    sizes = sorted({getattr(r, key) for r in records if r.estimator == estimator})
    medians = [
        float(np.median([r.pehe for r in records if r.estimator == estimator and getattr(r, key) == size]))
        for size in sizes
    ]
    return sizes, medians


def run_sweep(config: ExperimentConfig, axis: str) -> ExperimentReport:
    """Dataset 2 over one size grid with the other size at its default"""
    if axis not in ("e", "o"):
        raise PreconditionError(f"sweep axis must be 'e' or 'o', got '{axis}'")
    config = replace(config, experiment=f"sweep-{axis}")
    if axis == "e":
        sizes = [(n_e, config.n_o) for n_e in config.e_grid]
    else:
        sizes = [(config.n_e, n_o) for n_o in config.o_grid]
    cells = [_cell(config, "dataset2", n_e, n_o, rep) for n_e, n_o in sizes for rep in range(config.replications)]
    records = run_cells(config, cells)

    key = "n_e" if axis == "e" else "n_o"
    grid = config.e_grid if axis == "e" else config.o_grid
    trends = {}
    if len(grid) >= 2:
        for kind in config.estimators:
            trend_sizes, medians = _median_by(records, kind, key)
            trends[kind] = spearman_trend(trend_sizes, medians)
    return _report(config, records, spearman=trends, axis=axis)


def run_rates(config: ExperimentConfig) -> ExperimentReport:
    """Dataset 1 with correct parametric nuisances and a two-fold split; log-log slope of PEHE on n"""
    cells = []
    for n in config.rate_grid:
        n_e = int(round(config.exp_fraction * n))
        cells.extend(_cell(config, "dataset1", n_e, n - n_e, rep) for rep in range(config.replications))
    records = run_cells(config, cells)

    slopes = {}
    for kind in config.estimators:
        totals = {}
        for record in records:
            if record.estimator == kind:
                totals.setdefault(record.n_e + record.n_o, []).append(record.pehe)
        points = [(n, float(np.median(values))) for n, values in sorted(totals.items())]
        slopes[kind] = rate_slope(points)
        logger.info(f"Rate slope for {kind}: {slopes[kind]:.3f}")
    return _report(config, records, slopes=slopes)


def run_oracle_check(config: ExperimentConfig) -> ExperimentReport:
    """All estimators with the analytic Dataset-1 nuisances"""
    cells = [_cell(config, "oracle", config.n_e, config.n_o, rep) for rep in range(config.replications)]
    return _report(config, run_cells(config, cells))


def run_semisynth(config: ExperimentConfig) -> ExperimentReport:
    """IHDP-/News-style panels; within-sample (train) and out-of-sample (test) errors"""
    covariates = _covariate_matrix(config)
    n = covariates.shape[0]
    # group sizes are random here; cells are keyed by the covariate row count
    cells = [
        Cell(config.preset, n, 0, rep, derive_seed(config.seed, n, rep))
        for rep in range(config.replications)
    ]
    records = run_cells(config, cells, covariates)
    return _report(config, records, covariate_rows=n, covariate_columns=int(covariates.shape[1]))


def run_experiment(config: ExperimentConfig) -> ExperimentReport:
    if config.experiment == "misspec":
        return run_misspec(config)
    if config.experiment in ("sweep-e", "sweep-o"):
        return run_sweep(config, config.experiment[-1])
    if config.experiment == "rates":
        return run_rates(config)
    if config.experiment == "oracle-check":
        return run_oracle_check(config)
    return run_semisynth(config)
