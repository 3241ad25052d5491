"""Command-line surface: gen, fit, eval, exp, plot"""
import argparse
import json
import logging
from pathlib import Path

import pandas as pd

from src.common.config import load_config, load_json_overrides, merge_overrides
from src.common.errors import PreconditionError, SchemaError
from src.dataset.io import load_covariates, load_csv, load_truth, write_csv, write_truth
from src.estimator.two_stage import ESTIMATOR_KINDS, SPLITTINGS, EstimatorConfig, fit_two_stage, predict
from src.harness.experiments import EXPERIMENTS, ExperimentConfig, run_experiment
from src.harness.plots import METRICS, PLOT_KINDS, emit_plot
from src.harness.reports import emit_reports, load_report_json
from src.metrics.evaluation import ate_error, pehe
from src.nuisance.types import BACKENDS, NuisanceSpec
from src.regress.specs import REGRESSOR_KINDS, RegressorSpec
from src.simgen.semisynth import SemiSynthParams, sample_semisynth
from src.simgen.synthetic import sample_dataset1, sample_dataset2

logger = logging.getLogger(__name__)

GENERATORS = ("dataset1", "dataset2", "ihdp", "news")
LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")


def _common_flags() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="base seed (default: config.yaml)")
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("--config", default=None, help="JSON file overriding config.yaml")
    common.add_argument("--workers", type=int, default=None, help="parallel replication workers")
    common.add_argument("--replications", type=int, default=None)
    common.add_argument("--fast", action="store_true", default=None, help="desk-scale experiment sizes")
    common.add_argument("--log-level", default="INFO", choices=LOG_LEVELS)
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common_flags()
    parser = argparse.ArgumentParser(prog="hlce", description="Heterogeneous long-term causal effect estimation")
    commands = parser.add_subparsers(dest="command", required=True)

    gen = commands.add_parser("gen", parents=[common], help="sample a dataset with its ground truth")
    gen.add_argument("generator", choices=GENERATORS)
    gen.add_argument("--n-e", type=int, default=1000)
    gen.add_argument("--n-o", type=int, default=2000)
    gen.add_argument("--covariates", default=None, help="covariate CSV for ihdp/news")

    fit = commands.add_parser("fit", parents=[common], help="fit an estimator and write per-row tau-hat")
    fit.add_argument("data", help="panel CSV")
    fit.add_argument("--estimator", choices=ESTIMATOR_KINDS, default="mr")
    fit.add_argument("--backend", choices=BACKENDS, default=None, help="nuisance backend for all six nuisances")
    fit.add_argument("--oracle", default=None, help="analytic nuisance source for the oracle backend")
    fit.add_argument("--stage2", choices=REGRESSOR_KINDS, default=None)
    fit.add_argument("--splitting", choices=SPLITTINGS, default=None)
    fit.add_argument("--predict-on", default=None, help="covariate CSV to predict on (default: the input rows)")

    evaluate = commands.add_parser("eval", parents=[common], help="score predictions against a truth sidecar")
    evaluate.add_argument("predictions", help="CSV with a tau_hat column")
    evaluate.add_argument("truth", help="truth sidecar CSV")
    evaluate.add_argument("--unnormalized-ate", action="store_true", help="difference of sums instead of means")

    exp = commands.add_parser("exp", parents=[common], help="run an experiment and write its report")
    exp.add_argument("experiment", choices=EXPERIMENTS)
    exp.add_argument("--estimators", nargs="+", choices=ESTIMATOR_KINDS, default=None)
    exp.add_argument("--covariates", default=None, help="covariate CSV for semisynth")
    exp.add_argument("--preset", choices=("ihdp", "news"), default=None)

    plot = commands.add_parser("plot", parents=[common], help="draw an SVG from a JSON report")
    plot.add_argument("report", help="JSON report")
    plot.add_argument("--kind", choices=PLOT_KINDS, required=True)
    plot.add_argument("--metric", choices=METRICS, default="pehe")
    return parser


def load_settings(args):
    settings = load_config()
    if args.config:
        settings = merge_overrides(settings, load_json_overrides(args.config))
    return settings


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _base_seed(args, settings):
    return args.seed if args.seed is not None else settings.get("experiments", {}).get("seed", 0)


def cmd_gen(args, settings):
    seed = _base_seed(args, settings)
    generators = settings.get("generators", {})
    noise = {"noise_s": generators.get("noise_s", 1.0), "noise_y": generators.get("noise_y", 1.0)}
    if args.generator == "dataset1":
        output = sample_dataset1(args.n_e, args.n_o, seed, **noise)
    elif args.generator == "dataset2":
        gp = generators.get("gp", {})
        output = sample_dataset2(args.n_e, args.n_o, seed, **noise, **gp)
    else:
        if not args.covariates:
            raise PreconditionError(f"gen {args.generator} needs --covariates FILE")
        params = SemiSynthParams.from_preset(args.generator, load_covariates(args.covariates), settings)
        output = sample_semisynth(params, seed)

    out = _out_dir(args)
    stem = f"{args.generator}_seed{seed}"
    write_csv(output.dataset, out / f"{stem}.csv")
    write_truth(output.truth, out / f"{stem}_truth.csv")
    print(f"{out / stem}.csv ({output.dataset.n} rows)")


def _fit_config(args, settings) -> EstimatorConfig:
    clip = settings.get("clip", 0.01)
    backend = args.backend or settings.get("nuisance", {}).get("default_backend", "kernel")
    oracle = args.oracle or ("dataset1" if backend == "oracle" else None)
    stage2_kind = args.stage2 or settings.get("stage2", {}).get("nonparametric", {}).get("kind", "kernel-ridge")
    degree = settings.get("stage2", {}).get("parametric", {}).get("degree", 2)
    estimator = settings.get("estimator", {})
    return EstimatorConfig(
        kind=args.estimator,
        nuisance=NuisanceSpec.uniform(backend, oracle=oracle, clip=clip),
        stage2=RegressorSpec(kind=stage2_kind, degree=degree),
        splitting=args.splitting or estimator.get("splitting", "full-data"),
        folds=estimator.get("folds", 5),
        seed=_base_seed(args, settings),
    )


def cmd_fit(args, settings):
    dataset = load_csv(args.data)
    config = _fit_config(args, settings)
    model = fit_two_stage(dataset, config, settings)
    X = load_covariates(args.predict_on) if args.predict_on else dataset.x
    tau_hat = predict(model, X)

    out = _out_dir(args)
    pd.DataFrame({"tau_hat": [repr(float(v)) for v in tau_hat]}).to_csv(out / "tau_hat.csv", index=False)
    (out / "provenance.json").write_text(json.dumps(model.provenance, indent=2, default=str) + "\n")
    print(f"{out / 'tau_hat.csv'} ({tau_hat.shape[0]} rows)")


def cmd_eval(args, settings):
    frame = pd.read_csv(args.predictions)
    if "tau_hat" not in frame.columns:
        raise SchemaError(f"{args.predictions} has no tau_hat column")
    truth = load_truth(args.truth)
    tau_hat = frame["tau_hat"].to_numpy(dtype=float)
    result = {
        "pehe": pehe(tau_hat, truth.tau),
        "ate_error": ate_error(tau_hat, truth.tau, normalized=not args.unnormalized_ate),
        "rows": int(truth.n),
    }
    out = _out_dir(args)
    (out / "eval.json").write_text(json.dumps(result, indent=2) + "\n")
    print(json.dumps(result))


def cmd_exp(args, settings):
    config = ExperimentConfig.from_settings(
        args.experiment,
        settings,
        seed=args.seed,
        workers=args.workers,
        replications=args.replications,
        fast=args.fast,
        estimators=args.estimators,
        covariates=args.covariates,
        preset=args.preset,
    )
    report = run_experiment(config)
    formats = settings.get("reports", {}).get("formats", ["csv", "json"])
    for path in emit_reports(report, _out_dir(args), args.experiment, formats):
        print(path)


def cmd_plot(args, settings):
    report = load_report_json(args.report)
    stem = Path(args.report).stem
    path = emit_plot(report, args.kind, _out_dir(args) / f"{stem}_{args.kind}_{args.metric}.svg", args.metric, settings)
    print(path)


COMMANDS = {"gen": cmd_gen, "fit": cmd_fit, "eval": cmd_eval, "exp": cmd_exp, "plot": cmd_plot}


def run(args) -> None:
    settings = load_settings(args)
    logger.info(f"Running {args.command}")
    COMMANDS[args.command](args, settings)
