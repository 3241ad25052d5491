"""Two-stage HLCE pipelines and the one-stage naive plug-in"""
import logging
from dataclasses import dataclass, field, replace
from functools import partial
from typing import Any, Callable, Dict, List, Optional

import numpy as np
from sklearn.model_selection import StratifiedKFold

from src.common.config import load_config
from src.common.errors import PositivityError, PreconditionError
from src.common.seeding import derive_seed
from src.dataset.panel import PanelDataset, split_indices
from src.nuisance.fit import fit_nuisances
from src.nuisance.types import NuisanceSet, NuisanceSpec
from src.pseudo.outcomes import pseudo_outcome
from src.regress.factory import fit_regressor
from src.regress.specs import RegressorSpec, as_design

logger = logging.getLogger(__name__)

ESTIMATOR_KINDS = ("naive", "reg", "pro", "mr")
SPLITTINGS = ("full-data", "two-fold-split", "k-fold-crossfit")


@dataclass(frozen=True)
class EstimatorConfig:
    kind: str = "mr"
    nuisance: NuisanceSpec = field(default_factory=NuisanceSpec)
    stage2: RegressorSpec = field(default_factory=RegressorSpec)
    splitting: str = "full-data"
    folds: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ESTIMATOR_KINDS:
            raise PreconditionError(f"unknown estimator kind '{self.kind}'")
        if self.splitting not in SPLITTINGS:
            raise PreconditionError(f"unknown splitting '{self.splitting}'")
        if self.splitting == "k-fold-crossfit" and self.folds < 2:
            raise PreconditionError(f"cross-fitting needs at least 2 folds, got {self.folds}")

    def describe(self) -> Dict[str, Any]:
        desc = {
            "kind": self.kind,
            "nuisance": self.nuisance.describe(),
            "splitting": self.splitting,
            "seed": self.seed,
        }
        if self.kind != "naive":
            desc["stage2"] = self.stage2.describe()
        if self.splitting == "k-fold-crossfit":
            desc["folds"] = self.folds
        return desc


@dataclass(frozen=True, eq=False)
class FittedHLCE:
    predict_fn: Callable[[np.ndarray], np.ndarray]
    d: int
    provenance: Dict[str, Any] = field(default_factory=dict)

    def predict(self, X) -> np.ndarray:
        return predict(self, X)


def _naive_predict(X, nuisance_sets: List[NuisanceSet]):
    # cross-fitted nuisance sets are averaged through their plug-ins
    return np.mean([ns.evaluate(X).plug_in() for ns in nuisance_sets], axis=0)


def _nuisance_settings(settings):
    return settings if settings is not None else load_config()


def _crossfit_folds(dataset: PanelDataset, folds, seed):
    labels = (dataset.g == "O").astype(int) * 2 + dataset.a
    _, counts = np.unique(labels, return_counts=True)
    if counts.min() < folds:
        raise PositivityError(f"smallest (g, a) stratum has {counts.min()} rows, fewer than {folds} folds")
    splitter = StratifiedKFold(n_splits=folds, shuffle=True, random_state=derive_seed(seed, 0) % (2**32))
    return list(splitter.split(np.zeros(dataset.n), labels))


def nuisance_spec_for(config: EstimatorConfig, settings) -> NuisanceSpec:
    """The nuisance spec with kind-specific shared-network head weights filled in"""
    spec = config.nuisance
    if not spec.shared or spec.head_weights is not None:
        return spec
    weights = settings.get("nuisance", {}).get("head_weights", {}).get(config.kind)
    if not weights:
        return spec
    return replace(spec, head_weights={name: float(w) for name, w in weights.items()})


def _fit_stage1(dataset, config, settings):
    """Nuisance fits and the rows each one scores: [(NuisanceSet, scored row indices)]"""
    config = replace(config, nuisance=nuisance_spec_for(config, settings))
    if config.splitting == "full-data":
        ns = fit_nuisances(dataset, config.nuisance, settings, seed=config.seed)
        return [(ns, np.arange(dataset.n))]

    if config.splitting == "two-fold-split":
        first, second = split_indices(dataset, (0.5, 0.5), config.seed)
        ns = fit_nuisances(dataset.take(first), config.nuisance, settings, seed=config.seed)
        return [(ns, second)]

    fits = []
    for fold, (train_idx, score_idx) in enumerate(_crossfit_folds(dataset, config.folds, config.seed)):
        ns = fit_nuisances(dataset.take(train_idx), config.nuisance, settings, seed=derive_seed(config.seed, fold))
        fits.append((ns, score_idx))
    return fits


def compute_pseudo_outcomes(dataset: PanelDataset, config: EstimatorConfig, settings=None):
    """Pseudo outcomes of config.kind on the rows stage 2 regresses on: (row indices, values)"""
    if config.kind == "naive":
        raise PreconditionError("the naive estimator has no pseudo outcome")
    settings = _nuisance_settings(settings)
    fits = _fit_stage1(dataset, config, settings)
    return _score(dataset, config, fits)


def _score(dataset, config, fits):
    rows = np.concatenate([idx for _, idx in fits])
    values = np.empty(dataset.n)
    for ns, idx in fits:
        values[idx] = pseudo_outcome(config.kind, dataset.take(idx), ns)
    rows = np.sort(rows)
    return rows, values[rows]


def fit_two_stage(dataset: PanelDataset, config: EstimatorConfig, settings: Optional[Dict[str, Any]] = None) -> FittedHLCE:
    """Stage 1: nuisances; stage 2: regress the pseudo outcome on x (naive: plug-in map)"""
    dataset.require_positivity()
    settings = _nuisance_settings(settings)
    counts = dataset.counts()
    provenance = {
        "config": config.describe(),
        "n": dataset.n,
        "n_e": counts[("E", 0)] + counts[("E", 1)],
        "n_o": counts[("O", 0)] + counts[("O", 1)],
    }

    fits = _fit_stage1(dataset, config, settings)
    provenance["nuisance"] = [ns.provenance for ns, _ in fits]

    if config.kind == "naive":
        logger.info(f"Fitted naive plug-in on {dataset.n} rows ({config.splitting})")
        return FittedHLCE(
            predict_fn=partial(_naive_predict, nuisance_sets=[ns for ns, _ in fits]),
            d=dataset.d,
            provenance=provenance,
        )

    rows, pseudo = _score(dataset, config, fits)
    stage2 = fit_regressor(dataset.x[rows], pseudo, config.stage2, config=settings, seed=config.seed)
    provenance["stage2"] = {"rows": int(rows.shape[0]), **stage2.diagnostics}

    logger.info(
        f"Fitted {config.kind} on {dataset.n} rows ({config.splitting}, stage 2 {config.stage2.kind} on {rows.shape[0]} rows)"
    )
    return FittedHLCE(predict_fn=stage2.predict, d=dataset.d, provenance=provenance)


def predict(model: FittedHLCE, X) -> np.ndarray:
    """Row-wise tau-hat"""
    X = as_design(X)
    if X.shape[1] != model.d:
        raise PreconditionError(f"model expects {model.d} covariates, got {X.shape[1]}")
    if X.shape[0] == 0:
        return np.empty(0)
    return np.asarray(model.predict_fn(X), dtype=float).reshape(-1)


def ate(model: FittedHLCE, X) -> float:
    """Mean of tau-hat over the rows of X"""
    values = predict(model, X)
    if values.shape[0] == 0:
        raise PreconditionError("ate needs at least one row")
    return float(values.mean())
