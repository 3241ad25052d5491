"""Stage-1 fitting of the six nuisance functions on their conditional subpopulations"""
import logging
from typing import Any, Dict, Optional

from src.common.config import load_config
from src.dataset.panel import EXPERIMENTAL, OBSERVATIONAL, PanelDataset
from src.mlp.network import MLPConfig
from src.mlp.shared import fit_nuisances_shared
from src.nuisance.oracle import ORACLES
from src.nuisance.types import ArmPair, NuisanceSet, NuisanceSpec, NUISANCE_NAMES
from src.regress.factory import fit_classifier, fit_regressor
from src.regress.specs import ClassifierSpec, RegressorSpec

logger = logging.getLogger(__name__)

# mean nuisance -> (group, response)
OUTCOME_SOURCES = {
    "mu_S_E": (EXPERIMENTAL, "s"),
    "mu_S_O": (OBSERVATIONAL, "s"),
    "mu_Y_O": (OBSERVATIONAL, "y"),
}


def regressor_spec_for(backend, settings) -> RegressorSpec:
    if backend == "correct-parametric":
        degree = settings.get("stage2", {}).get("parametric", {}).get("degree", 2)
        return RegressorSpec(kind="polynomial", degree=degree)
    if backend == "misspecified-parametric":
        return RegressorSpec(kind="misspec-linear")
    kernel = settings.get("regress", {}).get("kernel", {})
    return RegressorSpec(kind="kernel-ridge", kernel=kernel.get("family", "rbf"), nu=kernel.get("nu", 2.5))


def classifier_spec_for(name, backend, clip) -> ClassifierSpec:
    if name == "pi_G":
        if backend == "correct-parametric":
            return ClassifierSpec(kind="frequency", clip=clip)
        if backend == "misspecified-parametric":
            # frequency of G=O standing in for p(G=E | x)
            return ClassifierSpec(kind="frequency", clip=clip, complement=True)
        return ClassifierSpec(kind="logistic", clip=clip)
    if backend == "misspecified-parametric":
        return ClassifierSpec(kind="misspec-quadratic-logit", clip=clip)
    return ClassifierSpec(kind="logistic", clip=clip)


def _fit_outcome(dataset, name, backend, settings, seed):
    group, response = OUTCOME_SOURCES[name]
    spec = regressor_spec_for(backend, settings)
    models = []
    for a in (0, 1):
        part = dataset.subgroup(g=group, a=a)
        target = part.s if response == "s" else part.y.compressed()
        models.append(fit_regressor(part.x, target, spec, config=settings, seed=seed))
    logger.debug(f"Fitted {name} with {spec.kind}")
    return ArmPair(models[0], models[1])


def _fit_propensity(dataset, name, backend, clip, settings, seed):
    spec = classifier_spec_for(name, backend, clip)
    if name == "pi_G":
        return fit_classifier(dataset.x, dataset.is_experimental.astype(float), spec, config=settings, seed=seed)
    part = dataset.subgroup(g=EXPERIMENTAL if name == "pi_E" else OBSERVATIONAL)
    return fit_classifier(part.x, part.a.astype(float), spec, config=settings, seed=seed)


def fit_nuisances(
    dataset: PanelDataset,
    spec: NuisanceSpec,
    settings: Optional[Dict[str, Any]] = None,
    seed: int = 0,
) -> NuisanceSet:
    """Fit each nuisance with its configured backend, in a fixed order"""
    dataset.require_positivity()
    settings = settings if settings is not None else load_config()
    p_O = spec.pin_p_O if spec.pin_p_O is not None else dataset.group_prior()

    # the oracle p(G=E | x) is the experimental share 1 - p_O
    oracle = ORACLES[spec.oracle](p_O=p_O, clip=spec.clip) if spec.uses("oracle") else None
    shared = None
    if spec.shared:
        mlp_config = MLPConfig.from_settings({**settings.get("mlp", {}), **(spec.mlp or {})}).with_seed(seed)
        shared = fit_nuisances_shared(dataset, mlp_config, spec.head_weights, clip=spec.clip, p_O=p_O)

    functions = {}
    for name in NUISANCE_NAMES:
        backend = spec.backend(name)
        if backend == "oracle":
            functions[name] = getattr(oracle, name)
        elif backend == "mlp-shared":
            functions[name] = getattr(shared, name)
        elif name.startswith("mu_"):
            functions[name] = _fit_outcome(dataset, name, backend, settings, seed)
        else:
            functions[name] = _fit_propensity(dataset, name, backend, spec.clip, settings, seed)

    logger.info(f"Fitted nuisances on {dataset.n} rows: {spec.describe()}")
    return NuisanceSet(
        **functions,
        p_O=p_O,
        clip=spec.clip,
        provenance={
            "backends": spec.describe(),
            "n": dataset.n,
            "counts": _count_labels(dataset),
            **({"shared": shared.provenance["training"]} if shared is not None else {}),
        },
    )


def _count_labels(dataset):
    return {f"{g}{a}": count for (g, a), count in dataset.counts().items()}
