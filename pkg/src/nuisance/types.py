"""Nuisance-function containers, backend specs and the robustness sets"""
from dataclasses import dataclass, field, fields, replace
from functools import partial
from typing import Any, Callable, Dict, Iterable, Optional

import numpy as np

from src.common.errors import PreconditionError
from src.regress.specs import DEFAULT_CLIP, as_design, clip_probabilities

OUTCOME_NUISANCES = ("mu_S_E", "mu_S_O", "mu_Y_O")
PROPENSITY_NUISANCES = ("pi_E", "pi_O", "pi_G")
NUISANCE_NAMES = OUTCOME_NUISANCES + PROPENSITY_NUISANCES

BACKENDS = ("correct-parametric", "misspecified-parametric", "kernel", "mlp-shared", "oracle")
ORACLE_SOURCES = ("dataset1",)

# Nuisance subsets any one of which keeps the multiply robust estimator consistent
LEMMA_SETS = {
    "set1": ("mu_S_O", "mu_S_E", "mu_Y_O"),
    "set2": ("pi_E", "pi_O", "pi_G"),
    "set3": ("mu_S_E", "pi_O"),
    "set4": ("pi_E", "mu_S_O", "mu_Y_O", "pi_G"),
}


def _constant(X, value):
    return np.full(as_design(X).shape[0], float(value))


def _shifted(X, fn, shift):
    return fn(X) + shift


@dataclass(frozen=True, eq=False)
class ArmPair:
    """An arm-indexed function (a, x) -> real stored as one callable per arm"""

    arm0: Callable[[np.ndarray], np.ndarray]
    arm1: Callable[[np.ndarray], np.ndarray]

    def __call__(self, a, X):
        X = as_design(X)
        a = np.broadcast_to(np.asarray(a), (X.shape[0],))
        return np.where(a == 1, self.arm1(X), self.arm0(X))

    def arm(self, a):
        return self.arm1 if int(a) == 1 else self.arm0


@dataclass(frozen=True, eq=False)
class NuisanceValues:
    """All nuisance evaluations at a batch of covariates"""

    mu_S_E0: np.ndarray
    mu_S_E1: np.ndarray
    mu_S_O0: np.ndarray
    mu_S_O1: np.ndarray
    mu_Y_O0: np.ndarray
    mu_Y_O1: np.ndarray
    pi_E: np.ndarray
    pi_O: np.ndarray
    pi_G: np.ndarray
    p_O: float

    def plug_in(self) -> np.ndarray:
        """Identification contrast of the outcome nuisances"""
        return (
            self.mu_Y_O1 - self.mu_Y_O0
            + self.mu_S_E1 - self.mu_S_E0
            + self.mu_S_O0 - self.mu_S_O1
        )

    def at_arm(self, name, a) -> np.ndarray:
        """mu_<name>(a_i, x_i) row-wise for an arm vector a"""
        return np.where(np.asarray(a) == 1, getattr(self, f"{name}1"), getattr(self, f"{name}0"))


@dataclass(frozen=True, eq=False)
class NuisanceSet:
    mu_S_E: ArmPair
    mu_S_O: ArmPair
    mu_Y_O: ArmPair
    pi_E: Callable[[np.ndarray], np.ndarray]
    pi_O: Callable[[np.ndarray], np.ndarray]
    pi_G: Callable[[np.ndarray], np.ndarray]
    p_O: float
    clip: float = DEFAULT_CLIP
    provenance: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 < self.p_O < 1.0:
            raise PreconditionError(f"p_O must lie in (0, 1), got {self.p_O}")
        if not 0.0 < self.clip < 0.5:
            raise PreconditionError(f"probability clip must lie in (0, 0.5), got {self.clip}")

    def propensity(self, name, X) -> np.ndarray:
        return clip_probabilities(np.asarray(getattr(self, name)(as_design(X)), dtype=float), self.clip)

    def evaluate(self, X) -> NuisanceValues:
        X = as_design(X)
        return NuisanceValues(
            mu_S_E0=np.asarray(self.mu_S_E.arm0(X), dtype=float),
            mu_S_E1=np.asarray(self.mu_S_E.arm1(X), dtype=float),
            mu_S_O0=np.asarray(self.mu_S_O.arm0(X), dtype=float),
            mu_S_O1=np.asarray(self.mu_S_O.arm1(X), dtype=float),
            mu_Y_O0=np.asarray(self.mu_Y_O.arm0(X), dtype=float),
            mu_Y_O1=np.asarray(self.mu_Y_O.arm1(X), dtype=float),
            pi_E=self.propensity("pi_E", X),
            pi_O=self.propensity("pi_O", X),
            pi_G=self.propensity("pi_G", X),
            p_O=float(self.p_O),
        )

    @classmethod
    def constant(
        cls,
        mu_S_E=(0.0, 0.0),
        mu_S_O=(0.0, 0.0),
        mu_Y_O=(0.0, 0.0),
        pi_E=0.5,
        pi_O=0.5,
        pi_G=0.5,
        p_O=0.5,
        clip=DEFAULT_CLIP,
    ):
        """Nuisances that ignore x; arm pairs are given as (a=0, a=1)"""

        def pair(values):
            return ArmPair(partial(_constant, value=values[0]), partial(_constant, value=values[1]))

        return cls(
            mu_S_E=pair(mu_S_E),
            mu_S_O=pair(mu_S_O),
            mu_Y_O=pair(mu_Y_O),
            pi_E=partial(_constant, value=pi_E),
            pi_O=partial(_constant, value=pi_O),
            pi_G=partial(_constant, value=pi_G),
            p_O=p_O,
            clip=clip,
            provenance={"backends": {name: "constant" for name in NUISANCE_NAMES}},
        )

    def with_provenance(self, **entries):
        return replace(self, provenance={**self.provenance, **entries})


def with_additive_bias(ns: NuisanceSet, names: Iterable[str], bias: float) -> NuisanceSet:
    """Corrupt the named nuisances

    Outcome functions move by +bias on arm 1 and -bias on arm 0 so the arm contrast
    shifts by 2 * bias; propensities move by +bias before clipping.
    """
    changes = {}
    for name in names:
        if name not in NUISANCE_NAMES:
            raise PreconditionError(f"unknown nuisance '{name}'")
        current = getattr(ns, name)
        if name in OUTCOME_NUISANCES:
            changes[name] = ArmPair(
                partial(_shifted, fn=current.arm0, shift=-bias),
                partial(_shifted, fn=current.arm1, shift=bias),
            )
        else:
            changes[name] = partial(_shifted, fn=current, shift=bias)

    corrupted = dict(ns.provenance.get("corrupted", {}))
    corrupted.update({name: bias for name in names})
    return replace(ns, provenance={**ns.provenance, "corrupted": corrupted}, **changes)


@dataclass(frozen=True)
class NuisanceSpec:
    """Per-nuisance backend choice"""

    mu_S_E: str = "kernel"
    mu_S_O: str = "kernel"
    mu_Y_O: str = "kernel"
    pi_E: str = "kernel"
    pi_O: str = "kernel"
    pi_G: str = "kernel"
    # analytic source for oracle backends
    oracle: Optional[str] = None
    # fixes p(G=O) instead of using the empirical group fraction
    pin_p_O: Optional[float] = None
    clip: float = DEFAULT_CLIP
    mlp: Optional[Dict[str, Any]] = None
    # per-nuisance loss weights for the shared network (missing names weigh 1)
    head_weights: Optional[Dict[str, float]] = None

    def __post_init__(self):
        for name in NUISANCE_NAMES:
            if getattr(self, name) not in BACKENDS:
                raise PreconditionError(f"unknown backend '{getattr(self, name)}' for {name}")
        if self.uses("oracle") and self.oracle not in ORACLE_SOURCES:
            raise PreconditionError(
                f"oracle nuisances are only available for {ORACLE_SOURCES}, got oracle={self.oracle!r}"
            )
        if self.pin_p_O is not None and not 0.0 < self.pin_p_O < 1.0:
            raise PreconditionError(f"pinned p_O must lie in (0, 1), got {self.pin_p_O}")
        if self.head_weights is not None:
            unknown = set(self.head_weights) - set(NUISANCE_NAMES)
            if unknown:
                raise PreconditionError(f"head weights name unknown nuisances {sorted(unknown)}")
            if any(float(w) < 0 for w in self.head_weights.values()):
                raise PreconditionError("head weights must be >= 0")

    def backend(self, name) -> str:
        return getattr(self, name)

    def uses(self, backend) -> bool:
        return any(getattr(self, name) == backend for name in NUISANCE_NAMES)

    @property
    def shared(self) -> bool:
        return self.uses("mlp-shared")

    @classmethod
    def uniform(cls, backend, **kwargs):
        return cls(**{name: backend for name in NUISANCE_NAMES}, **kwargs)

    @classmethod
    def from_correct(cls, names: Iterable[str], **kwargs):
        """Correct-parametric for the named nuisances, misspecified-parametric for the rest"""
        names = set(names)
        unknown = names - set(NUISANCE_NAMES)
        if unknown:
            raise PreconditionError(f"unknown nuisances {sorted(unknown)}")
        return cls(
            **{
                name: "correct-parametric" if name in names else "misspecified-parametric"
                for name in NUISANCE_NAMES
            },
            **kwargs,
        )

    def correct_mask(self) -> Dict[str, bool]:
        return {name: getattr(self, name) != "misspecified-parametric" for name in NUISANCE_NAMES}

    def describe(self) -> Dict[str, Any]:
        desc = {f.name: getattr(self, f.name) for f in fields(self) if f.name in NUISANCE_NAMES}
        if self.oracle:
            desc["oracle"] = self.oracle
        if self.pin_p_O is not None:
            desc["pin_p_O"] = self.pin_p_O
        if self.shared and self.head_weights:
            desc["head_weights"] = dict(self.head_weights)
        return desc
