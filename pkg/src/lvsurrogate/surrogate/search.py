"""Cross-validated hyperparameter search over the surrogate families."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from ..metrics import rmse
from .base import Family, SurrogateModel


@dataclass(frozen=True)
class Choice:
    values: tuple

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(self.values))
        if not self.values:
            raise ValueError("Choice needs at least one value")

    def sample(self, rng):
        return self.values[int(rng.integers(len(self.values)))]

    def grid(self):
        return list(self.values)


@dataclass(frozen=True)
class IntRange:
    low: int
    high: int       # inclusive

    def __post_init__(self):
        if int(self.low) != self.low or int(self.high) != self.high:
            raise ValueError("IntRange bounds must be integral")
        if self.high < self.low:
            raise ValueError("empty IntRange")

    def sample(self, rng):
        return int(rng.integers(self.low, self.high + 1))

    def grid(self):
        return list(range(self.low, self.high + 1))


@dataclass(frozen=True)
class Uniform:
    low: float
    high: float

    def __post_init__(self):
        if not self.low <= self.high:
            raise ValueError("empty Uniform range")

    def sample(self, rng):
        return float(rng.uniform(self.low, self.high))

    def grid(self):
        raise TypeError("continuous domain has no grid; use Choice")


@dataclass(frozen=True)
class LogUniform(Uniform):
    def __post_init__(self):
        if not 0 < self.low <= self.high:
            raise ValueError("LogUniform needs 0 < low <= high")

    def sample(self, rng):
        return float(math.exp(rng.uniform(math.log(self.low), math.log(self.high))))


class HyperSpace(dict):
    """Mapping of hyperparameter name to domain; iteration order is fixed."""

    def sample(self, rng) -> dict:
        return {name: dom.sample(rng) for name, dom in self.items()}

    def grid(self) -> list[dict]:
        names = list(self)
        return [dict(zip(names, combo)) for combo in itertools.product(*(self[n].grid() for n in names))]


def default_space(family, n_in) -> HyperSpace:
    family = Family(family)
    if family in (Family.RE_LR, Family.RC_LR):
        return HyperSpace(lam=Choice((0.0, 1e-6, 1e-3, 1.0)))
    if family == Family.RE_RF:
        return HyperSpace(mtry=IntRange(max(1, n_in // 6), n_in), sample_size=Uniform(0.02, 0.1),
                          nodesize=IntRange(3, 30), n_trees=IntRange(3, 10))
    if family == Family.KNN:
        return HyperSpace(k=Choice((1, 2, 3, 5, 8, 13, 21)), weighting=Choice(("uniform", "distance")))
    return HyperSpace(epochs=IntRange(10, 30), hidden_layers=IntRange(1, 3),
                      batch_size=Choice((32, 64, 128)), activation=Choice(("relu", "tanh", "sigmoid")),
                      dropout=Uniform(0.0, 0.2), task_specific_layers=IntRange(0, 2),
                      learning_rate=LogUniform(3e-4, 3e-3))


def make_model(family, hyperparameters, seed=0) -> SurrogateModel:
    from .base import _registry
    return _registry()[Family(family)](seed=seed, **hyperparameters)


@dataclass
class SearchResult:
    best: dict
    score: float
    trials: list = field(default_factory=list)      # (hyperparameters, mean fold RMSE)


def _xy(dataset):
    if isinstance(dataset, tuple):
        return dataset
    return dataset.inputs, dataset.targets


def cv_score(family, hyperparameters, dataset, folds, seed=0) -> float:
    """Mean held-out RMSE over ``folds``; a failed fit scores +inf."""
    X, Y = _xy(dataset)
    scores = []
    for train, test in folds:
        try:
            model = make_model(family, hyperparameters, seed).fit(X[train], Y[train])
            scores.append(rmse(Y[test], model.predict(X[test])))
        except (ValueError, ArithmeticError, np.linalg.LinAlgError):
            return math.inf
    return float(np.mean(scores)) if scores else math.inf


def _pick(family, candidates, dataset, folds, fixed, seed):
    trials = []
    best, best_score = None, math.inf
    for hp in candidates:
        hp = {**hp, **(fixed or {})}
        score = cv_score(family, hp, dataset, folds, seed)
        trials.append((hp, score))
        if best is None or score < best_score:
            best, best_score = hp, score
    return SearchResult(best, best_score, trials)


def random_search_cv(family, space, dataset, folds, budget=20, seed=0, fixed=None) -> SearchResult:
    """Score ``budget`` uniformly drawn configurations; ties keep the first.

    ``fixed`` hyperparameters are merged into every candidate unsearched.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    rng = np.random.default_rng(seed)
    candidates = [space.sample(rng) for _ in range(budget)]
    return _pick(family, candidates, dataset, folds, fixed, seed)


def grid_search_cv(family, space, dataset, folds, seed=0, fixed=None) -> SearchResult:
    return _pick(family, space.grid(), dataset, folds, fixed, seed)


_DOMAIN_KEYS = {"choice": Choice, "int": IntRange, "uniform": Uniform, "loguniform": LogUniform}


def domain_from_json(spec):
    """``{"choice": [...]}``, ``{"int": [lo, hi]}``, ``{"uniform": [lo, hi]}`` or
    ``{"loguniform": [lo, hi]}``."""
    if not isinstance(spec, dict) or len(spec) != 1 or next(iter(spec)) not in _DOMAIN_KEYS:
        raise ValueError(f"bad domain {spec!r}; expected one of {sorted(_DOMAIN_KEYS)}")
    key, arg = next(iter(spec.items()))
    return Choice(tuple(arg)) if key == "choice" else _DOMAIN_KEYS[key](*arg)


def space_from_json(spec: dict, base: HyperSpace | None = None) -> HyperSpace:
    """Build a space, overriding or extending ``base`` domain by domain."""
    space = HyperSpace(base or {})
    for name, dom in spec.items():
        space[name] = domain_from_json(dom)
    return space
