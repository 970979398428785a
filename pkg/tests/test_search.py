import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lvsurrogate.metrics import rmse
from lvsurrogate.profiles import monthly_folds
from lvsurrogate.surrogate import (Choice, Family, HyperSpace, IntRange, LogUniform, Uniform, cv_score,
                                   default_space, domain_from_json, fit_knn, grid_search_cv, make_model,
                                   random_search_cv, space_from_json)


@pytest.fixture(scope="module")
def small():
    """Near-linear power-flow-like data with three contiguous folds."""
    rng = np.random.default_rng(0)
    X = rng.uniform(0, 1, size=(240, 4))
    Y = 1.0 - 0.02 * X @ rng.uniform(0, 1, size=(4, 3)) + 1e-4 * rng.normal(size=(240, 3))
    idx = np.arange(240)
    folds = [(np.setdiff1d(idx, t), t) for t in np.split(idx, 3)]
    return X, Y, folds


def manual_cv(X, Y, folds, **hp):
    return np.mean([rmse(Y[te], fit_knn(X[tr], Y[tr], **hp).predict(X[te])) for tr, te in folds])


def test_budget_one_returns_the_sample(small):
    X, Y, folds = small
    space = HyperSpace(k=IntRange(1, 20))
    res = random_search_cv(Family.KNN, space, (X, Y), folds, budget=1, seed=4)
    expected = space.sample(np.random.default_rng(4))
    assert res.best == expected and len(res.trials) == 1


def test_same_seed_same_winner(small):
    X, Y, folds = small
    space = default_space(Family.KNN, 4)
    a = random_search_cv(Family.KNN, space, (X, Y), folds, budget=5, seed=9)
    b = random_search_cv(Family.KNN, space, (X, Y), folds, budget=5, seed=9)
    assert a.best == b.best and a.score == b.score and a.trials == b.trials


def test_random_search_picks_exhaustive_best(small):
    X, Y, folds = small
    n_train = min(len(tr) for tr, _ in folds)
    space = HyperSpace(k=Choice((1, n_train)))
    res = random_search_cv(Family.KNN, space, (X, Y), folds, budget=8, seed=1)
    scores = {k: manual_cv(X, Y, folds, k=k) for k in (1, n_train)}
    assert res.best["k"] == min(scores, key=scores.get)
    assert res.score == pytest.approx(min(scores.values()), rel=1e-12)


def test_grid_search_matches_brute_force(small):
    X, Y, folds = small
    res = grid_search_cv(Family.KNN, HyperSpace(k=Choice((1, 3, 9))), (X, Y), folds)
    assert [hp["k"] for hp, _ in res.trials] == [1, 3, 9]
    for hp, score in res.trials:
        assert score == pytest.approx(manual_cv(X, Y, folds, k=hp["k"]), rel=1e-12)
    assert res.score == min(s for _, s in res.trials)


def test_singleton_grid(small):
    X, Y, folds = small
    res = grid_search_cv(Family.KNN, HyperSpace(k=Choice((4,)), weighting=Choice(("distance",))),
                         (X, Y), folds)
    assert res.best == {"k": 4, "weighting": "distance"}


def test_grid_no_worse_than_random(small):
    X, Y, folds = small
    space = default_space(Family.KNN, 4)
    grid = grid_search_cv(Family.KNN, space, (X, Y), folds)
    rand = random_search_cv(Family.KNN, space, (X, Y), folds, budget=4, seed=3)
    assert grid.score <= rand.score


def test_ties_keep_first(small):
    X, Y, folds = small
    # identical configurations score identically; the first one is kept
    space = HyperSpace(k=Choice((2, 2)), weighting=Choice(("uniform",)))
    res = grid_search_cv(Family.KNN, space, (X, Y), folds)
    assert res.trials[0][1] == res.trials[1][1]
    assert res.best is res.trials[0][0]


def test_failed_fit_scores_infinite(small):
    X, Y, folds = small
    Xd = np.hstack([X, X[:, :1]])
    assert cv_score(Family.RE_LR, {"lam": 0.0}, (Xd, Y), folds) == math.inf
    res = grid_search_cv(Family.RE_LR, HyperSpace(lam=Choice((0.0, 1e-3))), (Xd, Y), folds)
    assert res.best == {"lam": 1e-3} and math.isfinite(res.score)


def test_fixed_values_are_merged(small):
    X, Y, folds = small
    res = grid_search_cv(Family.RE_LR, HyperSpace(lam=Choice((0.0,))), (X, Y), folds,
                         fixed={"allow_collinear": True})
    assert res.best == {"lam": 0.0, "allow_collinear": True}


def test_monthly_folds_accepted(cigre_year):
    folds = monthly_folds(cigre_year)[:2]
    thin = [(tr[::50], te[::50]) for tr, te in folds]
    score = cv_score(Family.RE_LR, {"lam": 0.0, "allow_collinear": True}, cigre_year, thin)
    assert 0 < score < 1e-3


@pytest.mark.parametrize("family", list(Family))
def test_default_spaces_are_valid(family):
    space = default_space(family, 30)
    assert space
    hp = space.sample(np.random.default_rng(0))
    for name, dom in space.items():
        if isinstance(dom, IntRange):
            assert isinstance(hp[name], int) and dom.low <= hp[name] <= dom.high
    assert make_model(family, hp).hyperparameters


@given(st.integers(-5, 5), st.integers(0, 10), st.integers(0, 2 ** 32 - 1))
def test_int_range_samples_inclusive_integers(low, width, seed):
    dom = IntRange(low, low + width)
    v = dom.sample(np.random.default_rng(seed))
    assert isinstance(v, int) and low <= v <= low + width
    assert dom.grid() == list(range(low, low + width + 1))


@given(st.floats(1e-6, 1.0), st.floats(1.0, 100.0), st.integers(0, 2 ** 32 - 1))
def test_log_uniform_in_range(low, factor, seed):
    v = LogUniform(low, low * factor).sample(np.random.default_rng(seed))
    assert low * (1 - 1e-12) <= v <= low * factor * (1 + 1e-12)


def test_domain_validation():
    with pytest.raises(ValueError):
        Choice(())
    with pytest.raises(ValueError):
        IntRange(1.5, 3)
    with pytest.raises(ValueError):
        IntRange(3, 1)
    with pytest.raises(ValueError):
        Uniform(1.0, 0.0)
    with pytest.raises(ValueError):
        LogUniform(0.0, 1.0)
    with pytest.raises(TypeError):
        Uniform(0.0, 1.0).grid()


def test_grid_is_cartesian_product():
    space = HyperSpace(a=Choice((1, 2, 3)), b=IntRange(0, 1))
    assert space.grid() == [{"a": a, "b": b} for a in (1, 2, 3) for b in (0, 1)]


def test_space_from_json():
    base = default_space(Family.RE_RF, 30)
    space = space_from_json({"n_trees": {"int": [2, 4]}, "sample_size": {"choice": [0.1]},
                             "extra": {"loguniform": [1e-3, 1e-1]}}, base)
    assert space["n_trees"] == IntRange(2, 4)
    assert space["sample_size"] == Choice((0.1,))
    assert space["mtry"] == base["mtry"]
    assert isinstance(space["extra"], LogUniform)
    assert domain_from_json({"uniform": [0, 1]}) == Uniform(0, 1)
    with pytest.raises(ValueError):
        domain_from_json({"normal": [0, 1]})
    with pytest.raises(ValueError):
        domain_from_json([1, 2])
