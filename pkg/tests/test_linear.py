import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lvsurrogate.surrogate import (LinearChain, LinearEnsemble, RankDeficientError, fit_linear_chain,
                                   fit_linear_ensemble)


def random_problem(seed, n=60, p=5, m=4):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, p)) * rng.uniform(0.01, 10, p) + rng.normal(0, 5, p)
    Y = X @ rng.normal(size=(p, m)) + rng.normal(size=(n, m))
    return X, Y


def test_exact_line():
    X = np.linspace(-3, 5, 40)[:, None]
    model = fit_linear_ensemble(X, 2 * X + 1)
    Xq = np.array([[0.0], [1.0], [10.0]])
    assert np.allclose(model.predict(Xq)[:, 0], [1.0, 3.0, 21.0], atol=1e-10)
    # slope and intercept read off two predictions
    p0, p1 = model.predict(np.array([[0.0], [1.0]]))[:, 0]
    assert abs(p0 - 1.0) <= 1e-10 and abs(p1 - p0 - 2.0) <= 1e-10


def test_constant_target_predicts_mean():
    X, _ = random_problem(1)
    Y = np.full((len(X), 2), 0.97)
    for fit in (fit_linear_ensemble, fit_linear_chain):
        pred = fit(X, Y).predict(X + 3.0)
        assert np.allclose(pred, 0.97, atol=1e-12)


def test_rank_deficient_needs_ridge():
    X, Y = random_problem(2)
    X = np.hstack([X, 2 * X[:, :1]])
    for fit in (fit_linear_ensemble, fit_linear_chain):
        with pytest.raises(RankDeficientError, match="lam > 0"):
            fit(X, Y)
        assert np.all(np.isfinite(fit(X, Y, lam=1e-3).predict(X)))
        assert np.all(np.isfinite(fit(X, Y, allow_collinear=True).predict(X)))


def test_constant_input_columns_are_ignored():
    X, Y = random_problem(3)
    Xc = np.hstack([X, np.full((len(X), 1), 4.0)])
    a = fit_linear_ensemble(X, Y).predict(X)
    b = fit_linear_ensemble(Xc, Y).predict(Xc)
    assert np.allclose(a, b, atol=1e-10)


def test_matches_lstsq_oracle():
    X, Y = random_problem(4)
    A = np.hstack([X, np.ones((len(X), 1))])
    coef, *_ = np.linalg.lstsq(A, Y, rcond=None)
    assert np.allclose(fit_linear_ensemble(X, Y).predict(X), A @ coef, atol=1e-9)


def test_ridge_shrinks_towards_mean():
    X, Y = random_problem(5)
    loose = fit_linear_ensemble(X, Y, lam=1e-3).predict(X)
    tight = fit_linear_ensemble(X, Y, lam=1e6).predict(X)
    spread = lambda P: np.abs(P - Y.mean(axis=0)).mean()  # noqa: E731
    assert spread(tight) < 0.01 * spread(loose)
    with pytest.raises(ValueError):
        fit_linear_ensemble(X, Y, lam=-1.0)


@given(st.integers(0, 10 ** 6), st.integers(6, 80), st.integers(1, 6), st.integers(1, 6))
def test_chain_equals_ensemble(seed, n, p, m):
    if n < p + 2:
        n = p + 2
    X, Y = random_problem(seed, n, p, m)
    re = fit_linear_ensemble(X, Y).predict(X)
    rc = fit_linear_chain(X, Y).predict(X)
    rev = fit_linear_chain(X, Y, order=list(range(m))[::-1]).predict(X)
    scale = max(1.0, np.abs(Y).max())
    assert np.abs(re - rc).max() <= 1e-9 * scale
    assert np.abs(re - rev).max() <= 1e-9 * scale


def test_chain_on_pf_data(cigre_year):
    X, Y = cigre_year.inputs[::20], cigre_year.targets[::20]
    re = fit_linear_ensemble(X, Y, allow_collinear=True).predict(X)
    rc = fit_linear_chain(X, Y, allow_collinear=True).predict(X)
    assert np.abs(re - rc).max() <= 1e-9


def test_single_link_chain_is_plain_least_squares():
    X, Y = random_problem(6, m=1)
    assert np.allclose(fit_linear_chain(X, Y).predict(X), fit_linear_ensemble(X, Y).predict(X),
                       atol=1e-12)


def test_chain_order_must_be_permutation():
    X, Y = random_problem(7, m=3)
    with pytest.raises(ValueError, match="permutation"):
        fit_linear_chain(X, Y, order=[0, 0, 1])


def test_families():
    assert LinearEnsemble.family.value == "ReLr" and LinearChain.family.value == "RcLr"
