import numpy as np
import pytest

from lvsurrogate.surrogate import MlpDivergenceError, MlpRegressor, fit_mlp
from lvsurrogate.surrogate.mlp import dropout_masks, forward, init_params, loss_and_grad, trunk_widths


def numeric_grad(params, X, Y, layers, act, masks, h=1e-4):
    out = []
    for p in params:
        g = np.zeros_like(p)
        flat, gflat = p.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + h
            up = loss_and_grad(params, X, Y, layers, act, masks)[0]
            flat[i] = keep - h
            down = loss_and_grad(params, X, Y, layers, act, masks)[0]
            flat[i] = keep
            gflat[i] = (up - down) / (2 * h)
        out.append(g)
    return out


@pytest.mark.parametrize("activation", ["tanh", "sigmoid", "relu"])
@pytest.mark.parametrize("layers, heads", [(1, 0), (2, 1), (2, 2), (0, 1)])
@pytest.mark.parametrize("with_dropout", [False, True])
def test_gradient_matches_finite_differences(activation, layers, heads, with_dropout):
    rng = np.random.default_rng(layers * 10 + heads)
    X = rng.normal(size=(7, 4))
    Y = rng.normal(size=(7, 3))
    params = init_params(4, 3, layers, heads, 3, activation, rng)
    # non-zero biases keep relu away from its kink
    for p in params:
        p += rng.normal(0, 0.3, p.shape)
    masks = dropout_masks(params, layers, heads, 7, 0.3, rng) if with_dropout else None
    _, grads = loss_and_grad(params, X, Y, layers, activation, masks)
    for g, fd in zip(grads, numeric_grad(params, X, Y, layers, activation, masks)):
        rel = np.abs(g - fd) / np.maximum(np.abs(g) + np.abs(fd), 1e-7)
        assert rel.max() <= 1e-4


def test_trunk_widths_interpolate():
    assert trunk_widths(30, 44, 1) == [36]
    assert trunk_widths(270, 128, 3) == [224, 186, 154]
    assert trunk_widths(10, 10, 2) == [10, 10]


def test_architecture_shapes():
    rng = np.random.default_rng(0)
    params = init_params(30, 44, 2, 2, 4, "relu", rng)
    shapes = [p.shape for p in params]
    assert shapes[:4] == [(30, 34), (34,), (34, 39), (39,)]
    assert shapes[4:] == [(44, 39, 4), (44, 4), (44, 4, 4), (44, 4), (44, 4, 1), (44, 1)]
    dense = init_params(30, 44, 2, 0, 4, "relu", rng)
    assert [p.shape for p in dense[4:]] == [(44, 39, 1), (44, 1)]
    out, _ = forward(params, rng.normal(size=(5, 30)), 2, "relu")
    assert out.shape == (5, 44)


def test_heads_are_independent():
    rng = np.random.default_rng(1)
    params = init_params(3, 4, 1, 1, 2, "tanh", rng)
    X = rng.normal(size=(6, 3))
    before, _ = forward(params, X, 1, "tanh")
    params[2][1] += 1.0          # first head layer of output 1 only
    after, _ = forward(params, X, 1, "tanh")
    changed = np.abs(after - before).max(axis=0) > 0
    assert changed.tolist() == [False, True, False, False]


def test_learns_linear_data():
    rng = np.random.default_rng(2)
    X = rng.uniform(0, 1, size=(2000, 4))
    Y = 1.0 - 0.01 * X @ rng.uniform(0, 1, size=(4, 3))
    model = fit_mlp(X, Y, epochs=250, hidden_layers=1, batch_size=32, activation="tanh",
                    task_specific_layers=0, learning_rate=3e-3, seed=0)
    err = np.sqrt(np.mean((model.predict(X) - Y) ** 2))
    assert err <= 1e-4
    assert model.loss_history_[-1] < model.loss_history_[0]


def test_same_seed_same_weights():
    rng = np.random.default_rng(3)
    X, Y = rng.normal(size=(100, 3)), rng.normal(size=(100, 2))
    kw = dict(epochs=3, dropout=0.2, batch_size=16, seed=5)
    a, b = fit_mlp(X, Y, **kw), fit_mlp(X, Y, **kw)
    assert all(np.array_equal(p, q) for p, q in zip(a.params_, b.params_))
    c = fit_mlp(X, Y, **dict(kw, seed=6))
    assert not np.array_equal(a.params_[0], c.params_[0])


def test_dropout_inactive_at_prediction():
    rng = np.random.default_rng(4)
    X, Y = rng.normal(size=(50, 3)), rng.normal(size=(50, 2))
    model = fit_mlp(X, Y, epochs=2, dropout=0.5)
    assert np.array_equal(model.predict(X), model.predict(X))


def test_divergence_reports_epoch():
    rng = np.random.default_rng(5)
    X, Y = rng.normal(size=(50, 3)), rng.normal(size=(50, 2))
    with pytest.raises(MlpDivergenceError) as err:
        fit_mlp(X, Y, epochs=5, learning_rate=1e200, hidden_layers=2)
    assert 0 <= err.value.epoch < 5
    assert f"epoch {err.value.epoch}" in str(err.value)


@pytest.mark.parametrize("kwargs", [dict(activation="gelu"), dict(dropout=1.0), dict(epochs=0),
                                    dict(task_specific_layers=-1)])
def test_bad_hyperparameters(kwargs):
    with pytest.raises(ValueError):
        MlpRegressor(**kwargs)
