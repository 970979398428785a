import io

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from lvsurrogate.surrogate import (FORMAT_VERSION, Family, NotFittedError, Standardizer, load_model,
                                   make_model, model_from_bytes, model_to_bytes, save_model)

HYPER = {
    Family.RE_LR: {"lam": 1e-6},
    Family.RC_LR: {"lam": 0.0, "order": [2, 0, 1]},
    Family.RE_RF: {"mtry": 2, "sample_size": 0.5, "nodesize": 3, "n_trees": 4},
    Family.KNN: {"k": 3, "weighting": "distance"},
    Family.MLP: {"epochs": 3, "hidden_layers": 2, "task_specific_layers": 2, "dropout": 0.1},
}


@pytest.fixture(scope="module")
def data():
    rng = np.random.default_rng(7)
    X = rng.normal(size=(120, 4))
    Y = np.column_stack([X @ rng.normal(size=4), np.sin(X[:, 0]), X[:, 1] * X[:, 2]])
    return X, Y, rng.normal(size=(30, 4))


@pytest.mark.parametrize("family", list(Family))
def test_round_trip_is_exact(family, data, tmp_path):
    X, Y, Xq = data
    model = make_model(family, HYPER[family], seed=3).fit(X, Y)
    model.metadata = {"fold": 4, "name": family.value}
    path = tmp_path / "m.npz"
    save_model(model, path)
    back = load_model(path)
    assert type(back) is type(model)
    assert back.hyperparameters == model.hyperparameters
    assert back.seed == 3 and back.metadata == model.metadata
    assert (back.n_in, back.n_out) == (4, 3)
    assert np.array_equal(back.predict(Xq), model.predict(Xq))
    assert np.array_equal(model_from_bytes(model_to_bytes(model)).predict(Xq), model.predict(Xq))


@pytest.mark.parametrize("family", list(Family))
def test_unfitted_model(family, data):
    model = make_model(family, HYPER[family])
    with pytest.raises(NotFittedError):
        model.predict(data[0])
    with pytest.raises(NotFittedError):
        model_to_bytes(model)


@pytest.mark.parametrize("family", list(Family))
def test_input_width_checked(family, data):
    X, Y, _ = data
    model = make_model(family, HYPER[family]).fit(X, Y)
    with pytest.raises(ValueError, match="4 input columns"):
        model.predict(np.zeros((2, 5)))
    assert model.predict(X[0]).shape == (1, 3)


def test_unknown_format_version(data):
    X, Y, _ = data
    blob = io.BytesIO(model_to_bytes(make_model(Family.RE_LR, {}).fit(X, Y)))
    with np.load(blob) as z:
        arrays = {k: z[k] for k in z.files}
    import json
    meta = json.loads(bytes(arrays["__meta__"]).decode())
    meta["format_version"] = FORMAT_VERSION + 1
    arrays["__meta__"] = np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)
    out = io.BytesIO()
    np.savez(out, **arrays)
    with pytest.raises(ValueError, match="unsupported model format"):
        model_from_bytes(out.getvalue())


def test_mismatched_rows_rejected():
    with pytest.raises(ValueError, match="inconsistent shapes"):
        make_model(Family.KNN, {"k": 1}).fit(np.zeros((5, 2)), np.zeros((4, 1)))


finite = st.floats(-1e6, 1e6, allow_nan=False)


@given(arrays(float, st.tuples(st.integers(2, 30), st.integers(1, 5)), elements=finite))
def test_standardizer_invariants(X):
    sc = Standardizer().fit(X)
    Z = sc.transform(X)
    assert np.all(np.isfinite(Z))
    const = np.ptp(X, axis=0) == 0
    assert np.all(Z[:, const] == 0)
    back = sc.inverse_transform(Z)
    assert np.allclose(back[:, ~const], X[:, ~const], rtol=1e-9, atol=1e-6)
