from __future__ import annotations

import enum
import io
import json

import numpy as np

FORMAT_VERSION = 1


class Family(str, enum.Enum):
    RE_LR = "ReLr"
    RC_LR = "RcLr"
    RE_RF = "ReRf"
    KNN = "Knn"
    MLP = "Mlp"


class NotFittedError(RuntimeError):
    pass


class Standardizer:
    """Per-column centring and scaling; zero-variance columns map to zero."""

    def __init__(self, mean=None, scale=None):
        self.mean = None if mean is None else np.asarray(mean, float)
        self.scale = None if scale is None else np.asarray(scale, float)
        self.constant = None

    def fit(self, X):
        X = np.asarray(X, float)
        self.constant = np.all(X == X[:1], axis=0)
        # the exact value, not a rounded mean, so constant columns centre to zero
        self.mean = np.where(self.constant, X[0], X.mean(axis=0))
        sd = X.std(axis=0)
        self.scale = np.where(self.constant | (sd == 0), 1.0, sd)
        return self

    def transform(self, X):
        return (np.asarray(X, float) - self.mean) / self.scale

    def inverse_transform(self, Z):
        return np.asarray(Z, float) * self.scale + self.mean

    def fit_transform(self, X):
        return self.fit(X).transform(X)


class SurrogateModel:
    """Common fit/predict contract of every surrogate family.

    Subclasses implement ``_fit``, ``_predict``, ``_get_arrays`` and
    ``_set_arrays``; the last two are all serialization needs.
    """

    family: Family

    def __init__(self, seed=0, **hyperparameters):
        self.hyperparameters = dict(hyperparameters)
        self.seed = seed
        self.n_in = None
        self.n_out = None
        self.metadata: dict = {}

    @property
    def is_fitted(self):
        return self.n_in is not None

    def fit(self, X, Y):
        X = np.asarray(X, float)
        Y = np.asarray(Y, float)
        if Y.ndim == 1:
            Y = Y[:, None]
        if X.ndim != 2 or len(X) != len(Y):
            raise ValueError(f"inconsistent shapes X{X.shape} Y{Y.shape}")
        self._fit(X, Y)
        self.n_in, self.n_out = X.shape[1], Y.shape[1]
        return self

    def predict(self, X):
        if not self.is_fitted:
            raise NotFittedError(f"{type(self).__name__} must be fitted before predict")
        X = np.asarray(X, float)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.n_in:
            raise ValueError(f"expected {self.n_in} input columns, got {X.shape[1]}")
        return self._predict(X)

    def __repr__(self):
        hp = ", ".join(f"{k}={v!r}" for k, v in sorted(self.hyperparameters.items()))
        return f"{type(self).__name__}({hp})"


def _registry():
    from .forest import RandomForestEnsemble
    from .knn import KnnRegressor
    from .linear import LinearChain, LinearEnsemble
    from .mlp import MlpRegressor
    return {c.family: c for c in (LinearEnsemble, LinearChain, RandomForestEnsemble,
                                  KnnRegressor, MlpRegressor)}


def save_model(model: SurrogateModel, file) -> None:
    """Write a fitted model as a versioned ``.npz`` blob (exact round trip)."""
    if not model.is_fitted:
        raise NotFittedError("cannot serialize an unfitted model")
    meta = {"format_version": FORMAT_VERSION, "family": model.family.value,
            "hyperparameters": model.hyperparameters, "seed": model.seed,
            "n_in": model.n_in, "n_out": model.n_out, "metadata": model.metadata}
    arrays = model._get_arrays()
    np.savez(file, __meta__=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8), **arrays)


def load_model(file) -> SurrogateModel:
    with np.load(file, allow_pickle=False) as data:
        meta = json.loads(bytes(data["__meta__"]).decode())
        if meta["format_version"] != FORMAT_VERSION:
            raise ValueError(f"unsupported model format {meta['format_version']}")
        arrays = {k: data[k] for k in data.files if k != "__meta__"}
    cls = _registry()[Family(meta["family"])]
    model = cls(seed=meta["seed"], **meta["hyperparameters"])
    model._set_arrays(arrays)
    model.n_in, model.n_out = meta["n_in"], meta["n_out"]
    model.metadata = meta["metadata"]
    return model


def model_to_bytes(model) -> bytes:
    buf = io.BytesIO()
    save_model(model, buf)
    return buf.getvalue()


def model_from_bytes(blob: bytes) -> SurrogateModel:
    return load_model(io.BytesIO(blob))
