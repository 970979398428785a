"""Least-squares surrogates: per-target ensemble and regressor chain.

Both solve on the thin SVD of the standardized inputs rather than the normal
equations. With ``lam > 0`` the fit is ridge regression in standardized units.
"""
from __future__ import annotations

import numpy as np

from .base import Family, Standardizer, SurrogateModel

# singular values below this fraction of the largest are treated as zero
RCOND = 1e-10


class RankDeficientError(np.linalg.LinAlgError):
    pass


def _svd(Z):
    U, s, Vt = np.linalg.svd(Z, full_matrices=False)
    keep = s > (s[0] * RCOND if len(s) and s[0] > 0 else np.inf)
    return U[:, keep], s[keep], Vt[keep]


def _filter(s, lam):
    return s / (s * s + lam) if lam > 0 else 1.0 / s


def _rank_check(rank, n_cols, lam, allow_collinear):
    if lam == 0 and rank < n_cols and not allow_collinear:
        raise RankDeficientError(
            f"inputs are rank deficient ({rank} of {n_cols} varying columns independent); "
            "use a ridge penalty lam > 0 or allow_collinear=True")


def _prepare(X, Y):
    xs = Standardizer().fit(X)
    Z = xs.transform(X)
    y_mean = Y.mean(axis=0)
    return xs, Z, Y - y_mean, y_mean


class LinearEnsemble(SurrogateModel):
    """One linear model with intercept per target column.

    ``allow_collinear`` keeps exactly collinear inputs (e.g. reactive power
    proportional to active power) and returns the minimum-norm solution.
    """

    family = Family.RE_LR

    def __init__(self, lam=0.0, allow_collinear=False, seed=0):
        super().__init__(seed=seed, lam=float(lam), allow_collinear=bool(allow_collinear))

    def _fit(self, X, Y):
        lam = self.hyperparameters["lam"]
        if lam < 0:
            raise ValueError("lam must be >= 0")
        xs, Z, Yc, y_mean = _prepare(X, Y)
        U, s, Vt = _svd(Z)
        _rank_check(len(s), int((~xs.constant).sum()), lam, self.hyperparameters["allow_collinear"])
        coef_z = Vt.T @ (_filter(s, lam)[:, None] * (U.T @ Yc))
        self.coef_ = coef_z / xs.scale[:, None]
        self.intercept_ = y_mean - xs.mean @ self.coef_

    def _predict(self, X):
        return X @ self.coef_ + self.intercept_

    def _get_arrays(self):
        return {"coef": self.coef_, "intercept": self.intercept_}

    def _set_arrays(self, a):
        self.coef_, self.intercept_ = a["coef"], a["intercept"]


class LinearChain(SurrogateModel):
    """Regressor chain: target ``order[k]`` also sees the fitted values of
    ``order[:k]``.

    Every fitted value is a linear function of the inputs, so all chain
    designs share the column space of the input SVD ``Z = U S V'``. Each link
    is therefore solved in the r-dimensional ``U'``-coordinates instead of on
    the full n-row design.
    """

    family = Family.RC_LR

    def __init__(self, lam=0.0, allow_collinear=False, order=None, seed=0):
        super().__init__(seed=seed, lam=float(lam), allow_collinear=bool(allow_collinear),
                         order=None if order is None else [int(i) for i in order])

    def _fit(self, X, Y):
        lam = self.hyperparameters["lam"]
        if lam < 0:
            raise ValueError("lam must be >= 0")
        m = Y.shape[1]
        order = self.hyperparameters["order"]
        order = list(range(m)) if order is None else order
        if sorted(order) != list(range(m)):
            raise ValueError("order must be a permutation of the target indices")
        xs, Z, Yc, y_mean = _prepare(X, Y)
        U, s, Vt = _svd(Z)
        _rank_check(len(s), int((~xs.constant).sum()), lam, self.hyperparameters["allow_collinear"])
        n = len(X)
        B = U.T @ Yc                        # targets in U-coordinates
        base = s[:, None] * Vt              # Z in U-coordinates
        fitted = np.empty((len(s), 0))      # standardized earlier fitted values
        w_x = np.empty((Z.shape[1], m))
        w_prev = []
        chain_scale = np.empty(m)
        for k, j in enumerate(order):
            R = np.hstack([base, fitted])
            Ur, sr, Vrt = _svd(R)
            w = Vrt.T @ (_filter(sr, lam) * (Ur.T @ B[:, j]))
            w_x[:, k] = w[:Z.shape[1]]
            w_prev.append(w[Z.shape[1]:])
            g = R @ w
            sd = np.linalg.norm(g) / np.sqrt(n)
            chain_scale[k] = sd if sd > 0 else 1.0
            fitted = np.hstack([fitted, (g / chain_scale[k])[:, None]])
        self.order_ = np.array(order)
        self.x_mean_, self.x_scale_ = xs.mean, xs.scale
        self.y_mean_ = y_mean
        self.w_x_ = w_x
        # strictly lower-triangular link weights, row k = link k
        self.w_prev_ = np.zeros((m, m))
        for k, w in enumerate(w_prev):
            self.w_prev_[k, :k] = w
        self.chain_scale_ = chain_scale

    def _predict(self, X):
        Z = (X - self.x_mean_) / self.x_scale_
        base = Z @ self.w_x_
        m = len(self.order_)
        prev = np.empty((len(X), m))
        out = np.empty((len(X), m))
        for k in range(m):
            g = base[:, k] + prev[:, :k] @ self.w_prev_[k, :k]
            prev[:, k] = g / self.chain_scale_[k]
            j = self.order_[k]
            out[:, j] = g + self.y_mean_[j]
        return out

    def _get_arrays(self):
        return {"order": self.order_, "x_mean": self.x_mean_, "x_scale": self.x_scale_,
                "y_mean": self.y_mean_, "w_x": self.w_x_, "w_prev": self.w_prev_,
                "chain_scale": self.chain_scale_}

    def _set_arrays(self, a):
        self.order_, self.x_mean_, self.x_scale_ = a["order"], a["x_mean"], a["x_scale"]
        self.y_mean_, self.w_x_, self.w_prev_ = a["y_mean"], a["w_x"], a["w_prev"]
        self.chain_scale_ = a["chain_scale"]


def fit_linear_ensemble(X, Y, lam=0.0, allow_collinear=False, seed=0) -> LinearEnsemble:
    return LinearEnsemble(lam, allow_collinear, seed=seed).fit(X, Y)


def fit_linear_chain(X, Y, lam=0.0, order=None, allow_collinear=False, seed=0) -> LinearChain:
    return LinearChain(lam, allow_collinear, order, seed=seed).fit(X, Y)
