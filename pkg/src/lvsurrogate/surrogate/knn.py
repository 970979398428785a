from __future__ import annotations

import numpy as np

from .base import Family, Standardizer, SurrogateModel

WEIGHTINGS = ("uniform", "distance")
# relative tolerance below which two distances count as tied
TIE_RTOL = 1e-9
# training rows per block in the two-stage neighbour selection
BLOCK = 32


class KnnRegressor(SurrogateModel):
    """k-nearest-neighbour regression in standardized input space.

    Neighbour search runs in the coordinates of the training rows' own span
    (thin SVD): the part of a query orthogonal to that span adds the same
    amount to every distance, so the ranking is unchanged. Selection first
    keeps the k blocks of training rows with the best block maximum, then the
    k best rows among those. Final distances are recomputed directly.

    ``weighting="distance"`` uses inverse-distance weights; exact matches then
    take all the weight.
    """

    family = Family.KNN

    def __init__(self, k=5, weighting="uniform", chunk=512, seed=0):
        if weighting not in WEIGHTINGS:
            raise ValueError(f"weighting must be one of {WEIGHTINGS}")
        super().__init__(seed=seed, k=int(k), weighting=weighting)
        self.chunk = chunk

    def _fit(self, X, Y):
        k = self.hyperparameters["k"]
        if not 1 <= k <= len(X):
            raise ValueError(f"k must lie in [1, {len(X)}], got {k}")
        self.scaler_ = Standardizer().fit(X)
        Z = self.scaler_.transform(X)
        _, s, Vt = np.linalg.svd(Z, full_matrices=False)
        keep = s > s[0] * 1e-12 if len(s) and s[0] > 0 else np.zeros(len(s), bool)
        self.basis_ = Vt[keep].T
        self.train_y_ = Y.copy()
        self._set_train(Z)

    def _set_train(self, Z):
        self.train_z_ = Z
        coords = Z @ self.basis_
        half_sq = 0.5 * np.einsum("ij,ij->i", coords, coords)
        n, k = len(Z), self.hyperparameters["k"]
        self.block_ = BLOCK if n >= 64 * k else 1
        n_pad = -(-n // self.block_) * self.block_
        # score = [q, -1] . [x, |x|^2/2]; padding rows score -1e300
        aug = np.zeros((n_pad, coords.shape[1] + 1))
        aug[:n, :-1] = coords
        aug[:n, -1] = half_sq
        aug[n:, -1] = 1e300
        self.train_aug_ = aug
        self.max_sq_ = float(2.0 * half_sq.max())

    def neighbours(self, Z):
        """Indices (rows, k) of the nearest training rows to standardized
        queries ``Z``; ties go to the lower training-row index."""
        k, bs = self.hyperparameters["k"], self.block_
        c = len(Z)
        q = np.hstack([Z @ self.basis_, -np.ones((c, 1))])
        # maximizing q.x - |x|^2/2 over x minimizes |q - x|
        score = q @ self.train_aug_.T
        blocks = score.reshape(c, -1, bs)
        bmax = blocks.max(axis=2)
        nb = bmax.shape[1]
        top = np.argpartition(bmax, nb - k, axis=1)[:, nb - k:]
        lb = np.take_along_axis(bmax, top, axis=1).min(axis=1)
        # the top-k blocks hold every one of the k best rows
        cand = (top[:, :, None] * bs + np.arange(bs)).reshape(c, -1)
        cand_score = np.take_along_axis(score, cand, axis=1)
        m = cand.shape[1]
        pick = np.argpartition(cand_score, m - k, axis=1)[:, m - k:]
        idx = np.take_along_axis(cand, pick, axis=1)
        kth = np.take_along_axis(cand_score, pick, axis=1).min(axis=1)
        tol = TIE_RTOL * (1.0 + np.einsum("ij,ij->i", Z, Z) + self.max_sq_)
        # near-ties at either stage need the exact tie rule
        unsure = ((bmax >= (lb - tol)[:, None]).sum(axis=1) > k) | \
                 ((cand_score >= (kth - tol)[:, None]).sum(axis=1) > k)
        for i in np.flatnonzero(unsure):
            near = np.flatnonzero(score[i] >= kth[i] - tol[i])
            d = np.sqrt(np.sum((self.train_z_[near] - Z[i]) ** 2, axis=1))
            d_k = np.partition(d, k - 1)[k - 1]
            # relative, plus a floor for distances near zero
            tie = TIE_RTOL * (d_k + 1e-3 * np.sqrt(tol[i] / TIE_RTOL))
            better = near[d < d_k - tie]
            tied = near[np.abs(d - d_k) <= tie]
            idx[i] = np.concatenate([better, tied[:k - len(better)]])
        return idx

    def _predict(self, X):
        Z = self.scaler_.transform(X)
        out = np.empty((len(Z), self.train_y_.shape[1]))
        for a in range(0, len(Z), self.chunk):
            q = Z[a:a + self.chunk]
            idx = self.neighbours(q)
            neigh = self.train_y_[idx]                          # (c, k, m)
            if self.hyperparameters["weighting"] == "uniform":
                out[a:a + self.chunk] = neigh.mean(axis=1)
                continue
            d = np.sqrt(np.sum((self.train_z_[idx] - q[:, None, :]) ** 2, axis=2))
            exact = d == 0
            with np.errstate(divide="ignore"):
                w = np.where(exact.any(axis=1, keepdims=True), exact, 1.0 / d)
            out[a:a + self.chunk] = np.einsum("ck,ckm->cm", w, neigh) / w.sum(axis=1, keepdims=True)
        return out

    def _get_arrays(self):
        return {"x_mean": self.scaler_.mean, "x_scale": self.scaler_.scale,
                "basis": self.basis_, "train_z": self.train_z_, "train_y": self.train_y_}

    def _set_arrays(self, a):
        self.scaler_ = Standardizer(a["x_mean"], a["x_scale"])
        self.basis_, self.train_y_ = a["basis"], a["train_y"]
        self._set_train(a["train_z"])


def fit_knn(X, Y, k=5, weighting="uniform", seed=0) -> KnnRegressor:
    return KnnRegressor(k, weighting, seed=seed).fit(X, Y)
