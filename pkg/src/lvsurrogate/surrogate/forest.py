"""Regressor ensemble of random forests: one forest of CART trees per target."""
from __future__ import annotations

import numpy as np

from .base import Family, SurrogateModel


def column_ranks(X):
    """Dense-ish integer ranks per column; equal values share a rank."""
    ranks = np.empty(X.shape, dtype=np.int64)
    for c in range(X.shape[1]):
        order = np.argsort(X[:, c], kind="stable")
        col = X[order, c]
        r = np.concatenate([[0], np.cumsum(col[1:] > col[:-1])])
        ranks[order, c] = r
    return ranks


class RegressionTree:
    """CART regression tree stored as flat arrays (leaf: feature == -1).

    Grown breadth-first: all nodes of one depth are split in a single
    vectorized pass over the rows, grouped contiguously by node.
    """

    def __init__(self):
        self.feature = self.threshold = self.left = self.right = self.value = None

    def fit(self, X, y, mtry, nodesize, rng, ranks=None):
        """``ranks``: optional integer ranks of X per column (ties share a
        rank); any order-preserving ranking of a superset of rows works."""
        n, p = X.shape
        if ranks is None:
            ranks = column_ranks(X)

        n_rank = int(ranks.max()) + 1 if ranks.size else 1
        feature, threshold = [-1], [0.0]
        left, right, value = [-1], [-1], [float(y.mean())]
        rows = np.arange(n)
        nid = np.zeros(n, dtype=np.int64)      # local node index per row
        node_ids = np.array([0])               # global id of each local node
        while rows.size:
            a = len(node_ids)
            cnt = np.bincount(nid, minlength=a)
            start = np.concatenate([[0], np.cumsum(cnt)[:-1]])
            yr = y[rows]
            mean = np.bincount(nid, yr, minlength=a) / cnt
            spread = np.maximum.reduceat(yr, start) - np.minimum.reduceat(yr, start)
            splittable = (cnt >= 2 * nodesize) & (spread > 0)
            keep = splittable[nid]
            if not keep.any():
                break
            if not keep.all():
                # drop finished nodes, renumber the rest
                remap = np.cumsum(splittable) - 1
                rows, nid, yr = rows[keep], remap[nid[keep]], yr[keep]
                node_ids, mean = node_ids[splittable], mean[splittable]
                a = len(node_ids)
                cnt = np.bincount(nid, minlength=a)
                start = np.concatenate([[0], np.cumsum(cnt)[:-1]])
            if mtry < p:
                feats = np.argsort(rng.random((a, p)), axis=1)[:, :mtry]
            else:
                feats = np.broadcast_to(np.arange(p), (a, p))
            fr = feats[nid]                                     # (N, mtry)
            key = nid[:, None] * n_rank + ranks[rows[:, None], fr]
            # tie order is irrelevant: splits inside a tie are invalid
            order = np.argsort(key, axis=0)
            rk = np.take_along_axis(key, order, axis=0)
            ys = (yr - mean[nid])[order]
            csum = np.cumsum(ys, axis=0)
            seg_off = np.zeros((a, ys.shape[1]))
            nz = start > 0
            seg_off[nz] = csum[start[nz] - 1]
            left_sum = csum - seg_off[nid]
            pos_in = np.arange(len(rows)) - start[nid]
            n_left = (pos_in + 1)[:, None].astype(float)
            n_right = cnt[nid][:, None] - n_left
            with np.errstate(divide="ignore", invalid="ignore"):
                # centred sums: maximizing this minimizes the children's SSE
                score = left_sum ** 2 / n_left + left_sum ** 2 / n_right
            valid = np.broadcast_to((n_left >= nodesize) & (n_right >= nodesize), rk.shape).copy()
            valid[:-1] &= rk[1:] > rk[:-1]
            valid[-1] = False
            score = np.where(valid, score, -np.inf)
            row_best = score.max(axis=1)
            node_best = np.maximum.reduceat(row_best, start)
            hit = np.flatnonzero((row_best == node_best[nid]) & np.isfinite(row_best))
            first_hit = np.full(a, len(rows))
            np.minimum.at(first_hit, nid[hit], hit)
            has_split = first_hit < len(rows)
            sel = np.flatnonzero(has_split)
            pos = first_hit[sel]
            col = np.argmax(score[pos] == row_best[pos][:, None], axis=1)
            f = feats[sel, col]
            lo = X[rows[order[pos, col]], f]
            hi = X[rows[order[pos + 1, col]], f]
            thr = 0.5 * (lo + hi)
            thr = np.where((lo <= thr) & (thr < hi), thr, lo)

            split_feat = np.full(a, -1)
            split_thr = np.zeros(a)
            split_feat[sel], split_thr[sel] = f, thr
            in_split = has_split[nid]
            rows, nid = rows[in_split], nid[in_split]
            goes_right = X[rows, split_feat[nid]] > split_thr[nid]
            child = 2 * np.cumsum(has_split)[nid] - 2 + goes_right
            n_child = 2 * len(sel)
            child_sum = np.bincount(child, y[rows], minlength=n_child)
            child_cnt = np.bincount(child, minlength=n_child)
            child_ids = np.arange(len(value), len(value) + n_child)
            value.extend((child_sum / child_cnt).tolist())
            feature.extend([-1] * n_child)
            threshold.extend([0.0] * n_child)
            left.extend([-1] * n_child)
            right.extend([-1] * n_child)
            for k, g in enumerate(node_ids[sel]):
                feature[g] = int(f[k])
                threshold[g] = float(thr[k])
                left[g] = int(child_ids[2 * k])
                right[g] = int(child_ids[2 * k + 1])
            regroup = np.argsort(child, kind="stable")
            rows, nid, node_ids = rows[regroup], child[regroup], child_ids
        self.feature = np.array(feature, dtype=np.int64)
        self.threshold = np.array(threshold)
        self.left = np.array(left, dtype=np.int64)
        self.right = np.array(right, dtype=np.int64)
        self.value = np.array(value)
        return self

    def predict(self, X):
        node = np.zeros(len(X), dtype=np.int64)
        active = np.flatnonzero(self.feature[node] >= 0)
        while active.size:
            nd = node[active]
            go_left = X[active, self.feature[nd]] <= self.threshold[nd]
            node[active] = np.where(go_left, self.left[nd], self.right[nd])
            active = active[self.feature[node[active]] >= 0]
        return self.value[node]


class RandomForestEnsemble(SurrogateModel):
    """Per-target random forests.

    mtry: candidate inputs per split; sample_size: fraction of rows drawn for
    each tree (with replacement unless ``replace`` is False); nodesize:
    minimum number of observations in a leaf.
    """

    family = Family.RE_RF

    def __init__(self, mtry=None, sample_size=1.0, nodesize=5, n_trees=10, replace=True, seed=0):
        super().__init__(seed=seed, mtry=None if mtry is None else int(mtry),
                         sample_size=float(sample_size), nodesize=int(nodesize),
                         n_trees=int(n_trees), replace=bool(replace))

    def _fit(self, X, Y):
        hp = self.hyperparameters
        n, p = X.shape
        mtry = hp["mtry"] if hp["mtry"] is not None else max(1, p // 3)
        if not 1 <= mtry <= p:
            raise ValueError(f"mtry must lie in [1, {p}], got {mtry}")
        if hp["nodesize"] < 1 or hp["n_trees"] < 1:
            raise ValueError("nodesize and n_trees must be >= 1")
        if not 0 < hp["sample_size"] <= 1:
            raise ValueError("sample_size must lie in (0, 1]")
        m = max(1, int(round(hp["sample_size"] * n)))
        seeds = np.random.SeedSequence(self.seed).spawn(Y.shape[1])
        ranks = column_ranks(X)
        self.trees_ = []
        for j in range(Y.shape[1]):
            rng = np.random.default_rng(seeds[j])
            forest = []
            for _ in range(hp["n_trees"]):
                rows = rng.choice(n, size=m, replace=hp["replace"])
                forest.append(RegressionTree().fit(X[rows], Y[rows, j], mtry, hp["nodesize"], rng,
                                                   ranks[rows]))
            self.trees_.append(forest)

    def _predict(self, X):
        out = np.empty((len(X), len(self.trees_)))
        for j, forest in enumerate(self.trees_):
            out[:, j] = np.mean([t.predict(X) for t in forest], axis=0)
        return out

    _FIELDS = ("feature", "threshold", "left", "right", "value")

    def _get_arrays(self):
        flat = [t for forest in self.trees_ for t in forest]
        sizes = np.array([len(t.value) for t in flat])
        arrays = {f: np.concatenate([getattr(t, f) for t in flat]) for f in self._FIELDS}
        arrays["sizes"] = sizes
        arrays["shape"] = np.array([len(self.trees_), len(self.trees_[0])])
        return arrays

    def _set_arrays(self, a):
        n_targets, n_trees = a["shape"]
        bounds = np.concatenate([[0], np.cumsum(a["sizes"])])
        flat = []
        for k in range(len(a["sizes"])):
            t = RegressionTree()
            for f in self._FIELDS:
                setattr(t, f, a[f][bounds[k]:bounds[k + 1]])
            flat.append(t)
        self.trees_ = [flat[j * n_trees:(j + 1) * n_trees] for j in range(n_targets)]


def fit_random_forest(X, Y, mtry=None, sample_size=1.0, nodesize=5, n_trees=10,
                      replace=True, seed=0) -> RandomForestEnsemble:
    return RandomForestEnsemble(mtry, sample_size, nodesize, n_trees, replace, seed=seed).fit(X, Y)
