"""Multilayer perceptron with a shared trunk and per-output heads.

Layout: ``hidden_layers`` dense trunk layers whose widths shrink (or grow)
geometrically from the input size towards the output size, then for every
output an independent head of ``task_specific_layers`` hidden layers of width
``head_width`` ending in one linear unit. With ``task_specific_layers=0`` the
heads collapse to a plain dense output layer. Dropout follows every hidden
layer during training only.

Targets are centred per column and divided by one global scale, so the loss
stays proportional to the squared error in the original units.
"""
from __future__ import annotations

import numpy as np

from .base import Family, Standardizer, SurrogateModel

ACTIVATIONS = ("relu", "tanh", "sigmoid")


class MlpDivergenceError(FloatingPointError):
    def __init__(self, epoch):
        super().__init__(f"training loss became non-finite in epoch {epoch}")
        self.epoch = epoch


def trunk_widths(n_in, n_out, hidden_layers):
    """Geometric interpolation between input and output size."""
    ratio = n_out / n_in
    return [max(1, int(round(n_in * ratio ** (i / (hidden_layers + 1)))))
            for i in range(1, hidden_layers + 1)]


def _act(name, z):
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "tanh":
        return np.tanh(z)
    return 0.5 * (1.0 + np.tanh(0.5 * z))       # overflow-free logistic


def _act_grad(name, z, a):
    if name == "relu":
        return (z > 0).astype(z.dtype)
    if name == "tanh":
        return 1.0 - a * a
    return a * (1.0 - a)


def init_params(n_in, n_out, hidden_layers, task_specific_layers, head_width, activation, rng):
    """Parameter list: trunk (W, b) pairs, then head (W, b) pairs with a
    leading output axis."""
    gain = 2.0 if activation == "relu" else 1.0
    params = []
    prev = n_in
    for w in trunk_widths(n_in, n_out, hidden_layers):
        params += [rng.normal(0.0, np.sqrt(gain / prev), (prev, w)), np.zeros(w)]
        prev = w
    for k in range(task_specific_layers + 1):
        w = head_width if k < task_specific_layers else 1
        g = gain if k < task_specific_layers else 1.0
        params += [rng.normal(0.0, np.sqrt(g / prev), (n_out, prev, w)), np.zeros((n_out, w))]
        prev = w
    return params


def _split(params, hidden_layers):
    t = params[:2 * hidden_layers]
    h = params[2 * hidden_layers:]
    return list(zip(t[::2], t[1::2])), list(zip(h[::2], h[1::2]))


def _first_head(h, W, b):
    # all heads read the same trunk output: one GEMM instead of m small ones
    m, k, w = W.shape
    z = h @ W.transpose(1, 0, 2).reshape(k, m * w)
    return z.reshape(len(h), m, w).transpose(1, 0, 2) + b[:, None, :]


def forward(params, X, hidden_layers, activation, masks=None):
    """Returns predictions (N, m) and the per-layer cache (input, pre-activation,
    activation before dropout) needed by ``backward``.

    ``masks``: optional list of dropout multipliers, one per hidden layer.
    """
    trunk, heads = _split(params, hidden_layers)
    cache = []
    h = X
    layer = 0
    for W, b in trunk:
        z = h @ W + b
        a = _act(activation, z)
        cache.append((h, z, a))
        h = a if masks is None else a * masks[layer]
        layer += 1
    H = h
    for k, (W, b) in enumerate(heads):
        z = _first_head(H, W, b) if k == 0 else H @ W + b[:, None, :]   # (m, N, width)
        if k == len(heads) - 1:
            cache.append((H, z, z))
            H = z
            break
        a = _act(activation, z)
        cache.append((H, z, a))
        H = a if masks is None else a * masks[layer]
        layer += 1
    return H[:, :, 0].T, cache


def backward(params, cache, d_out, hidden_layers, activation, masks=None):
    """Gradients of sum(d_out * output) with respect to every parameter."""
    trunk, heads = _split(params, hidden_layers)
    grads = [None] * len(params)
    n_trunk = len(trunk)
    dA = d_out.T[:, :, None]                                 # (m, N, 1)
    for k in range(len(heads) - 1, -1, -1):
        H_in, z, a = cache[n_trunk + k]
        if k == len(heads) - 1:
            dZ = dA
        else:
            if masks is not None:
                dA = dA * masks[n_trunk + k]
            dZ = dA * _act_grad(activation, z, a)
        W = heads[k][0]
        grads[2 * n_trunk + 2 * k + 1] = dZ.sum(axis=1)
        if k > 0:
            grads[2 * n_trunk + 2 * k] = H_in.transpose(0, 2, 1) @ dZ
            dA = dZ @ W.transpose(0, 2, 1)
        else:
            m, width, w = W.shape
            dZ2 = dZ.transpose(1, 0, 2).reshape(len(H_in), m * w)
            grads[2 * n_trunk] = (H_in.T @ dZ2).reshape(width, m, w).transpose(1, 0, 2)
            # heads share the trunk, so their input gradients add up
            dA = dZ2 @ W.transpose(1, 0, 2).reshape(width, m * w).T
    for k in range(n_trunk - 1, -1, -1):
        h_in, z, a = cache[k]
        if masks is not None:
            dA = dA * masks[k]
        dZ = dA * _act_grad(activation, z, a)
        W = trunk[k][0]
        grads[2 * k] = h_in.T @ dZ
        grads[2 * k + 1] = dZ.sum(axis=0)
        dA = dZ @ W.T
    return grads


def loss_and_grad(params, X, Y, hidden_layers, activation, masks=None):
    """Mean squared error over all entries and its gradient."""
    pred, cache = forward(params, X, hidden_layers, activation, masks)
    diff = pred - Y
    loss = float(np.mean(diff * diff))
    grads = backward(params, cache, 2.0 * diff / diff.size, hidden_layers, activation, masks)
    return loss, grads


def dropout_masks(params, hidden_layers, task_specific_layers, n_rows, rate, rng):
    """Inverted-dropout multipliers for every hidden layer."""
    trunk, heads = _split(params, hidden_layers)
    keep = 1.0 - rate
    masks = [(rng.random((n_rows, W.shape[1])) < keep) / keep for W, _ in trunk]
    for W, _ in heads[:task_specific_layers]:
        masks.append((rng.random((W.shape[0], n_rows, W.shape[2])) < keep) / keep)
    return masks


class MlpRegressor(SurrogateModel):
    family = Family.MLP

    def __init__(self, epochs=50, hidden_layers=2, batch_size=64, activation="relu",
                 dropout=0.0, task_specific_layers=1, learning_rate=1e-3, head_width=4, seed=0):
        if activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")
        if not 0.0 <= dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")
        if min(epochs, batch_size, head_width) < 1 or min(hidden_layers, task_specific_layers) < 0:
            raise ValueError("epochs, batch_size, head_width >= 1 and layer counts >= 0 required")
        super().__init__(seed=seed, epochs=int(epochs), hidden_layers=int(hidden_layers),
                         batch_size=int(batch_size), activation=activation, dropout=float(dropout),
                         task_specific_layers=int(task_specific_layers),
                         learning_rate=float(learning_rate), head_width=int(head_width))

    def _fit(self, X, Y):
        hp = self.hyperparameters
        rng = np.random.default_rng(self.seed)
        self.x_scaler_ = Standardizer().fit(X)
        Z = self.x_scaler_.transform(X)
        self.y_mean_ = Y.mean(axis=0)
        sd = float(np.sqrt(np.mean((Y - self.y_mean_) ** 2)))
        self.y_scale_ = sd if sd > 0 else 1.0
        T = (Y - self.y_mean_) / self.y_scale_
        params = init_params(X.shape[1], Y.shape[1], hp["hidden_layers"], hp["task_specific_layers"],
                             hp["head_width"], hp["activation"], rng)
        m1 = [np.zeros_like(p) for p in params]
        m2 = [np.zeros_like(p) for p in params]
        beta1, beta2, eps = 0.9, 0.999, 1e-8
        step = 0
        n = len(Z)
        self.loss_history_ = []
        # overflow is caught below as divergence
        with np.errstate(over="ignore", invalid="ignore"):
            for epoch in range(hp["epochs"]):
                perm = rng.permutation(n)
                total = 0.0
                for a in range(0, n, hp["batch_size"]):
                    idx = perm[a:a + hp["batch_size"]]
                    masks = None
                    if hp["dropout"] > 0:
                        masks = dropout_masks(params, hp["hidden_layers"], hp["task_specific_layers"],
                                              len(idx), hp["dropout"], rng)
                    loss, grads = loss_and_grad(params, Z[idx], T[idx], hp["hidden_layers"],
                                                hp["activation"], masks)
                    if not np.isfinite(loss):
                        raise MlpDivergenceError(epoch)
                    total += loss * len(idx)
                    step += 1
                    lr_t = hp["learning_rate"] * np.sqrt(1 - beta2 ** step) / (1 - beta1 ** step)
                    for p, g, u, v in zip(params, grads, m1, m2):
                        u *= beta1
                        u += (1 - beta1) * g
                        v *= beta2
                        v += (1 - beta2) * g * g
                        p -= lr_t * u / (np.sqrt(v) + eps)
                epoch_loss = total / n
                if not np.isfinite(epoch_loss) or not all(np.isfinite(p).all() for p in params):
                    raise MlpDivergenceError(epoch)
                self.loss_history_.append(epoch_loss)
        self.params_ = params

    def _predict(self, X):
        Z = self.x_scaler_.transform(X)
        out, _ = forward(self.params_, Z, self.hyperparameters["hidden_layers"],
                         self.hyperparameters["activation"])
        return out * self.y_scale_ + self.y_mean_

    def _get_arrays(self):
        arrays = {f"p{i}": p for i, p in enumerate(self.params_)}
        arrays.update(x_mean=self.x_scaler_.mean, x_scale=self.x_scaler_.scale,
                      y_mean=self.y_mean_, y_scale=np.array(self.y_scale_))
        return arrays

    def _set_arrays(self, a):
        n = sum(1 for k in a if k.startswith("p") and k[1:].isdigit())
        self.params_ = [a[f"p{i}"] for i in range(n)]
        self.x_scaler_ = Standardizer(a["x_mean"], a["x_scale"])
        self.y_mean_, self.y_scale_ = a["y_mean"], float(a["y_scale"])


def fit_mlp(X, Y, epochs=50, hidden_layers=2, batch_size=64, activation="relu", dropout=0.0,
            task_specific_layers=1, learning_rate=1e-3, head_width=4, seed=0) -> MlpRegressor:
    return MlpRegressor(epochs, hidden_layers, batch_size, activation, dropout, task_specific_layers,
                        learning_rate, head_width, seed=seed).fit(X, Y)
