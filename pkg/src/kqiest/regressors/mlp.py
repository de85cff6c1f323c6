"""Multilayer perceptron regressor trained with Adam."""

from __future__ import annotations

import numpy as np


def init_params(layer_sizes, rng):
    """Uniform(-b, b) weights and biases with b = sqrt(6 / (fan_in + fan_out))."""
    params = []
    for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        W = rng.uniform(-bound, bound, (fan_in, fan_out))
        b = rng.uniform(-bound, bound, fan_out)
        params += [W, b]
    return params


def forward(params, X):
    """Returns the activations of every layer; the last one is linear."""
    acts = [X]
    h = X
    n_layers = len(params) // 2
    for l in range(n_layers):
        z = h @ params[2 * l] + params[2 * l + 1]
        h = np.maximum(z, 0.0) if l < n_layers - 1 else z
        acts.append(h)
    return acts


def loss_and_grad(params, X, y, alpha):
    """Half mean squared error plus alpha / (2 n) times the squared weight norm."""
    n = X.shape[0]
    acts = forward(params, X)
    out = acts[-1][:, 0]
    resid = out - y
    weights = params[0::2]
    loss = 0.5 * np.mean(resid ** 2) + alpha / (2.0 * n) * sum(np.sum(W * W) for W in weights)

    grads = [None] * len(params)
    delta = (resid / n)[:, None]
    n_layers = len(params) // 2
    for l in range(n_layers - 1, -1, -1):
        W = params[2 * l]
        grads[2 * l] = acts[l].T @ delta + (alpha / n) * W
        grads[2 * l + 1] = delta.sum(axis=0)
        if l > 0:
            delta = (delta @ W.T) * (acts[l] > 0)
    return loss, grads


class MLPRegressor:
    """ReLU network with a linear output unit.

    The target is standardized internally and mapped back at prediction time.
    Training runs in ``dtype`` (float32 by default, for speed) for all
    ``epochs``. Setting ``n_iter_no_change`` stops it early once the epoch loss
    fails to improve by ``tol`` for that many consecutive epochs.
    """

    def __init__(self, hidden_layer_sizes=(100,), alpha=1e-4, seed=0, epochs=200,
                 learning_rate=1e-3, batch_size=200, beta1=0.9, beta2=0.999, eps=1e-8,
                 tol=1e-4, n_iter_no_change=None, dtype=np.float32):
        self.hidden_layer_sizes = tuple(hidden_layer_sizes)
        self.alpha = alpha
        self.seed = seed
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.tol = tol
        self.n_iter_no_change = n_iter_no_change
        self.dtype = dtype

    def fit(self, X, y):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        n, d = X.shape
        rng = np.random.default_rng(self.seed)
        self.y_mean_ = float(y.mean())
        # a zero output scale makes a constant target predict exactly its value
        self.y_std_ = float(y.std())
        t_y = ((y - self.y_mean_) / (self.y_std_ or 1.0)).astype(self.dtype)
        X = X.astype(self.dtype)

        sizes = [d, *self.hidden_layer_sizes, 1]
        params = [p.astype(self.dtype) for p in init_params(sizes, rng)]
        m = [np.zeros_like(p) for p in params]
        v = [np.zeros_like(p) for p in params]
        batch = min(self.batch_size, n)
        step = 0
        self.loss_curve_ = []
        best, stale = np.inf, 0
        for _ in range(self.epochs):
            order = rng.permutation(n)
            total = 0.0
            for s in range(0, n, batch):
                rows = order[s:s + batch]
                loss, grads = loss_and_grad(params, X[rows], t_y[rows], self.alpha)
                total += loss * len(rows)
                step += 1
                lr = self.dtype(self.learning_rate * np.sqrt(1 - self.beta2 ** step) / (1 - self.beta1 ** step))
                for p, g, mi, vi in zip(params, grads, m, v):
                    mi *= self.beta1
                    mi += (1 - self.beta1) * g
                    vi *= self.beta2
                    vi += (1 - self.beta2) * g * g
                    p -= lr * mi / (np.sqrt(vi) + self.eps)
            epoch_loss = float(total) / n
            self.loss_curve_.append(epoch_loss)
            # stop once the loss has plateaued for n_iter_no_change epochs
            if epoch_loss > best - self.tol:
                stale += 1
            else:
                stale = 0
            best = min(best, epoch_loss)
            if self.n_iter_no_change and stale >= self.n_iter_no_change:
                break
        self.params_ = params
        return self

    def predict(self, X):
        X = np.asarray(X, dtype=float).astype(self.params_[0].dtype)
        out = forward(self.params_, X)[-1][:, 0].astype(float)
        return out * self.y_std_ + self.y_mean_

    def get_state(self) -> dict:
        return {"params": [p.tolist() for p in self.params_],
                "y_mean": self.y_mean_, "y_std": self.y_std_}

    def set_state(self, state: dict):
        self.params_ = [np.asarray(p, dtype=self.dtype) for p in state["params"]]
        self.y_mean_ = float(state["y_mean"])
        self.y_std_ = float(state["y_std"])
        return self
