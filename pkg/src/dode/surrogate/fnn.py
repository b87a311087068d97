"""Feed-forward network regression written directly in numpy.

ReLU hidden layers, a linear output layer, standardized inputs and targets,
mini-batch Adam on ``MSE + lam * sum(||W||^2) / n_train``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class TrainingError(RuntimeError):
    pass


def relu(z):
    return np.maximum(z, 0.0)


@dataclass(frozen=True)
class TrainerConfig:
    epochs: int = 400
    batch_size: int = 32
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    rng_seed: int = 0


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, A) -> "Standardizer":
        A = np.asarray(A, dtype=float)
        scale = A.std(axis=0)
        return cls(A.mean(axis=0), np.where(scale > 0, scale, 1.0))

    def transform(self, A):
        return (np.asarray(A, dtype=float) - self.mean) / self.scale

    def inverse(self, Z):
        return np.asarray(Z, dtype=float) * self.scale + self.mean


def init_params(widths, rng) -> list:
    """He-normal weights and zero biases for consecutive layer ``widths``."""
    return [(rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, fan_out)), np.zeros(fan_out))
            for fan_in, fan_out in zip(widths[:-1], widths[1:])]


def forward(params, X, keep=False):
    """Network output; with ``keep`` also the per-layer inputs and pre-activations."""
    h = X
    inputs, pre = [], []
    for i, (W, b) in enumerate(params):
        z = h @ W + b
        if keep:
            inputs.append(h)
            pre.append(z)
        h = z if i == len(params) - 1 else relu(z)
    return (h, inputs, pre) if keep else h


def loss_and_grad(params, X, Y, lam=0.0, n_total=None):
    """Regularized loss and its gradient with respect to every ``(W, b)``.

    ``n_total`` is the training-set size dividing the weight penalty (defaults
    to the batch size).
    """
    n_total = n_total or len(X)
    out, inputs, pre = forward(params, X, keep=True)
    resid = out - Y
    penalty = sum(float(np.sum(W * W)) for W, _ in params)
    loss = float(np.mean(resid ** 2)) + lam * penalty / n_total
    delta = 2.0 * resid / resid.size
    grads = [None] * len(params)
    for i in range(len(params) - 1, -1, -1):
        W, _ = params[i]
        gW = inputs[i].T @ delta + 2.0 * lam * W / n_total
        gb = delta.sum(axis=0)
        grads[i] = (gW, gb)
        if i:
            delta = (delta @ W.T) * (pre[i - 1] > 0)
    return loss, grads


@dataclass
class FnnModel:
    hidden: tuple
    lam: float
    params: list = field(repr=False)
    x_scaler: Standardizer = field(repr=False)
    y_scaler: Standardizer = field(repr=False)
    trainer: TrainerConfig = TrainerConfig()
    loss_curve: list = field(default_factory=list, repr=False)

    @property
    def widths(self) -> tuple:
        return (self.params[0][0].shape[0], *self.hidden, self.params[-1][0].shape[1])

    @property
    def n_params(self) -> int:
        return sum(W.size + b.size for W, b in self.params)

    def predict(self, x) -> np.ndarray:
        return fnn_predict(self, x)


def fnn_fit(X, Y, hidden, lam=0.0, trainer: TrainerConfig | None = None) -> FnnModel:
    trainer = trainer or TrainerConfig()
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    if len(X) == 0:
        raise ValueError("empty dataset")
    if lam < 0:
        raise ValueError("regularization must be nonnegative")
    xs, ys = Standardizer.fit(X), Standardizer.fit(Y)
    Xs, Ys = xs.transform(X), ys.transform(Y)
    rng = np.random.default_rng(trainer.rng_seed)
    hidden = tuple(int(h) for h in hidden)
    params = init_params((X.shape[1], *hidden, Y.shape[1]), rng)
    m = [(np.zeros_like(W), np.zeros_like(b)) for W, b in params]
    v = [(np.zeros_like(W), np.zeros_like(b)) for W, b in params]
    n = len(X)
    step = 0
    curve = []
    for epoch in range(trainer.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, trainer.batch_size):
            idx = order[start:start + trainer.batch_size]
            loss, grads = loss_and_grad(params, Xs[idx], Ys[idx], lam, n)
            if not np.isfinite(loss) or loss > 1e12:
                raise TrainingError(f"training diverged at epoch {epoch} (loss={loss}, "
                                    f"learning_rate={trainer.learning_rate}, hidden={hidden}, lam={lam})")
            total += loss * len(idx)
            step += 1
            c1 = 1 - trainer.beta1 ** step
            c2 = 1 - trainer.beta2 ** step
            for i, ((W, b), (gW, gb)) in enumerate(zip(params, grads)):
                mW, mb = m[i]
                vW, vb = v[i]
                mW = trainer.beta1 * mW + (1 - trainer.beta1) * gW
                mb = trainer.beta1 * mb + (1 - trainer.beta1) * gb
                vW = trainer.beta2 * vW + (1 - trainer.beta2) * gW * gW
                vb = trainer.beta2 * vb + (1 - trainer.beta2) * gb * gb
                m[i], v[i] = (mW, mb), (vW, vb)
                W = W - trainer.learning_rate * (mW / c1) / (np.sqrt(vW / c2) + trainer.adam_eps)
                b = b - trainer.learning_rate * (mb / c1) / (np.sqrt(vb / c2) + trainer.adam_eps)
                params[i] = (W, b)
        curve.append(total / n)
    return FnnModel(hidden, float(lam), params, xs, ys, trainer, curve)


def fnn_predict(model: FnnModel, x) -> np.ndarray:
    """De-standardized network output; batched over rows of ``x``."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    Q = np.atleast_2d(x)
    if Q.shape[1] != model.widths[0]:
        raise ValueError(f"input width {Q.shape[1]} != {model.widths[0]}")
    out = model.y_scaler.inverse(forward(model.params, model.x_scaler.transform(Q)))
    return out[0] if single else out
