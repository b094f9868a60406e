"""Small differentiable models with hand-written gradients.

Weight layouts (flat, row-major):

* ``linear_regression`` / ``softmax_regression``: ``W`` (K x d) then ``b`` (K).
* ``mlp1``: ``W1`` (h x d), ``b1`` (h), ``W2`` (K x h), ``b2`` (K); tanh hidden
  layer, so the loss stays smooth.

Targets for ``mse`` may be integer labels (one-hot encoded on the fly) or a
float matrix with one column per output. Per-example mse is
``0.5 * ||out - target||^2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from rs2.core import Dataset, NumericError, Rng, ShapeError, matmul

MODEL_KINDS = ("linear_regression", "softmax_regression", "mlp1")
LOSS_KINDS = ("mse", "cross_entropy")


@dataclass(frozen=True)
class Model:
    kind: str
    d_in: int
    k_out: int
    weights: np.ndarray
    hidden: int = 0

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.kind == "mlp1" and self.hidden < 1:
            raise ValueError("mlp1 needs hidden >= 1")
        w = np.asarray(self.weights, dtype=np.float64).reshape(-1)
        expected = n_params(self.kind, self.d_in, self.k_out, self.hidden)
        if w.size != expected:
            raise ShapeError(f"{self.kind} expects {expected} weights, got {w.size}")
        object.__setattr__(self, "weights", w)

    def with_weights(self, w) -> "Model":
        return Model(self.kind, self.d_in, self.k_out, w, self.hidden)


@dataclass(frozen=True)
class Loss:
    kind: str = "cross_entropy"
    l2: float = 0.0

    def __post_init__(self):
        if self.kind not in LOSS_KINDS:
            raise ValueError(f"unknown loss kind {self.kind!r}")
        if self.l2 < 0:
            raise ValueError("l2 must be non-negative")


def n_params(kind: str, d_in: int, k_out: int, hidden: int = 0) -> int:
    if kind == "mlp1":
        return hidden * d_in + hidden + k_out * hidden + k_out
    return k_out * d_in + k_out


def _unpack(model: Model):
    w, d, k = model.weights, model.d_in, model.k_out
    if model.kind == "mlp1":
        h = model.hidden
        o = 0
        w1 = w[o : o + h * d].reshape(h, d); o += h * d
        b1 = w[o : o + h]; o += h
        w2 = w[o : o + k * h].reshape(k, h); o += k * h
        b2 = w[o : o + k]
        return w1, b1, w2, b2
    return w[: k * d].reshape(k, d), w[k * d :]


def init_model(kind: str, d_in: int, k_out: int, rng: Rng, hidden: int = 0) -> Model:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases."""
    if kind == "mlp1":
        a1, a2 = 1.0 / math.sqrt(d_in), 1.0 / math.sqrt(hidden)
        w1 = rng.generator.uniform(-a1, a1, size=hidden * d_in)
        w2 = rng.generator.uniform(-a2, a2, size=k_out * hidden)
        w = np.concatenate([w1, np.zeros(hidden), w2, np.zeros(k_out)])
    else:
        a = 1.0 / math.sqrt(d_in)
        w = np.concatenate([rng.generator.uniform(-a, a, size=k_out * d_in), np.zeros(k_out)])
    return Model(kind, d_in, k_out, w, hidden)


def _check_batch(model: Model, batch) -> np.ndarray:
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.d_in:
        raise ShapeError(f"batch must be (n, {model.d_in}), got {x.shape}")
    return x


def forward(model: Model, batch) -> np.ndarray:
    """Raw outputs (logits for softmax_regression); no softmax applied."""
    x = _check_batch(model, batch)
    if model.kind == "mlp1":
        w1, b1, w2, b2 = _unpack(model)
        hid = np.tanh(matmul(x, w1.T) + b1)
        return matmul(hid, w2.T) + b2
    w, b = _unpack(model)
    return matmul(x, w.T) + b


def log_softmax(z: np.ndarray) -> np.ndarray:
    m = z.max(axis=1, keepdims=True)
    shifted = z - m
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def softmax(z: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax(np.asarray(z, dtype=np.float64)))


def _targets(model: Model, loss: Loss, labels, n: int):
    y = np.asarray(labels)
    if loss.kind == "cross_entropy" or (y.ndim == 1 and np.issubdtype(y.dtype, np.integer)):
        y = y.astype(np.int64).reshape(-1)
        if y.shape[0] != n:
            raise ShapeError(f"{y.shape[0]} labels for a batch of {n}")
        if y.size and (y.min() < 0 or y.max() >= model.k_out):
            raise ValueError(f"labels must lie in [0, {model.k_out})")
        return y
    y = np.asarray(labels, dtype=np.float64)
    if y.ndim == 1:
        y = y[:, None]
    if y.shape != (n, model.k_out):
        raise ShapeError(f"mse targets must be ({n}, {model.k_out}), got {y.shape}")
    return y


def _raise_first_bad(values: np.ndarray, what: str):
    bad = ~np.isfinite(values)
    if bad.ndim > 1:
        bad = bad.any(axis=tuple(range(1, bad.ndim)))
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise NumericError(f"non-finite {what} for example {i}", index=i)


def _per_example_loss_and_dout(model: Model, loss: Loss, out: np.ndarray, y):
    n = out.shape[0]
    if loss.kind == "cross_entropy":
        logp = log_softmax(out)
        per = -logp[np.arange(n), y]
        dout = np.exp(logp)
        dout[np.arange(n), y] -= 1.0
        return per, dout
    if y.ndim == 1:
        onehot = np.zeros_like(out)
        onehot[np.arange(n), y] = 1.0
        y = onehot
    resid = out - y
    return 0.5 * (resid * resid).sum(axis=1), resid


def per_example_losses(model: Model, loss: Loss, batch, labels) -> np.ndarray:
    """Unregularized loss of every row; used for importance scoring."""
    x = _check_batch(model, batch)
    y = _targets(model, loss, labels, x.shape[0])
    out = forward(model, x)
    per, _ = _per_example_loss_and_dout(model, loss, out, y)
    _raise_first_bad(per, "loss")
    return per


def loss_and_grad(model: Model, loss: Loss, batch, labels) -> tuple[float, np.ndarray]:
    """Batch-mean loss and its exact gradient w.r.t. the flat weights."""
    x = _check_batch(model, batch)
    n = x.shape[0]
    if n == 0:
        raise ShapeError("empty batch")
    y = _targets(model, loss, labels, n)
    with np.errstate(over="ignore", invalid="ignore"):
        if model.kind == "mlp1":
            w1, b1, w2, b2 = _unpack(model)
            hid = np.tanh(matmul(x, w1.T) + b1)
            out = matmul(hid, w2.T) + b2
        else:
            w, b = _unpack(model)
            out = matmul(x, w.T) + b
        _raise_first_bad(out, "model output")
        per, dout = _per_example_loss_and_dout(model, loss, out, y)
    _raise_first_bad(per, "loss")
    dout = dout / n
    if model.kind == "mlp1":
        g_w2 = matmul(dout.T, hid)
        g_b2 = dout.sum(axis=0)
        dhid = matmul(dout, w2) * (1.0 - hid * hid)
        g_w1 = matmul(dhid.T, x)
        g_b1 = dhid.sum(axis=0)
        grad = np.concatenate([g_w1.ravel(), g_b1, g_w2.ravel(), g_b2])
    else:
        grad = np.concatenate([matmul(dout.T, x).ravel(), dout.sum(axis=0)])
    value = float(per.sum() / n)
    if loss.l2:
        value += 0.5 * loss.l2 * float(model.weights @ model.weights)
        grad = grad + loss.l2 * model.weights
    if not np.all(np.isfinite(grad)):
        raise NumericError("non-finite gradient")
    return value, grad


def per_example_grads(model: Model, loss: Loss, batch, labels) -> np.ndarray:
    """Gradient of each example's loss, one row per example (vectorized)."""
    x = _check_batch(model, batch)
    n = x.shape[0]
    y = _targets(model, loss, labels, n)
    if model.kind == "mlp1":
        w1, b1, w2, b2 = _unpack(model)
        hid = np.tanh(x @ w1.T + b1)
        out = hid @ w2.T + b2
        _, dout = _per_example_loss_and_dout(model, loss, out, y)
        dhid = (dout @ w2) * (1.0 - hid * hid)
        g = np.concatenate(
            [
                (dhid[:, :, None] * x[:, None, :]).reshape(n, -1),
                dhid,
                (dout[:, :, None] * hid[:, None, :]).reshape(n, -1),
                dout,
            ],
            axis=1,
        )
    else:
        w, b = _unpack(model)
        out = x @ w.T + b
        _, dout = _per_example_loss_and_dout(model, loss, out, y)
        g = np.concatenate([(dout[:, :, None] * x[:, None, :]).reshape(n, -1), dout], axis=1)
    if loss.l2:
        g = g + loss.l2 * model.weights
    return g


def finite_diff_grad(model: Model, loss: Loss, batch, labels, h: float = 1e-5) -> np.ndarray:
    """Central differences of the batch-mean loss, one coordinate at a time."""
    if h <= 0:
        raise ValueError("h must be positive")
    w = model.weights
    grad = np.empty_like(w)
    for i in range(w.size):
        plus = w.copy()
        plus[i] += h
        minus = w.copy()
        minus[i] -= h
        f_plus, _ = loss_and_grad(model.with_weights(plus), loss, batch, labels)
        f_minus, _ = loss_and_grad(model.with_weights(minus), loss, batch, labels)
        grad[i] = (f_plus - f_minus) / (2.0 * h)
    return grad


def full_gradient(model: Model, loss: Loss, dataset: Dataset, targets=None) -> np.ndarray:
    y = dataset.labels if targets is None else targets
    return loss_and_grad(model, loss, dataset.features, y)[1]


def minibatch_noise(model: Model, loss: Loss, dataset: Dataset, b: int, targets=None) -> float:
    """Exact ``E||g_b - grad l||^2`` for a uniform size-``b`` batch drawn
    without replacement: ``tr(Cov) * (N - b) / ((N - 1) * b)``.

    The covariance is accumulated around the first example's gradient, so a
    dataset of identical examples yields exactly zero.
    """
    n = len(dataset)
    if not 1 <= b <= n:
        raise ValueError("batch size must satisfy 1 <= b <= N")
    if n == 1 or b == n:
        return 0.0
    y = dataset.labels if targets is None else targets
    g = per_example_grads(model, loss, dataset.features, y)
    shifted = g - g[0]
    mean = shifted.mean(axis=0)
    trace_cov = float((shifted * shifted).sum() / n - mean @ mean)
    trace_cov = max(trace_cov, 0.0)
    return trace_cov * (n - b) / ((n - 1) * b)


class EstimationError(RuntimeError):
    pass


def estimate_smoothness_and_noise(
    model: Model,
    loss: Loss,
    dataset: Dataset,
    rng: Rng,
    samples: int,
    b: int,
    radius: float = 1.0,
    targets=None,
) -> tuple[float, float]:
    """Empirical smoothness constant and single-example gradient noise.

    Weight points are drawn as ``model.weights + radius * N(0, I)``.
    ``beta_hat`` is the largest gradient-difference ratio over ``samples``
    pairs; ``sigma_hat`` is the root of ``b * E||g_b - grad l||^2`` averaged
    over ``samples`` points.
    """
    if samples < 2:
        raise ValueError("samples must be >= 2")
    w0 = model.weights
    beta_hat = 0.0
    usable = 0
    noise = []
    for _ in range(samples):
        u = w0 + radius * rng.normal(w0.size)
        v = w0 + radius * rng.normal(w0.size)
        dist = float(np.linalg.norm(u - v))
        mu = model.with_weights(u)
        if dist > 0.0:
            gu = full_gradient(mu, loss, dataset, targets)
            gv = full_gradient(model.with_weights(v), loss, dataset, targets)
            beta_hat = max(beta_hat, float(np.linalg.norm(gu - gv)) / dist)
            usable += 1
        noise.append(minibatch_noise(mu, loss, dataset, b, targets) * b)
    if usable == 0:
        raise EstimationError("all sampled weight pairs coincided")
    return beta_hat, math.sqrt(sum(noise) / len(noise))


def accuracy(model: Model, dataset: Dataset) -> float:
    if len(dataset) == 0:
        return float("nan")
    pred = forward(model, dataset.features).argmax(axis=1)
    return float(np.mean(pred == dataset.labels))


def mean_loss(model: Model, loss: Loss, dataset: Dataset) -> float:
    per = per_example_losses(model, loss, dataset.features, dataset.labels)
    return float(per.mean())
