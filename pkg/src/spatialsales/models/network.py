"""Feed-forward neural network trained by back-propagation.

Fully connected layers with rectifier hidden activations; the output is
linear for regression and logistic for classification. Training minimizes
the summed squared error plus an L1 penalty on all parameters by
mini-batch gradient descent. ``loss_and_grad`` exposes the exact training
objective and its analytic gradient so it can be checked against finite
differences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .common import CLASSIFICATION, ColumnScaler, ModelFitError, TrainedModel, fit_scaler

LINEAR = "linear"
LOGISTIC = "logistic"


@dataclass
class ANNConfig:
    hidden: tuple[int, ...] = (1024,)
    epochs: int = 100
    learning_rate: float = 0.01
    l1: float = 1e-5
    batch_size: int = 256
    max_restarts: int = 3


@dataclass
class ANNParams:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    output: str
    scaler: ColumnScaler
    y_mean: float
    y_scale: float


def _relu(z):
    return np.maximum(z, 0.0)


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-np.clip(z, -700, 700)))


def init_params(sizes: list[int], rng: np.random.Generator):
    """Fan-in scaled uniform init: W ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in))."""
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = 1.0 / math.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return weights, biases


def forward(weights, biases, X: np.ndarray, output: str) -> np.ndarray:
    a = X
    last = len(weights) - 1
    for i, (W, b) in enumerate(zip(weights, biases)):
        z = a @ W + b
        a = _relu(z) if i < last else z
    out = a[:, 0]
    return _sigmoid(out) if output == LOGISTIC else out


def loss_and_grad(weights, biases, X, y, l1: float, output: str):
    """R(theta) = sum_i (y_i - f(x_i))^2 + l1 * sum|theta| and its gradient.

    The L1 term uses the subgradient sign(theta) (0 at exact zeros).
    Returns (loss, weight_grads, bias_grads).
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    last = len(weights) - 1
    acts = [X]
    zs = []
    a = X
    for i, (W, b) in enumerate(zip(weights, biases)):
        z = a @ W + b
        zs.append(z)
        a = _relu(z) if i < last else z
        acts.append(a)
    zout = zs[-1][:, 0]
    f = _sigmoid(zout) if output == LOGISTIC else zout
    err = y - f
    sse = float((err * err).sum())
    penalty = sum(float(np.abs(W).sum()) for W in weights) + sum(
        float(np.abs(b).sum()) for b in biases
    )
    loss = sse + l1 * penalty

    if output == LOGISTIC:
        dz = (-2.0 * err * f * (1.0 - f))[:, None]
    else:
        dz = (-2.0 * err)[:, None]
    wgrads = [None] * len(weights)
    bgrads = [None] * len(biases)
    for i in range(last, -1, -1):
        wgrads[i] = acts[i].T @ dz + l1 * np.sign(weights[i])
        bgrads[i] = dz.sum(axis=0) + l1 * np.sign(biases[i])
        if i > 0:
            da = dz @ weights[i].T
            dz = da * (zs[i - 1] > 0)
    return loss, wgrads, bgrads


def _train(Z, t, sizes, config: ANNConfig, seed: int, lr: float, output: str):
    rng = np.random.default_rng(seed)
    weights, biases = init_params(sizes, rng)
    n = len(Z)
    bs = min(config.batch_size, n)
    with np.errstate(over="ignore", invalid="ignore"):
        # divergence shows up as a non-finite loss and triggers a restart;
        # the intermediate overflow is expected, not an error
        for _ in range(config.epochs):
            perm = rng.permutation(n)
            for s in range(0, n, bs):
                rows = perm[s : s + bs]
                loss, wg, bg = loss_and_grad(weights, biases, Z[rows], t[rows], config.l1, output)
                if not math.isfinite(loss):
                    return None
                scale = lr / len(rows)
                for i in range(len(weights)):
                    weights[i] -= scale * wg[i]
                    biases[i] -= scale * bg[i]
        full_loss, _, _ = loss_and_grad(weights, biases, Z, t, config.l1, output)
    if not math.isfinite(full_loss):
        return None
    return weights, biases


def fit_ann(X, y, columns: list[str], config: ANNConfig, task: str, seed: int = 0) -> TrainedModel:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if any(h < 1 for h in config.hidden):
        raise ValueError("hidden sizes must be >= 1")
    scaler = fit_scaler(X)
    Z = scaler.transform(X)
    output = LOGISTIC if task == CLASSIFICATION else LINEAR
    if output == LINEAR:
        y_mean = float(y.mean())
        y_scale = float(y.std()) or 1.0
        t = (y - y_mean) / y_scale
    else:
        y_mean, y_scale = 0.0, 1.0
        t = y
    sizes = [Z.shape[1], *config.hidden, 1]

    lr = config.learning_rate
    fitted = None
    for attempt in range(config.max_restarts + 1):
        fitted = _train(Z, t, sizes, config, seed, lr, output)
        if fitted is not None:
            break
        lr /= 2.0  # training diverged: halve the step and restart
    if fitted is None:
        raise ModelFitError(
            f"training loss non-finite after {config.max_restarts} learning-rate restarts"
        )
    weights, biases = fitted
    return TrainedModel(
        kind="ann",
        task=task,
        manifest=list(columns),
        seed=seed,
        params=ANNParams(
            weights=weights,
            biases=biases,
            output=output,
            scaler=scaler,
            y_mean=y_mean,
            y_scale=y_scale,
        ),
    )


def predict_ann(model: TrainedModel, X: np.ndarray) -> np.ndarray:
    p = model.params
    Z = p.scaler.transform(X)
    out = forward(p.weights, p.biases, Z, p.output)
    if p.output == LINEAR:
        return out * p.y_scale + p.y_mean
    return out
