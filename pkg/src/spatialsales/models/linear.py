"""Generalized linear models: gaussian via ridge-jittered normal equations,
binomial via iteratively reweighted least squares with the logit link.

Columns are median-imputed (with missing indicators) and standardized
internally; fitted coefficients are exposed in the original column scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .common import CLASSIFICATION, ColumnScaler, TrainedModel, fit_scaler

GAUSSIAN = "gaussian"
BINOMIAL = "binomial"


@dataclass
class GLMConfig:
    family: str | None = None  # default by task
    max_iter: int = 50
    tol: float = 1e-8
    ridge: float = 1e-8


@dataclass
class GLMParams:
    family: str
    scaler: ColumnScaler
    weights: np.ndarray  # standardized space
    intercept: float
    converged: bool
    deviance: float


def logit_link(mu):
    """g(mu) = log(mu / (1 - mu)); g(0.5) == 0."""
    mu = np.asarray(mu, dtype=np.float64)
    return np.log(mu / (1.0 - mu))


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-np.clip(z, -700, 700)))


def _binomial_deviance(y, p):
    p = np.clip(p, 1e-12, 1 - 1e-12)
    return float(-2.0 * (y * np.log(p) + (1 - y) * np.log(1 - p)).sum())


def fit_glm(X, y, columns: list[str], config: GLMConfig, task: str, seed: int = 0) -> TrainedModel:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    family = config.family or (BINOMIAL if task == CLASSIFICATION else GAUSSIAN)
    scaler = fit_scaler(X)
    Z = scaler.transform(X)
    n, q = Z.shape

    if family == GAUSSIAN:
        ybar = float(y.mean())
        g = Z.T @ (y - ybar)
        H = Z.T @ Z + config.ridge * np.eye(q)
        w = np.linalg.solve(H, g)
        resid = y - ybar - Z @ w
        params = GLMParams(
            family=family,
            scaler=scaler,
            weights=w,
            intercept=ybar,
            converged=True,
            deviance=float((resid**2).sum()),
        )
    elif family == BINOMIAL:
        w = np.zeros(q)
        b = 0.0
        dev = _binomial_deviance(y, np.full(n, max(min(y.mean(), 1 - 1e-9), 1e-9)))
        converged = False
        for _ in range(config.max_iter):
            eta = Z @ w + b
            p = _sigmoid(eta)
            wt = np.clip(p * (1 - p), 1e-10, None)
            z = eta + (y - p) / wt
            Zw = Z * wt[:, None]
            A = np.zeros((q + 1, q + 1))
            A[:q, :q] = Z.T @ Zw + config.ridge * np.eye(q)
            A[:q, q] = Zw.sum(axis=0)
            A[q, :q] = A[:q, q]
            A[q, q] = wt.sum()
            rhs = np.concatenate([Zw.T @ z, [float((wt * z).sum())]])
            sol = np.linalg.solve(A, rhs)
            w_new, b_new = sol[:q], float(sol[q])
            step = max(float(np.abs(w_new - w).max(initial=0.0)), abs(b_new - b))
            w, b = w_new, b_new
            eta = Z @ w + b
            new_dev = _binomial_deviance(y, _sigmoid(eta))
            # under separation the deviance plateaus and the clipped IRLS
            # weights pin the iterate while fitted probabilities saturate;
            # treat saturated etas as diverged coefficients, not convergence
            saturated = float(np.abs(eta).max(initial=0.0)) > 30.0
            scale = 1.0 + max(float(np.abs(w).max(initial=0.0)), abs(b))
            settled = abs(new_dev - dev) < config.tol * (abs(dev) + 0.1) and step < 1e-6 * scale
            dev = new_dev
            if settled:
                converged = not saturated
                break
        params = GLMParams(
            family=family,
            scaler=scaler,
            weights=w,
            intercept=b,
            converged=converged,
            deviance=dev,
        )
    else:
        raise ValueError(f"unknown family {family!r}")

    return TrainedModel(
        kind="glm", task=task, manifest=list(columns), seed=seed, params=params
    )


def coefficients(model: TrainedModel) -> dict[str, float]:
    """Intercept and per-column coefficients in the original data scale."""
    p = model.params
    names = p.scaler.feature_names(model.manifest)
    raw = p.weights / p.scaler.stds
    intercept = p.intercept - float((p.weights * p.scaler.means / p.scaler.stds).sum())
    out = {"(intercept)": intercept}
    out.update({name: float(c) for name, c in zip(names, raw)})
    return out


def predict_glm(model: TrainedModel, X: np.ndarray) -> np.ndarray:
    p = model.params
    eta = p.scaler.transform(X) @ p.weights + p.intercept
    if p.family == BINOMIAL:
        return _sigmoid(eta)
    return eta
