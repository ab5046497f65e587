"""Gradient tree boosting for squared-error and binomial-deviance loss.

Starts from the loss-minimizing constant, then repeatedly fits a
regression tree to the pseudo-residuals (the negative loss gradient),
replaces each leaf value with the per-leaf line-search step — the leaf
mean for squared error, one Newton step sum(r) / sum(p(1-p)) for the
binomial — and shrinks the update by the learning rate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .common import CLASSIFICATION, ModelFitError, TrainedModel
from .tree import RegressionTree, fit_regression_tree


@dataclass
class GBMConfig:
    iterations: int = 100
    learning_rate: float = 0.1
    max_depth: int = 3
    min_node: int = 10


@dataclass
class GBMParams:
    f0: float
    learning_rate: float
    trees: list[RegressionTree]
    train_loss: list[float]


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


def initial_constant(y: np.ndarray, task: str) -> float:
    """f0: mean for squared error, log-odds of the base rate for binomial."""
    if task == CLASSIFICATION:
        pbar = float(np.clip(y.mean(), 1e-12, 1 - 1e-12))
        return math.log(pbar / (1 - pbar))
    return float(y.mean())


def fit_gbm(X, y, columns: list[str], config: GBMConfig, task: str, seed: int = 0) -> TrainedModel:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if config.iterations < 1:
        raise ValueError("config.iterations must be >= 1")
    if not (0 < config.learning_rate <= 1):
        raise ValueError("learning_rate must be in (0, 1]")
    n, p = X.shape
    f = np.full(n, initial_constant(y, task))
    f0 = float(f[0])
    gains = np.zeros(p, dtype=np.float64)
    trees: list[RegressionTree] = []
    losses: list[float] = []
    rng = np.random.default_rng(seed)
    for m in range(config.iterations):
        if task == CLASSIFICATION:
            prob = _sigmoid(f)
            resid = y - prob
        else:
            resid = y - f
        tree = fit_regression_tree(
            X,
            resid,
            min_node=config.min_node,
            max_depth=config.max_depth,
            m_try=None,
            rng=rng,
            col_gains=gains,
        )
        if task == CLASSIFICATION:
            # overwrite leaf means with the Newton step per terminal region
            leaves = tree.apply(X)
            hess = prob * (1 - prob)
            num = np.bincount(leaves, weights=resid, minlength=tree.n_nodes)
            den = np.bincount(leaves, weights=hess, minlength=tree.n_nodes)
            gamma = np.divide(num, den, out=np.zeros_like(num), where=den > 1e-12)
            is_leaf = tree.feature < 0
            tree.value[is_leaf] = gamma[is_leaf]
        trees.append(tree)
        f = f + config.learning_rate * tree.predict(X)
        if task == CLASSIFICATION:
            pr = np.clip(_sigmoid(f), 1e-12, 1 - 1e-12)
            loss = float(-(y * np.log(pr) + (1 - y) * np.log(1 - pr)).sum())
        else:
            loss = float(((y - f) ** 2).sum())
        if not math.isfinite(loss):
            raise ModelFitError(f"non-finite training loss at iteration {m}")
        losses.append(loss)
    importances = {c: float(g) for c, g in zip(columns, gains)}
    return TrainedModel(
        kind="gbm",
        task=task,
        manifest=list(columns),
        seed=seed,
        params=GBMParams(f0=f0, learning_rate=config.learning_rate, trees=trees, train_loss=losses),
        importances_raw=importances,
    )


def raw_score(model: TrainedModel, X: np.ndarray) -> np.ndarray:
    f = np.full(len(X), model.params.f0)
    for tree in model.params.trees:
        f = f + model.params.learning_rate * tree.predict(X)
    return f


def predict_gbm(model: TrainedModel, X: np.ndarray) -> np.ndarray:
    f = raw_score(model, X)
    if model.task == CLASSIFICATION:
        return _sigmoid(f)
    return f
