"""Random forest: bagged regression trees with per-node column sampling.

Regression predicts the mean of the member trees. Classification trains
trees on the 0/1 target and scores a row as the fraction of trees whose
leaf majority votes positive; thresholding is left to evaluation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .common import CLASSIFICATION, TrainedModel, derive_seed
from .tree import RegressionTree, fit_regression_tree


@dataclass
class RFConfig:
    trees: int = 200
    m_try: int | None = None  # default sqrt(p) classification, p/3 regression
    min_node: int = 5
    max_depth: int | None = None
    bootstrap_fraction: float = 1.0  # 0 disables resampling


@dataclass
class ForestParams:
    trees: list[RegressionTree]


def default_m_try(p: int, task: str) -> int:
    if task == CLASSIFICATION:
        return max(1, int(math.ceil(math.sqrt(p))))
    return max(1, int(math.ceil(p / 3)))


def fit_random_forest(
    X, y, columns: list[str], config: RFConfig, task: str, seed: int = 0
) -> TrainedModel:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, p = X.shape
    if config.trees < 1:
        raise ValueError("config.trees must be >= 1")
    m_try = config.m_try if config.m_try is not None else default_m_try(p, task)
    gains = np.zeros(p, dtype=np.float64)
    trees: list[RegressionTree] = []
    for b in range(config.trees):
        rng = np.random.default_rng(derive_seed(seed, "rf-tree", b))
        if config.bootstrap_fraction > 0:
            size = max(1, int(round(config.bootstrap_fraction * n)))
            rows = rng.integers(0, n, size=size)
        else:
            rows = np.arange(n)
        trees.append(
            fit_regression_tree(
                X[rows],
                y[rows],
                min_node=config.min_node,
                max_depth=config.max_depth,
                m_try=m_try,
                rng=rng,
                col_gains=gains,
            )
        )
    importances = {c: float(g) for c, g in zip(columns, gains)}
    return TrainedModel(
        kind="rf",
        task=task,
        manifest=list(columns),
        seed=seed,
        params=ForestParams(trees=trees),
        importances_raw=importances,
    )


def member_predictions(model: TrainedModel, X: np.ndarray) -> np.ndarray:
    """Per-tree outputs, shape (trees, rows): leaf means for regression,
    leaf majority votes for classification."""
    out = np.stack([t.predict(X) for t in model.params.trees])
    if model.task == CLASSIFICATION:
        out = (out >= 0.5).astype(np.float64)
    return out


def predict_forest(model: TrainedModel, X: np.ndarray) -> np.ndarray:
    return member_predictions(model, X).mean(axis=0)
