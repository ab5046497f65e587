"""Shared learner plumbing: tasks, configs, the fitted-model container,
missing-value policy for the linear/network learners, and prediction
dispatch with a strict column-manifest check."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

CLASSIFICATION = "classification"
REGRESSION = "regression"
TASKS = (CLASSIFICATION, REGRESSION)


class ModelFitError(RuntimeError):
    pass


class ManifestMismatch(ValueError):
    pass


@dataclass
class TrainedModel:
    """A fitted learner: prediction state plus training metadata."""

    kind: str  # glm | rf | gbm | ann
    task: str
    manifest: list[str]
    seed: int
    params: Any
    importances_raw: dict[str, float] | None = None

    def predict(self, X: np.ndarray, columns: list[str]) -> np.ndarray:
        return predict(self, X, columns)


def check_manifest(model: TrainedModel, columns: list[str]) -> None:
    if list(columns) == model.manifest:
        return
    missing = [c for c in model.manifest if c not in columns]
    extra = [c for c in columns if c not in model.manifest]
    if not missing and not extra:
        raise ManifestMismatch("columns match the training manifest but are reordered")
    raise ManifestMismatch(f"column manifest mismatch: missing={missing} extra={extra}")


def _as_matrix(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("X must be 2-D (rows x columns)")
    return X


@dataclass
class ColumnScaler:
    """Median imputation + missing indicators + standardization.

    Fitted on training data only. Trees never use this; GLM and ANN share
    it so the two impute-based learners see identical design matrices.
    """

    medians: np.ndarray
    means: np.ndarray
    stds: np.ndarray
    missing_cols: list[int]  # manifest positions that had missing cells in training

    def transform(self, X: np.ndarray) -> np.ndarray:
        X = _as_matrix(X)
        filled = np.where(np.isnan(X), self.medians[None, :], X)
        if self.missing_cols:
            ind = np.isnan(X[:, self.missing_cols]).astype(np.float64)
            filled = np.hstack([filled, ind])
        return (filled - self.means[None, :]) / self.stds[None, :]

    def feature_names(self, manifest: list[str]) -> list[str]:
        return list(manifest) + [f"{manifest[i]}__missing" for i in self.missing_cols]


def fit_scaler(X: np.ndarray) -> ColumnScaler:
    X = _as_matrix(X)
    medians = np.nanmedian(np.where(np.isfinite(X), X, np.nan), axis=0)
    medians = np.where(np.isfinite(medians), medians, 0.0)
    missing_cols = [int(j) for j in np.flatnonzero(np.isnan(X).any(axis=0))]
    filled = np.where(np.isnan(X), medians[None, :], X)
    if missing_cols:
        ind = np.isnan(X[:, missing_cols]).astype(np.float64)
        filled = np.hstack([filled, ind])
    means = filled.mean(axis=0)
    stds = filled.std(axis=0)
    stds = np.where(stds > 0, stds, 1.0)
    return ColumnScaler(medians=medians, means=means, stds=stds, missing_cols=missing_cols)


def derive_seed(master: int, *tags) -> int:
    """Stable sub-seed from a master seed and string/int tags."""
    import hashlib

    text = ":".join([str(master)] + [str(t) for t in tags])
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:4], "big")


def predict(model: TrainedModel, X, columns: list[str]) -> np.ndarray:
    """Deterministic prediction; classification scores lie in [0, 1]."""
    from . import boosting, forest, linear, network

    check_manifest(model, columns)
    X = _as_matrix(X)
    if model.kind == "rf":
        return forest.predict_forest(model, X)
    if model.kind == "gbm":
        return boosting.predict_gbm(model, X)
    if model.kind == "glm":
        return linear.predict_glm(model, X)
    if model.kind == "ann":
        return network.predict_ann(model, X)
    raise ValueError(f"unknown model kind {model.kind!r}")
