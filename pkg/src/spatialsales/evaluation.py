"""Out-of-time validation, metrics, the cross-model comparison, and
segment rankings.

AUC is computed two independent ways — the Mann-Whitney rank statistic
(ties half-credited) and trapezoidal integration of the ROC sweep — and
the two must agree exactly; both reduce to integer numerators over the
same positive x negative denominator. Regression metrics follow
RMSE = sqrt(mean squared error), with MSE reported as RMSE^2 so the
identity holds bit-exactly.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
import pandas as pd

from . import models
from .features import FeatureMatrix, Labels
from .models import CLASSIFICATION, REGRESSION, TrainedModel

FEATURE_SET_ORDER = ("base", "zone", "spatial")


class EvaluationError(ValueError):
    pass


# ---------------------------------------------------------------------------
# metrics


def _check_binary(labels: np.ndarray) -> tuple[int, int]:
    pos = int((labels == 1).sum())
    neg = int((labels == 0).sum())
    if pos + neg != len(labels):
        raise EvaluationError("labels must be 0/1")
    if pos == 0 or neg == 0:
        raise EvaluationError("AUC undefined: labels contain a single class")
    return pos, neg


def auc(scores, labels) -> float:
    """Rank-statistic AUC: (concordant + 0.5 * tied) / (pos * neg)."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    pos, neg = _check_binary(labels)
    uniq, inv = np.unique(scores, return_inverse=True)
    pos_per = np.bincount(inv[labels == 1], minlength=len(uniq)).astype(np.int64)
    cnt_per = np.bincount(inv, minlength=len(uniq)).astype(np.int64)
    starts = np.concatenate([[1], 1 + np.cumsum(cnt_per[:-1])])  # 1-based group start
    two_rank = 2 * starts + cnt_per - 1  # twice the average tied rank, integer
    two_u = int((pos_per * two_rank).sum()) - pos * (pos + 1)
    return two_u / (2 * pos * neg)


def auc_trapezoid(scores, labels) -> float:
    """ROC-curve AUC by trapezoidal integration over the threshold sweep."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    pos, neg = _check_binary(labels)
    order = np.argsort(-scores, kind="mergesort")
    s = scores[order]
    y = labels[order]
    boundary = np.flatnonzero(np.diff(s) != 0)
    ends = np.concatenate([boundary, [len(s) - 1]])
    tp = np.cumsum(y == 1)[ends].astype(np.int64)
    fp = np.cumsum(y == 0)[ends].astype(np.int64)
    tp_prev = np.concatenate([[0], tp[:-1]])
    fp_prev = np.concatenate([[0], fp[:-1]])
    twice_area = int(((fp - fp_prev) * (tp + tp_prev)).sum())
    return twice_area / (2 * pos * neg)


def roc_points(scores, labels) -> pd.DataFrame:
    """(threshold, fpr, tpr) per distinct score, for external plotting."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    pos, neg = _check_binary(labels)
    order = np.argsort(-scores, kind="mergesort")
    s = scores[order]
    y = labels[order]
    boundary = np.flatnonzero(np.diff(s) != 0)
    ends = np.concatenate([boundary, [len(s) - 1]])
    tp = np.cumsum(y == 1)[ends]
    fp = np.cumsum(y == 0)[ends]
    return pd.DataFrame({"threshold": s[ends], "fpr": fp / neg, "tpr": tp / pos})


@dataclass
class RegressionMetrics:
    rmse: float
    mae: float
    mse: float
    r2: float | None

    def as_dict(self) -> dict:
        return {"rmse": self.rmse, "mae": self.mae, "mse": self.mse, "r2": self.r2}


def regression_metrics(preds, observed) -> RegressionMetrics:
    preds = np.asarray(preds, dtype=np.float64)
    observed = np.asarray(observed, dtype=np.float64)
    if len(preds) != len(observed) or len(preds) == 0:
        raise EvaluationError("predictions and observations must be equal, non-zero length")
    err = preds - observed
    rmse = float(np.sqrt((err * err).mean()))
    mae = float(np.abs(err).mean())
    mse = rmse * rmse  # definitionally RMSE^2, exact
    sse = float((err * err).sum())
    sst = float(((observed - observed.mean()) ** 2).sum())
    r2 = None if sst == 0 else 1.0 - sse / sst
    return RegressionMetrics(rmse=rmse, mae=mae, mse=mse, r2=r2)


# ---------------------------------------------------------------------------
# out-of-time split


@dataclass(frozen=True)
class SplitSpec:
    train_start: int
    train_end: int
    validation_year: int
    test_year: int

    def __post_init__(self):
        if not (self.train_start <= self.train_end < self.validation_year < self.test_year):
            raise EvaluationError(
                "split years must satisfy train_start <= train_end < validation < test"
            )


@dataclass(frozen=True)
class Partition:
    """Row indices plus the role they may be used for. Fitting code accepts
    only train partitions, so test rows cannot reach a fit by construction."""

    role: str  # train | validation | test
    indices: np.ndarray


@dataclass
class OotSplit:
    train: Partition
    validation: Partition
    test: Partition

    def parts(self):
        return (self.train, self.validation, self.test)


def out_of_time_split(matrix: FeatureMatrix, spec: SplitSpec) -> OotSplit:
    years = matrix.years
    train = np.flatnonzero((years >= spec.train_start) & (years <= spec.train_end))
    validation = np.flatnonzero(years == spec.validation_year)
    test = np.flatnonzero(years == spec.test_year)
    if len(validation) == 0:
        warnings.warn(f"validation year {spec.validation_year} absent from data")
    if len(test) == 0:
        warnings.warn(f"test year {spec.test_year} absent from data")
    return OotSplit(
        train=Partition("train", train),
        validation=Partition("validation", validation),
        test=Partition("test", test),
    )


def fit_on(
    partition: Partition,
    kind: str,
    matrix: FeatureMatrix,
    y: np.ndarray,
    config,
    task: str,
    seed: int,
) -> TrainedModel:
    """The only gate into the learners during evaluation: rejects any
    partition that is not a training partition."""
    if partition.role != "train":
        raise EvaluationError(f"refusing to fit on a {partition.role} partition")
    rows = partition.indices
    X = matrix.values()[rows]
    return models.fit(kind, X, y[rows], matrix.feature_columns, config, task, seed)


# ---------------------------------------------------------------------------
# model comparison


@dataclass
class CellResult:
    task: str
    feature_set: str
    learner: str
    status: str  # ok | failed
    seed: int
    runtime_s: float
    n_train: int
    n_validation: int
    n_test: int
    validation: dict | None = None
    test: dict | None = None
    error: str | None = None


@dataclass
class MetricsReport:
    cells: list[CellResult]
    seed: int

    def frame(self) -> pd.DataFrame:
        rows = []
        for c in self.cells:
            row = {
                "task": c.task,
                "feature_set": c.feature_set,
                "learner": c.learner,
                "status": c.status,
                "seed": c.seed,
                "runtime_s": c.runtime_s,
                "n_train": c.n_train,
                "n_validation": c.n_validation,
                "n_test": c.n_test,
            }
            for part, metrics in (("validation", c.validation), ("test", c.test)):
                for k, v in (metrics or {}).items():
                    row[f"{part}_{k}"] = v
            row["error"] = c.error
            rows.append(row)
        return pd.DataFrame(rows)

    def cell(self, task: str, feature_set: str, learner: str) -> CellResult:
        for c in self.cells:
            if (c.task, c.feature_set, c.learner) == (task, feature_set, learner):
                return c
        raise KeyError((task, feature_set, learner))

    def to_json(self, path) -> None:
        import json

        with open(str(path), "w") as fh:
            json.dump(
                {"seed": self.seed, "cells": [asdict(c) for c in self.cells]},
                fh,
                indent=1,
                sort_keys=True,
            )

    def to_csv(self, path) -> None:
        self.frame().to_csv(str(path), index=False)


def _task_rows(task: str, labels: Labels, indices: np.ndarray) -> np.ndarray:
    if task == REGRESSION:
        keep = labels.regression_rows[indices]
        return indices[keep]
    return indices


def _task_target(task: str, labels: Labels) -> np.ndarray:
    return labels.sale_psf if task == REGRESSION else labels.sold.astype(np.float64)


def evaluate_model(
    model: TrainedModel, matrix: FeatureMatrix, labels: Labels, partition: Partition
) -> dict | None:
    rows = _task_rows(model.task, labels, partition.indices)
    if len(rows) == 0:
        return None
    X = matrix.values()[rows]
    y = _task_target(model.task, labels)[rows]
    preds = model.predict(X, matrix.feature_columns)
    if model.task == CLASSIFICATION:
        out = regression_metrics(preds, y).as_dict()
        out["auc"] = auc(preds, y.astype(np.int64))
        return out
    return regression_metrics(preds, y).as_dict()


def train_cells(
    matrices: dict[str, FeatureMatrix],
    labels: Labels,
    split: OotSplit,
    configs: dict[str, object],
    seed: int = 0,
    learners=models.LEARNERS,
    tasks=models.TASKS,
) -> dict[tuple[str, str, str], TrainedModel | Exception]:
    """Fit every (task, feature set, learner) cell; failures are recorded
    and do not stop the run."""
    out: dict[tuple[str, str, str], TrainedModel | Exception] = {}
    y_all = {task: _task_target(task, labels) for task in tasks}
    for task in tasks:
        for fs_name in sorted(matrices, key=_feature_set_key):
            matrix = matrices[fs_name]
            train_rows = _task_rows(task, labels, split.train.indices)
            part = Partition("train", train_rows)
            for learner in learners:
                cell_seed = models.derive_seed(seed, task, fs_name, learner)
                try:
                    out[(task, fs_name, learner)] = fit_on(
                        part, learner, matrix, y_all[task], configs[learner], task, cell_seed
                    )
                except Exception as exc:  # recorded, run continues
                    out[(task, fs_name, learner)] = exc
    return out


def _feature_set_key(name: str):
    try:
        return (FEATURE_SET_ORDER.index(name), name)
    except ValueError:
        return (len(FEATURE_SET_ORDER), name)


def compare_models(
    matrices: dict[str, FeatureMatrix],
    labels: Labels,
    spec: SplitSpec,
    configs: dict[str, object],
    seed: int = 0,
    learners=models.LEARNERS,
    tasks=models.TASKS,
    fitted: dict | None = None,
) -> MetricsReport:
    """The cross table: |learners| x |feature sets| x |tasks| cells, each
    fit on train and scored on the validation and test partitions."""
    first = next(iter(matrices.values()))
    keys0 = first.keys()
    for m in matrices.values():
        if not keys0.equals(m.keys()):
            raise EvaluationError("feature matrices must share identical row keys")
    split = out_of_time_split(first, spec)
    cells: list[CellResult] = []
    for task in tasks:
        for fs_name in sorted(matrices, key=_feature_set_key):
            matrix = matrices[fs_name]
            n_train = len(_task_rows(task, labels, split.train.indices))
            n_val = len(_task_rows(task, labels, split.validation.indices))
            n_test = len(_task_rows(task, labels, split.test.indices))
            for learner in learners:
                cell_seed = models.derive_seed(seed, task, fs_name, learner)
                t0 = time.perf_counter()
                try:
                    if fitted is not None:
                        model = fitted[(task, fs_name, learner)]
                        if isinstance(model, Exception):
                            raise model
                    else:
                        train_rows = _task_rows(task, labels, split.train.indices)
                        model = fit_on(
                            Partition("train", train_rows),
                            learner,
                            matrix,
                            _task_target(task, labels),
                            configs[learner],
                            task,
                            cell_seed,
                        )
                    val_metrics = evaluate_model(model, matrix, labels, split.validation)
                    test_metrics = evaluate_model(model, matrix, labels, split.test)
                    cells.append(
                        CellResult(
                            task=task,
                            feature_set=fs_name,
                            learner=learner,
                            status="ok",
                            seed=cell_seed,
                            runtime_s=time.perf_counter() - t0,
                            n_train=n_train,
                            n_validation=n_val,
                            n_test=n_test,
                            validation=val_metrics,
                            test=test_metrics,
                        )
                    )
                except Exception as exc:
                    cells.append(
                        CellResult(
                            task=task,
                            feature_set=fs_name,
                            learner=learner,
                            status="failed",
                            seed=cell_seed,
                            runtime_s=time.perf_counter() - t0,
                            n_train=n_train,
                            n_validation=n_val,
                            n_test=n_test,
                            error=f"{type(exc).__name__}: {exc}",
                        )
                    )
    cells.sort(key=lambda c: (c.task, _feature_set_key(c.feature_set), c.learner))
    return MetricsReport(cells=cells, seed=seed)


# ---------------------------------------------------------------------------
# segment rankings


@dataclass
class RankingTable:
    per_segment: pd.DataFrame  # segment, model, metric, rank
    summary: pd.DataFrame  # model, pct_rank1..3, average_rank

    def to_csv(self, path) -> None:
        self.summary.to_csv(str(path), index=False)


def rank_by_segment(
    predictions: dict[str, np.ndarray],
    y: np.ndarray,
    segments,
    task: str,
    min_rows: int = 10,
) -> RankingTable:
    """Rank the competing models within every segment by the task metric
    (RMSE ascending / AUC descending). Ties break lexicographically by
    model name, so each segment's ranks are a permutation of 1..k."""
    if len(predictions) < 2:
        raise EvaluationError("need at least two models to rank")
    segs = pd.Series(list(segments))
    y = np.asarray(y, dtype=np.float64)
    names = sorted(predictions)
    rows = []
    for seg in sorted(segs.unique()):
        idx = np.flatnonzero((segs == seg).to_numpy())
        if len(idx) < min_rows:
            continue
        ysub = y[idx]
        if task == CLASSIFICATION and len(np.unique(ysub.astype(np.int64))) < 2:
            continue
        scored = []
        for name in names:
            preds = np.asarray(predictions[name], dtype=np.float64)[idx]
            if task == CLASSIFICATION:
                metric = auc(preds, ysub.astype(np.int64))
                key = -metric  # higher is better
            else:
                metric = regression_metrics(preds, ysub).rmse
                key = metric
            scored.append((key, name, metric))
        scored.sort()
        for rank, (_, name, metric) in enumerate(scored, start=1):
            rows.append({"segment": str(seg), "model": name, "metric": metric, "rank": rank})
    per_segment = pd.DataFrame(rows)
    if per_segment.empty:
        raise EvaluationError("no segment had enough rows to rank")
    summary_rows = []
    for name in names:
        ranks = per_segment.loc[per_segment["model"] == name, "rank"]
        row = {"model": name, "average_rank": float(ranks.mean())}
        for r in (1, 2, 3):
            row[f"pct_rank{r}"] = float((ranks == r).mean())
        summary_rows.append(row)
    summary = pd.DataFrame(summary_rows)
    return RankingTable(per_segment=per_segment, summary=summary)
