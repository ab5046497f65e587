"""Variable importance, scaled so the top variable scores exactly 1.

Tree ensembles report the accumulated squared-error reduction of every
split on each column. GLM and ANN use permutation importance: the mean
increase in validation squared error over five reshuffles of one column.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .common import TrainedModel, predict

N_SHUFFLES = 5


@dataclass
class ImportanceResult:
    scores: dict[str, float]  # max == 1.0 whenever any importance is positive
    all_zero: bool


def _scale(raw: dict[str, float]) -> ImportanceResult:
    top = max(raw.values()) if raw else 0.0
    if top <= 0.0:
        return ImportanceResult(scores={c: 0.0 for c in raw}, all_zero=True)
    return ImportanceResult(scores={c: v / top for c, v in raw.items()}, all_zero=False)


def variable_importance(model: TrainedModel, X_val, y_val) -> ImportanceResult:
    if model.kind in ("rf", "gbm"):
        return _scale(dict(model.importances_raw))

    X_val = np.asarray(X_val, dtype=np.float64)
    y_val = np.asarray(y_val, dtype=np.float64)
    base = predict(model, X_val, model.manifest)
    base_loss = float(((y_val - base) ** 2).mean())
    rng = np.random.default_rng(model.seed)
    raw: dict[str, float] = {}
    for j, col in enumerate(model.manifest):
        bumps = []
        for _ in range(N_SHUFFLES):
            shuffled = X_val.copy()
            shuffled[:, j] = shuffled[rng.permutation(len(shuffled)), j]
            pred = predict(model, shuffled, model.manifest)
            bumps.append(float(((y_val - pred) ** 2).mean()) - base_loss)
        raw[col] = max(0.0, float(np.mean(bumps)))
    return _scale(raw)
