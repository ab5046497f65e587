"""Versioned JSON round trip for trained models.

Floats go through ``repr`` (what json emits), which round-trips IEEE
doubles exactly, so a reloaded model predicts bit-identically.
"""

from __future__ import annotations

import json

import numpy as np

from .boosting import GBMParams
from .common import ColumnScaler, TrainedModel
from .forest import ForestParams
from .linear import GLMParams
from .network import ANNParams
from .tree import tree_from_dict, tree_to_dict

FORMAT_VERSION = 1


def _scaler_to_dict(s: ColumnScaler) -> dict:
    return {
        "medians": s.medians.tolist(),
        "means": s.means.tolist(),
        "stds": s.stds.tolist(),
        "missing_cols": list(s.missing_cols),
    }


def _scaler_from_dict(d: dict) -> ColumnScaler:
    return ColumnScaler(
        medians=np.array(d["medians"], dtype=np.float64),
        means=np.array(d["means"], dtype=np.float64),
        stds=np.array(d["stds"], dtype=np.float64),
        missing_cols=[int(i) for i in d["missing_cols"]],
    )


def model_to_dict(model: TrainedModel) -> dict:
    p = model.params
    if model.kind == "rf":
        payload = {"trees": [tree_to_dict(t) for t in p.trees]}
    elif model.kind == "gbm":
        payload = {
            "f0": p.f0,
            "learning_rate": p.learning_rate,
            "trees": [tree_to_dict(t) for t in p.trees],
            "train_loss": list(p.train_loss),
        }
    elif model.kind == "glm":
        payload = {
            "family": p.family,
            "scaler": _scaler_to_dict(p.scaler),
            "weights": p.weights.tolist(),
            "intercept": p.intercept,
            "converged": p.converged,
            "deviance": p.deviance,
        }
    elif model.kind == "ann":
        payload = {
            "weights": [W.tolist() for W in p.weights],
            "biases": [b.tolist() for b in p.biases],
            "output": p.output,
            "scaler": _scaler_to_dict(p.scaler),
            "y_mean": p.y_mean,
            "y_scale": p.y_scale,
        }
    else:
        raise ValueError(f"unknown model kind {model.kind!r}")
    return {
        "format_version": FORMAT_VERSION,
        "kind": model.kind,
        "task": model.task,
        "manifest": list(model.manifest),
        "seed": model.seed,
        "importances_raw": model.importances_raw,
        "params": payload,
    }


def model_from_dict(doc: dict) -> TrainedModel:
    if doc.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported model format {doc.get('format_version')!r}")
    kind = doc["kind"]
    p = doc["params"]
    if kind == "rf":
        params = ForestParams(trees=[tree_from_dict(t) for t in p["trees"]])
    elif kind == "gbm":
        params = GBMParams(
            f0=float(p["f0"]),
            learning_rate=float(p["learning_rate"]),
            trees=[tree_from_dict(t) for t in p["trees"]],
            train_loss=[float(x) for x in p["train_loss"]],
        )
    elif kind == "glm":
        params = GLMParams(
            family=p["family"],
            scaler=_scaler_from_dict(p["scaler"]),
            weights=np.array(p["weights"], dtype=np.float64),
            intercept=float(p["intercept"]),
            converged=bool(p["converged"]),
            deviance=float(p["deviance"]),
        )
    elif kind == "ann":
        params = ANNParams(
            weights=[np.array(W, dtype=np.float64) for W in p["weights"]],
            biases=[np.array(b, dtype=np.float64) for b in p["biases"]],
            output=p["output"],
            scaler=_scaler_from_dict(p["scaler"]),
            y_mean=float(p["y_mean"]),
            y_scale=float(p["y_scale"]),
        )
    else:
        raise ValueError(f"unknown model kind {kind!r}")
    return TrainedModel(
        kind=kind,
        task=doc["task"],
        manifest=list(doc["manifest"]),
        seed=int(doc["seed"]),
        params=params,
        importances_raw=doc.get("importances_raw"),
    )


def save_model(model: TrainedModel, path) -> None:
    with open(str(path), "w") as fh:
        json.dump(model_to_dict(model), fh)


def load_model(path) -> TrainedModel:
    with open(str(path)) as fh:
        return model_from_dict(json.load(fh))
