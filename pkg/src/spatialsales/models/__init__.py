"""From-scratch learners behind one interface: GLM, random forest,
gradient tree boosting, and a feed-forward neural network."""

from .boosting import GBMConfig, fit_gbm
from .common import (
    CLASSIFICATION,
    REGRESSION,
    TASKS,
    ManifestMismatch,
    ModelFitError,
    TrainedModel,
    derive_seed,
    predict,
)
from .forest import RFConfig, fit_random_forest
from .importance import ImportanceResult, variable_importance
from .linear import GLMConfig, coefficients, fit_glm
from .network import ANNConfig, fit_ann, loss_and_grad
from .serialize import load_model, model_from_dict, model_to_dict, save_model
from .tree import RegressionTree, fit_regression_tree

FITTERS = {
    "glm": (fit_glm, GLMConfig),
    "rf": (fit_random_forest, RFConfig),
    "gbm": (fit_gbm, GBMConfig),
    "ann": (fit_ann, ANNConfig),
}

LEARNERS = tuple(FITTERS)


def fit(kind: str, X, y, columns, config, task: str, seed: int = 0) -> TrainedModel:
    """Fit one learner by name with its config object."""
    if kind not in FITTERS:
        raise ValueError(f"unknown learner {kind!r}; expected one of {LEARNERS}")
    fitter, _ = FITTERS[kind]
    return fitter(X, y, columns, config, task, seed)
