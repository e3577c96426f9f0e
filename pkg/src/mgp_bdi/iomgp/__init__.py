"""Infinite-overlapping-mixture GP policy learned by variational Bayesian EM."""

from .model import (
    ComponentPosterior,
    FitConfig,
    IomgpModel,
    Responsibilities,
    StickPosterior,
    init_model,
)
from .inference import elbo, expected_log_pi, floor_project, update_f, update_v, update_z
from .hyper import component_evidence, noise_last_update, optimize_hyperparams
from .fit import fit
from .predict import ModeSelector, committed, max_weight, mixture_weights, nearest_prev, predict_modes, select_action
from .serialize import load_model, model_from_doc, model_to_doc, save_model

__all__ = [
    "ComponentPosterior",
    "FitConfig",
    "IomgpModel",
    "Responsibilities",
    "StickPosterior",
    "init_model",
    "update_f",
    "update_z",
    "update_v",
    "elbo",
    "expected_log_pi",
    "floor_project",
    "component_evidence",
    "noise_last_update",
    "optimize_hyperparams",
    "fit",
    "predict_modes",
    "select_action",
    "mixture_weights",
    "ModeSelector",
    "committed",
    "max_weight",
    "nearest_prev",
    "model_to_doc",
    "model_from_doc",
    "save_model",
    "load_model",
]
