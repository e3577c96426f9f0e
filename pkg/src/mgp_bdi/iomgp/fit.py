"""Variational EM driver: alternate E-step sweeps to convergence, then the
M-step, until the outer bound stalls."""

from __future__ import annotations

import logging

import numpy as np

from ..data import RoundSegmentedDataset
from .hyper import optimize_hyperparams
from .inference import elbo, update_f, update_v, update_z
from .model import FitConfig, IomgpModel, init_model

log = logging.getLogger(__name__)


def _e_stage(model: IomgpModel) -> tuple[float, bool]:
    """Sweeps of (q(f) for all components, q(Z), q(v)) until the bound moves
    less than tol_e in relative terms. Appends one trace entry per sweep."""
    cfg = model.cfg
    prev = None
    value = None
    settled = False
    for _ in range(cfg.max_e_sweeps):
        for m in range(model.m_max):
            update_f(model, m)
        update_z(model)
        update_v(model)
        value = elbo(model)
        model.elbo_trace.append(value)
        if prev is not None and abs(value - prev) < cfg.tol_e * max(abs(value), 1e-12):
            settled = True
            break
        prev = value
    return float(value), settled


def fit(
    data: RoundSegmentedDataset,
    cfg: FitConfig,
    noise_schedule: list[float] | None = None,
    seed: int | None = None,
    warm_resp=None,
) -> IomgpModel:
    """Fit the mixture policy by variational EM.

    warm_resp (responsibilities of a data prefix, e.g. from the previous
    collection round's fit) seeds the assignment structure instead of a fresh
    random init. Returns the model with component posteriors refreshed
    against the final responsibilities, so predictions are a pure function of
    the stored state.
    """
    model = init_model(data, cfg, noise_schedule=noise_schedule, seed=seed, warm_resp=warm_resp)
    do_m_step = (
        cfg.optimize_kernels
        or (cfg.optimize_noise_last and cfg.noise_mode == "last_round")
        or cfg.noise_mode == "homoscedastic"
    )
    prev_outer = None
    model.converged = False
    for outer in range(cfg.max_outer):
        model.n_outer = outer + 1
        value, e_settled = _e_stage(model)
        if do_m_step:
            optimize_hyperparams(model)
            value = elbo(model)
            model.elbo_trace.append(value)
        if prev_outer is not None and abs(value - prev_outer) < cfg.tol_em * max(
            abs(value), 1e-12
        ):
            model.converged = True
            break
        prev_outer = value
        if not do_m_step:
            # pure E fit: one stage, its own tolerance decides convergence
            model.converged = e_settled
            break
    if not model.converged:
        log.warning(
            "EM stopped at max_outer=%d without meeting tol_em=%.1e (last elbo %.6g)",
            cfg.max_outer,
            cfg.tol_em,
            model.elbo_trace[-1] if model.elbo_trace else np.nan,
        )
    # final q(f) refresh: cached predictive state must match the stored factors
    for m in range(model.m_max):
        update_f(model, m)
    return model
