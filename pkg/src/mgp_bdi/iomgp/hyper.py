"""M-step: kernel hyperparameter ascent on the per-component collapsed
evidence, and the closed-form update of the newest round's injection noise."""

from __future__ import annotations

import warnings

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from ..errors import InputError, NumericalError
from ..gp import KernelParams
from .inference import LOG_2PI, update_f
from .model import IomgpModel

THETA_CLIP = 25.0  # |log sf2|, |log ell| bound keeps exp() finite


def _chol_with_bump(V: np.ndarray) -> np.ndarray:
    bump = 0.0
    mean_diag = float(np.mean(np.diag(V)))
    for _ in range(4):
        try:
            return np.linalg.cholesky(V if bump == 0.0 else V + bump * np.eye(V.shape[0]))
        except np.linalg.LinAlgError:
            bump = 1e-10 * mean_diag if bump == 0.0 else bump * 100.0
    raise NumericalError("evidence matrix K + B^-1 not positive definite")


def component_evidence(
    theta: np.ndarray,
    sq_dists: np.ndarray,
    b_inv_diag: np.ndarray,
    actions: np.ndarray,
    with_grad: bool = True,
) -> tuple[float, np.ndarray | None]:
    """Value (and gradient) of sum_d log N(a_d | 0, K(theta) + diag(b_inv)).

    theta = (log signal variance, log lengthscale). Gradients use the standard
    trace identities d/dtheta = 0.5 (alpha^T dK alpha - tr(V^-1 dK)) per
    action dimension, with dK/dlog sf2 = K and dK/dlog ell = K * d^2 / ell^2.
    """
    n, d = actions.shape
    sf2 = float(np.exp(theta[0]))
    ell2 = float(np.exp(2.0 * theta[1]))
    K = sf2 * np.exp(-0.5 * sq_dists / ell2)
    V = K + np.diag(b_inv_diag)
    L = _chol_with_bump(V)
    log_det = 2.0 * float(np.sum(np.log(np.diag(L))))
    alphas = cho_solve((L, True), actions)  # (N, D)
    quad = float(np.einsum("nd,nd->", actions, alphas))
    value = -0.5 * (d * (n * LOG_2PI + log_det) + quad)
    if not np.isfinite(value):
        raise NumericalError("non-finite evidence value")
    if not with_grad:
        return value, None
    V_inv = cho_solve((L, True), np.eye(n))
    dK_ell = K * (sq_dists / ell2)
    g_sf2 = 0.5 * (
        float(np.einsum("nd,nm,md->", alphas, K, alphas)) - d * float(np.sum(V_inv * K))
    )
    g_ell = 0.5 * (
        float(np.einsum("nd,nm,md->", alphas, dK_ell, alphas)) - d * float(np.sum(V_inv * dK_ell))
    )
    grad = np.array([g_sf2, g_ell])
    if not np.all(np.isfinite(grad)):
        raise NumericalError("non-finite evidence gradient")
    return value, grad


def optimize_kernel_params(
    params0: KernelParams,
    sq_dists: np.ndarray,
    b_inv_diag: np.ndarray,
    actions: np.ndarray,
    max_iters: int = 100,
    tol: float = 1e-6,
) -> tuple[KernelParams, dict]:
    """Backtracking gradient ascent on the collapsed evidence.

    Stops when |delta value| < tol * |value| or the iteration budget runs out;
    a failed line search keeps the previous parameters and warns.
    """
    theta = np.clip(
        np.array([params0.log_signal_variance, params0.log_lengthscale]), -THETA_CLIP, THETA_CLIP
    )
    value, grad = component_evidence(theta, sq_dists, b_inv_diag, actions)
    step = 0.1
    info = {"iters": 0, "converged": False, "line_search_failed": False}
    for it in range(max_iters):
        info["iters"] = it + 1
        if np.max(np.abs(grad)) < 1e-10:
            info["converged"] = True
            break
        accepted = False
        while step >= 1e-12:
            theta_try = np.clip(theta + step * grad, -THETA_CLIP, THETA_CLIP)
            try:
                val_try, _ = component_evidence(
                    theta_try, sq_dists, b_inv_diag, actions, with_grad=False
                )
            except NumericalError:
                val_try = -np.inf
            if val_try > value:
                accepted = True
                break
            step *= 0.25
        if not accepted:
            warnings.warn(
                "kernel evidence line search failed; keeping previous hyperparameters",
                RuntimeWarning,
                stacklevel=2,
            )
            info["line_search_failed"] = True
            break
        improved = val_try - value
        theta = theta_try
        value, grad = component_evidence(theta, sq_dists, b_inv_diag, actions)
        step = min(step * 2.0, 1.0)
        if improved < tol * max(abs(value), 1e-12):
            info["converged"] = True
            break
    return KernelParams(float(theta[0]), float(theta[1])), info


def _expected_sq_residual(model: IomgpModel, sl: slice) -> float:
    """Responsibility-weighted expected squared residual over a data slice,
    averaged over its data and the action dimensions."""
    comps = model.require_components()
    actions = model.data.actions[sl]
    n_k, d = actions.shape
    acc = 0.0
    for m, comp in enumerate(comps):
        resid = (actions - comp.mu.T[sl]) ** 2
        acc += float(
            np.sum(model.resp.r[sl, m] * (resid.sum(axis=1) + d * comp.diag_cov[sl]))
        )
    return acc / (d * n_k)


def noise_last_update(model: IomgpModel) -> float:
    """Closed-form maximizer of the bound over the newest round's variance,
    clamped at sigma2_min."""
    return max(_expected_sq_residual(model, model.last_segment_slice()),
               model.cfg.sigma2_min)


def noise_homoscedastic_update(model: IomgpModel) -> float:
    """Single shared observation variance (standard GP-style noise learning,
    used by the BC baselines): the same maximizer over the whole dataset."""
    return max(_expected_sq_residual(model, slice(0, model.n)), model.cfg.sigma2_min)


def optimize_hyperparams(model: IomgpModel, which: set[str] | None = None) -> IomgpModel:
    """Run the requested M-step pieces and refresh the component posteriors.

    which defaults to what the fit config enables. "concentration" is accepted
    but held fixed (config value; no update law).
    """
    if which is None:
        which = set()
        if model.cfg.noise_mode == "homoscedastic":
            which.add("noise_all")
        elif model.cfg.optimize_noise_last and model.cfg.noise_mode == "last_round":
            which.add("noise_last")
        if model.cfg.optimize_kernels:
            which.add("kernels")
    unknown = which - {"kernels", "noise_last", "noise_all", "concentration"}
    if unknown:
        raise InputError(f"unknown hyperparameter group(s): {sorted(unknown)}")
    if "noise_all" in which:
        value = noise_homoscedastic_update(model)
        model.noise_schedule = [value] * len(model.noise_schedule)
    elif "noise_last" in which:
        model.noise_schedule[-1] = noise_last_update(model)
    if "kernels" in which:
        sigma = model.sigma_per_datum()
        sq = model.sq_dists()
        for m in range(model.m_max):
            b_inv = sigma / model.resp.r[:, m]
            params, _ = optimize_kernel_params(
                model.kernel_params[m],
                sq,
                b_inv,
                model.data.actions,
                max_iters=model.cfg.kernel_opt_iters,
                tol=model.cfg.kernel_opt_tol,
            )
            model.kernel_params[m] = params
    for m in range(model.m_max):
        update_f(model, m)
    return model
