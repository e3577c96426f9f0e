"""Variational E-step updates and the evidence lower bound.

All three updates are exact coordinate-ascent steps of the mean-field bound,
so the bound is non-decreasing under any single update; `elbo` evaluates that
bound at the stored factors.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import betaln, digamma

from ..errors import InputError, NumericalError
from .model import ComponentState, IomgpModel, Responsibilities, StickPosterior

LOG_2PI = float(np.log(2.0 * np.pi))


def expected_log_pi(stick: StickPosterior) -> np.ndarray:
    """E_q[log pi_m] for the stick-breaking weights:
    psi(a_m) - psi(a_m+b_m) + sum_{j<m} [psi(b_j) - psi(a_j+b_j)]."""
    a, b = stick.alpha, stick.beta_post
    own = digamma(a) - digamma(a + b)
    broken = digamma(b) - digamma(a + b)
    prefix = np.concatenate([[0.0], np.cumsum(broken[:-1])])
    return own + prefix


def beta_kl(a: np.ndarray, b: np.ndarray, a0: float, b0: float) -> np.ndarray:
    """KL(Beta(a, b) || Beta(a0, b0)), elementwise."""
    return (
        betaln(a0, b0)
        - betaln(a, b)
        + (a - a0) * digamma(a)
        + (b - b0) * digamma(b)
        - (a + b - a0 - b0) * digamma(a + b)
    )


def update_f(model: IomgpModel, m: int) -> ComponentState:
    """Refresh q(f^(m)) for every action dimension of component m:
    cov = (K^-1 + B)^-1, mu_d = cov B a_d, B = diag(r_m / Sigma).

    A bitwise-unchanged (r_m, Sigma, kernel params) triple returns the cached
    state: floored-out components stay exactly at the floor between sweeps.
    """
    if not 0 <= m < model.m_max:
        raise InputError(f"component index {m} out of range")
    sigma = model.sigma_per_datum()
    r_m = model.resp.r[:, m]
    cached = model.components[m]
    if (
        cached is not None
        and cached.params == model.kernel_params[m]
        and cached.r_used.shape == r_m.shape
        and np.array_equal(cached.r_used, r_m)
        and np.array_equal(cached.sigma_used, sigma)
    ):
        return cached
    w = np.sqrt(r_m / sigma)
    gram = model.gram(m)
    K = gram.entries
    n = K.shape[0]
    S = w[:, None] * K  # W K
    A = np.eye(n) + S * w[None, :]
    try:
        chol_a = np.linalg.cholesky(A)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"I + WKW not positive definite for component {m}") from exc
    inv_la = solve_triangular(chol_a, np.eye(n), lower=True, check_finite=False)
    T = inv_la @ S  # L_A^-1 W K
    diag_cov = np.maximum(np.diag(K) - np.einsum("ij,ij->j", T, T), 0.0)
    wa = w[None, :] * model.data.actions.T  # (D, N)
    half = solve_triangular(chol_a, wa.T, lower=True, check_finite=False)
    beta = w[None, :] * solve_triangular(
        chol_a.T, half, lower=False, check_finite=False
    ).T  # (K + B^-1)^-1 a_d per dim
    mu = beta @ K
    comp = ComponentState(
        params=model.kernel_params[m],
        gram=gram,
        w=w,
        chol_a=chol_a,
        mu=mu,
        t_factor=T,
        diag_cov=diag_cov,
        beta=beta,
        log_det_a=2.0 * float(np.sum(np.log(np.diag(chol_a)))),
        tr_a_inv=float(np.sum(inv_la * inv_la)),
        r_used=r_m.copy(),
        sigma_used=sigma,
    )
    model.components[m] = comp
    return comp


def floor_project(p: np.ndarray, floor: float) -> np.ndarray:
    """Project row-stochastic weights onto {r >= floor, sum_m r = 1}.

    Water-filling: scale the unclipped entries proportionally, clip violators
    to the floor, repeat. Exact KKT solution, so the projected rows remain the
    argmax of the per-row assignment objective over the floored simplex.
    """
    n, m = p.shape
    if m * floor >= 1.0:
        raise InputError("floor too large for the truncation level")
    free = np.ones_like(p, dtype=bool)
    for _ in range(m):
        denom = np.where(free, p, 0.0).sum(axis=1)
        budget = 1.0 - floor * (~free).sum(axis=1)
        c = budget / np.maximum(denom, np.finfo(float).tiny)
        scaled = p * c[:, None]
        viol = free & (scaled < floor)
        if not viol.any():
            return np.where(free, scaled, floor)
        free &= ~viol
    # every entry clipped is impossible while m * floor < 1
    raise NumericalError("floor projection failed to converge")


def update_z(model: IomgpModel) -> Responsibilities:
    """Responsibility update in log space. The data term per dimension is
    -0.5 log(2 pi Sigma_nn) - ((a_n - mu_n)^2 + C_nn) / (2 Sigma_nn), summed
    over action dimensions, plus the stick expectation terms; rows are
    normalized by log-sum-exp and floored by exact projection."""
    comps = model.require_components()
    sigma = model.sigma_per_datum()
    actions = model.data.actions  # (N, D)
    elp = expected_log_pi(model.stick)
    log_rho = np.empty((model.n, model.m_max))
    base = -0.5 * model.d * (LOG_2PI + np.log(sigma))
    for m, comp in enumerate(comps):
        sq = ((actions - comp.mu.T) ** 2).sum(axis=1) + model.d * comp.diag_cov
        log_rho[:, m] = base - 0.5 * sq / sigma + elp[m]
    log_rho -= log_rho.max(axis=1, keepdims=True)
    rho = np.exp(log_rho)
    p = rho / rho.sum(axis=1, keepdims=True)
    r = floor_project(p, model.resp.floor)
    resp = Responsibilities(r=r, floor=model.resp.floor)
    model.resp = resp
    return resp


def update_v(model: IomgpModel) -> StickPosterior:
    """Conjugate stick update: alpha_m = 1 + sum_n r_nm,
    beta_m = concentration + sum_{j>m} sum_n r_nj (truncated at M)."""
    mass = model.resp.r.sum(axis=0)
    tail = np.concatenate([np.cumsum(mass[::-1])[::-1][1:], [0.0]])
    stick = StickPosterior(
        alpha=1.0 + mass,
        beta_post=model.stick.concentration + tail,
        concentration=model.stick.concentration,
    )
    model.stick = stick
    return stick


def elbo(model: IomgpModel) -> float:
    """Mean-field lower bound at the stored factors.

    Per component and dimension: responsibility-weighted expected Gaussian
    log-likelihood minus KL(q(f) || GP prior); plus the assignment
    cross-entropy/entropy terms and minus KL(q(v) || Beta(1, concentration)).
    Right after q(f) updates this equals the collapsed form
    sum_m log N(a | 0, K^(m) + B^(m)^-1) + assignment and stick terms.
    """
    comps = model.require_components()
    sigma = model.sigma_per_datum()
    actions = model.data.actions
    r = model.resp.r
    n, d = model.n, model.d
    total = 0.0
    for m, comp in enumerate(comps):
        resid = (actions - comp.mu.T) ** 2  # (N, D)
        quad = resid.sum(axis=1) + d * comp.diag_cov
        total += float(
            np.sum(r[:, m] * (-0.5 * d * (LOG_2PI + np.log(sigma)) - 0.5 * quad / sigma))
        )
        # KL(q(f)||p(f)) per dimension; cov is shared across dimensions.
        mu_quad = 0.0
        for dim in range(d):
            v = solve_triangular(comp.gram.chol_lower, comp.mu[dim], lower=True)
            mu_quad += float(v @ v)
        kl_f = 0.5 * (d * (comp.tr_a_inv - n + comp.log_det_a) + mu_quad)
        total -= kl_f
    elp = expected_log_pi(model.stick)
    total += float(np.sum(r * (elp[None, :] - np.log(r))))
    total -= float(
        np.sum(beta_kl(model.stick.alpha, model.stick.beta_post, 1.0, model.stick.concentration))
    )
    if not np.isfinite(total):
        raise NumericalError("non-finite evidence lower bound")
    return total


def component_evidence_value(model: IomgpModel, m: int) -> float:
    """Collapsed per-component evidence sum_d log N(a_d | 0, K^(m) + B^(m)^-1)
    with B^(m) = diag(r_m / Sigma), from the cached factorization."""
    comp = model.require_components()[m]
    sigma = model.sigma_per_datum()
    r_m = model.resp.r[:, m]
    n, d = model.n, model.d
    log_det = comp.log_det_a - float(np.sum(np.log(r_m / sigma)))
    wa = comp.w[None, :] * model.data.actions.T  # (D, N)
    quad = 0.0
    for dim in range(d):
        v = solve_triangular(comp.chol_a, wa[dim], lower=True)
        quad += float(v @ v)
    return -0.5 * (d * (n * LOG_2PI + log_det) + quad)
