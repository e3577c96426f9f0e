"""Gaussian-process regression primitives.

Isotropic squared-exponential kernel with log-parameterized hyperparameters,
gram construction with an escalating jitter policy, and numerically stable
conditioning through Cholesky factors. Used standalone for unimodal-GP
baselines and per component inside the mixture policy.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular
from scipy.spatial.distance import cdist

from .errors import InputError, NumericalError

# Relative-to-mean-diagonal jitter escalation bounds.
JITTER_REL_START = 1e-8
JITTER_REL_MAX = 1e-2


@dataclass(frozen=True)
class KernelParams:
    """Squared-exponential hyperparameters, stored in log space.

    k(x, y) = sf2 * exp(-||x - y||^2 / (2 * ell^2)) with
    sf2 = exp(log_signal_variance), ell = exp(log_lengthscale).
    """

    log_signal_variance: float
    log_lengthscale: float

    def __post_init__(self) -> None:
        if not (np.isfinite(self.log_signal_variance) and np.isfinite(self.log_lengthscale)):
            raise InputError("kernel hyperparameters must be finite in log space")

    @property
    def signal_variance(self) -> float:
        return float(np.exp(self.log_signal_variance))

    @property
    def lengthscale(self) -> float:
        return float(np.exp(self.log_lengthscale))

    @classmethod
    def from_values(cls, signal_variance: float, lengthscale: float) -> "KernelParams":
        if signal_variance <= 0 or lengthscale <= 0:
            raise InputError("signal variance and lengthscale must be positive")
        return cls(float(np.log(signal_variance)), float(np.log(lengthscale)))


def as_state_matrix(states) -> np.ndarray:
    """Coerce a list of state vectors (or an array) to a float (N, Q) matrix."""
    X = np.asarray(states, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise InputError(f"states must form an (N, Q) matrix, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise InputError("states contain non-finite entries")
    return X


def sq_distances(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """Pairwise squared Euclidean distances, clipped at zero."""
    d2 = cdist(X, Y, metric="sqeuclidean")
    return np.maximum(d2, 0.0)


def kernel_matrix(X: np.ndarray, Y: np.ndarray, params: KernelParams) -> np.ndarray:
    sf2 = params.signal_variance
    ell = params.lengthscale
    return sf2 * np.exp(-0.5 * sq_distances(X, Y) / (ell * ell))


def kernel_eval(x, y, params: KernelParams) -> float:
    """Evaluate the kernel for a single pair of state vectors."""
    xv = np.asarray(x, dtype=float).ravel()
    yv = np.asarray(y, dtype=float).ravel()
    if xv.shape != yv.shape:
        raise InputError(f"state dimensions differ: {xv.shape} vs {yv.shape}")
    d2 = float(np.sum((xv - yv) ** 2))
    return params.signal_variance * float(np.exp(-0.5 * d2 / params.lengthscale**2))


@dataclass
class GramMatrix:
    """Kernel gram matrix with the jitter that made its Cholesky succeed."""

    entries: np.ndarray
    jitter: float
    chol_lower: np.ndarray

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    @property
    def log_det(self) -> float:
        return 2.0 * float(np.sum(np.log(np.diag(self.chol_lower))))

    def solve(self, b: np.ndarray) -> np.ndarray:
        """entries^{-1} b via the cached factor."""
        y = solve_triangular(self.chol_lower, b, lower=True)
        return solve_triangular(self.chol_lower.T, y, lower=False)


def build_gram(states, params: KernelParams, jitter: float | None = None) -> GramMatrix:
    """Build k(S, S) + jitter*I and factor it, escalating jitter on failure.

    jitter=None starts at JITTER_REL_START * mean(diag) (the default policy);
    escalation multiplies by 10 up to JITTER_REL_MAX * mean(diag), beyond
    which a NumericalError carries the final jitter tried.
    """
    X = as_state_matrix(states)
    if X.shape[0] < 1:
        raise InputError("need at least one state")
    if jitter is not None and jitter < 0:
        raise InputError("jitter must be non-negative")
    K0 = kernel_matrix(X, X, params)
    mean_diag = float(np.mean(np.diag(K0)))
    jit = JITTER_REL_START * mean_diag if jitter is None else float(jitter)
    while True:
        K = K0 if jit == 0.0 else K0 + jit * np.eye(K0.shape[0])
        try:
            L = np.linalg.cholesky(K)
            return GramMatrix(entries=K, jitter=jit, chol_lower=L)
        except np.linalg.LinAlgError:
            nxt = JITTER_REL_START * mean_diag if jit == 0.0 else 10.0 * jit
            if nxt > JITTER_REL_MAX * mean_diag:
                raise NumericalError(
                    f"gram matrix not positive definite; final jitter tried {jit:.3e}"
                ) from None
            jit = nxt


@dataclass
class GaussianPosterior:
    """GP posterior over f at the training inputs, plus the solve state
    needed for predictions.

    mu and cov are the posterior moments (K^-1 + B)^-1 B a and (K^-1 + B)^-1
    with B = diag(1 / noise), K the jittered gram; chol_lower factors
    K + diag(noise).
    """

    states: np.ndarray
    params: KernelParams
    noise_diag: np.ndarray
    gram: GramMatrix
    mu: np.ndarray
    cov: np.ndarray
    alpha: np.ndarray
    chol_lower: np.ndarray
    _prior_var: float = field(init=False)

    def __post_init__(self) -> None:
        self._prior_var = self.params.signal_variance


def gp_posterior(
    states, actions_1d, params: KernelParams, noise_diag, jitter: float | None = None
) -> GaussianPosterior:
    """Condition a zero-mean GP on 1-D actions with per-point noise variances."""
    X = as_state_matrix(states)
    a = np.asarray(actions_1d, dtype=float).ravel()
    noise = np.asarray(noise_diag, dtype=float).ravel()
    n = X.shape[0]
    if a.shape[0] != n or noise.shape[0] != n:
        raise InputError("states, actions and noise_diag must have matching length")
    if np.any(noise <= 0) or not np.all(np.isfinite(noise)):
        raise InputError("noise variances must be positive and finite")
    gram = build_gram(X, params, jitter=jitter)
    K = gram.entries
    try:
        L = np.linalg.cholesky(K + np.diag(noise))
    except np.linalg.LinAlgError as exc:  # noise > 0 makes this effectively unreachable
        raise NumericalError("Cholesky of K + diag(noise) failed") from exc
    alpha = solve_triangular(L.T, solve_triangular(L, a, lower=True), lower=False)
    T = solve_triangular(L, K, lower=True)
    mu = K @ alpha
    cov = K - T.T @ T
    return GaussianPosterior(
        states=X,
        params=params,
        noise_diag=noise,
        gram=gram,
        mu=mu,
        cov=cov,
        alpha=alpha,
        chol_lower=L,
    )


def gp_predict(posterior: GaussianPosterior, query) -> tuple[float, float]:
    """Predictive mean and variance at a single query state."""
    mean, var = gp_predict_batch(posterior, np.atleast_2d(np.asarray(query, dtype=float)))
    return float(mean[0]), float(var[0])


def gp_predict_batch(posterior: GaussianPosterior, queries) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized predictive means and variances at (M, Q) query states."""
    Q = as_state_matrix(queries)
    if Q.shape[1] != posterior.states.shape[1]:
        raise InputError(
            f"query dimension {Q.shape[1]} != training dimension {posterior.states.shape[1]}"
        )
    Ks = kernel_matrix(posterior.states, Q, posterior.params)
    mean = Ks.T @ posterior.alpha
    V = solve_triangular(posterior.chol_lower, Ks, lower=True)
    var = posterior._prior_var - np.einsum("ij,ij->j", V, V)
    bad = var < -1e-10
    if np.any(bad):
        warnings.warn(
            f"predictive variance clamped from min {var.min():.3e}", RuntimeWarning, stacklevel=2
        )
    return mean, np.maximum(var, 0.0)
