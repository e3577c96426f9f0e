"""Model state for the mixture policy: variational factors, hyperparameters,
and the cached per-component solve state."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import pdist

from ..data import RoundSegmentedDataset, hetero_noise_diag
from ..errors import InputError
from ..gp import GramMatrix, KernelParams, build_gram, sq_distances
from ..rng import derive_rng


@dataclass
class FitConfig:
    """Knobs for variational EM. Defaults are the desk-scale settings."""

    m_max: int = 5
    concentration: float = 1.0
    floor: float = 1e-6
    sigma2_init: float = 1e-4
    sigma2_min: float = 1e-8
    tol_e: float = 1e-6
    tol_em: float = 1e-5
    max_e_sweeps: int = 200
    max_outer: int = 50
    kernel_opt_iters: int = 100
    kernel_opt_tol: float = 1e-6
    optimize_kernels: bool = True
    optimize_noise_last: bool = False
    noise_mode: str = "last_round"  # "last_round" | "homoscedastic" | "fixed"
    fit_restarts: int = 1
    seed: int = 0

    def __post_init__(self) -> None:
        if self.m_max < 1:
            raise InputError("m_max must be >= 1")
        if self.concentration <= 0:
            raise InputError("concentration must be positive")
        if not (0 < self.floor < 1.0 / self.m_max):
            raise InputError("floor must lie in (0, 1/M)")
        if self.sigma2_init <= 0:
            raise InputError("sigma2_init must be positive")
        if self.noise_mode not in ("last_round", "homoscedastic", "fixed"):
            raise InputError("noise_mode must be last_round, homoscedastic or fixed")


@dataclass
class StickPosterior:
    """Beta posteriors q(v_m) = Beta(alpha[m], beta_post[m]) of the
    stick-breaking weights; `concentration` is the prior Beta(1, c) parameter."""

    alpha: np.ndarray
    beta_post: np.ndarray
    concentration: float

    def expected_v(self) -> np.ndarray:
        return self.alpha / (self.alpha + self.beta_post)


@dataclass
class Responsibilities:
    """Row-stochastic assignment posterior with entries in [floor, 1]."""

    r: np.ndarray
    floor: float

    def validate(self) -> None:
        if np.any(self.r < self.floor - 1e-15) or np.any(self.r > 1.0 + 1e-12):
            raise InputError("responsibilities outside [floor, 1]")
        if np.max(np.abs(self.r.sum(axis=1) - 1.0)) > 1e-10:
            raise InputError("responsibility rows must sum to 1")

    def mass(self) -> np.ndarray:
        return self.r.sum(axis=0)


@dataclass
class ComponentPosterior:
    """q(f) moments for one component and one action dimension. cov is shared
    across the action dimensions of a component (they share K and B)."""

    mu: np.ndarray
    cov: np.ndarray


@dataclass
class ComponentState:
    """Cached solve state from the latest q(f) update of one component.

    With W = sqrt(r_m / Sigma) and A = I + W K W:
      cov       = (K^-1 + B)^-1 = K - T^T T with T = L_A^-1 W K
      mu[d]     = cov B a_d = K @ beta[d]
      beta[d]   = W * (A^-1 (W a_d)) = (K + B^-1)^-1 a_d, reused for prediction
      tr_a_inv  = tr(K^-1 cov), log_det_a = log det K - log det cov

    The full cov is assembled lazily; sweeps only consume its diagonal.
    r_used remembers the responsibility column the state was built from so a
    bitwise-identical column skips the rebuild.
    """

    params: KernelParams
    gram: GramMatrix
    w: np.ndarray
    chol_a: np.ndarray
    mu: np.ndarray  # (D, N)
    t_factor: np.ndarray  # (N, N), L_A^-1 W K
    diag_cov: np.ndarray
    beta: np.ndarray  # (D, N)
    log_det_a: float
    tr_a_inv: float
    r_used: np.ndarray
    sigma_used: np.ndarray
    _cov: np.ndarray | None = None

    @property
    def cov(self) -> np.ndarray:
        if self._cov is None:
            self._cov = self.gram.entries - self.t_factor.T @ self.t_factor
        return self._cov

    def posterior(self, dim: int) -> ComponentPosterior:
        return ComponentPosterior(mu=self.mu[dim].copy(), cov=self.cov)


class IomgpModel:
    """Truncated infinite-mixture GP policy over a round-segmented dataset."""

    def __init__(
        self,
        data: RoundSegmentedDataset,
        cfg: FitConfig,
        noise_schedule: list[float],
        kernel_params: list[KernelParams],
        resp: Responsibilities,
        stick: StickPosterior,
    ) -> None:
        if len(noise_schedule) != data.n_rounds + 1:
            raise InputError("noise schedule must hold n_rounds + 1 variances")
        if any(v <= 0 for v in noise_schedule):
            raise InputError("noise schedule variances must be positive")
        if len(kernel_params) != cfg.m_max:
            raise InputError("one KernelParams per component required")
        self.data = data
        self.cfg = cfg
        self.noise_schedule = [float(v) for v in noise_schedule]
        self.kernel_params = list(kernel_params)
        self.resp = resp
        self.stick = stick
        self.components: list[ComponentState | None] = [None] * cfg.m_max
        self.elbo_trace: list[float] = []
        self.converged = False
        self.n_outer = 0
        self._sq_dists: np.ndarray | None = None

    @property
    def m_max(self) -> int:
        return self.cfg.m_max

    @property
    def n(self) -> int:
        return self.data.n

    @property
    def d(self) -> int:
        return self.data.d

    def sigma_per_datum(self) -> np.ndarray:
        """Heteroscedastic likelihood variances: segment j maps to the
        schedule entry estimated from round j (injected into round j+1)."""
        return hetero_noise_diag(self.data.round_sizes, self.noise_schedule[1:])

    def last_segment_slice(self) -> slice:
        start = self.n - self.data.round_sizes[-1]
        return slice(start, self.n)

    def sq_dists(self) -> np.ndarray:
        if self._sq_dists is None:
            self._sq_dists = sq_distances(self.data.states, self.data.states)
        return self._sq_dists

    def gram(self, m: int) -> GramMatrix:
        comp = self.components[m]
        if comp is not None and comp.params == self.kernel_params[m]:
            return comp.gram
        return build_gram(self.data.states, self.kernel_params[m])

    def require_components(self) -> list[ComponentState]:
        comps = []
        for m, comp in enumerate(self.components):
            if comp is None or comp.params != self.kernel_params[m]:
                raise InputError(
                    f"component {m} posterior is stale; run update_f before reading it"
                )
            comps.append(comp)
        return comps


def _initial_kernel_params(data: RoundSegmentedDataset, seed: int) -> KernelParams:
    sf2 = max(float(np.var(data.actions)), 1e-8)
    X = data.states
    if X.shape[0] > 600:
        idx = np.unique(np.linspace(0, X.shape[0] - 1, 600).astype(int))
        X = X[idx]
    dists = pdist(X)
    positive = dists[dists > 0]
    ell = float(np.median(positive)) if positive.size else 1.0
    ell = max(ell, 1e-6)
    return KernelParams.from_values(sf2, ell)


def init_model(
    data: RoundSegmentedDataset,
    cfg: FitConfig,
    noise_schedule: list[float] | None = None,
    seed: int | None = None,
    warm_resp: np.ndarray | None = None,
) -> IomgpModel:
    """Seeded initialization: responsibilities at a random row-stochastic
    perturbation of uniform (each entry 1/M +- up to 10%), stick posterior at
    its prior, kernel scales from data statistics, noise schedule from config
    sigma2_init unless given.

    warm_resp carries responsibilities for a prefix of the data (a previous
    round's fit); remaining rows get the randomized uniform init.
    """
    if data.n == 0:
        raise InputError("dataset is empty")
    M = cfg.m_max
    rng = derive_rng(cfg.seed if seed is None else seed, "init-model")
    u = rng.uniform(-1.0, 1.0, size=(data.n, M))
    r = (1.0 / M) * (1.0 + 0.1 * u)
    r /= r.sum(axis=1, keepdims=True)
    if warm_resp is not None:
        warm = np.asarray(warm_resp, dtype=float)
        if warm.ndim != 2 or warm.shape[1] != M or warm.shape[0] > data.n:
            raise InputError("warm responsibilities must be a (N0 <= N, M) matrix")
        r[: warm.shape[0]] = warm
    resp = Responsibilities(r=r, floor=cfg.floor)
    resp.validate()
    stick = StickPosterior(
        alpha=np.ones(M),
        beta_post=np.full(M, cfg.concentration),
        concentration=cfg.concentration,
    )
    params = _initial_kernel_params(data, cfg.seed)
    schedule = (
        [cfg.sigma2_init] * (data.n_rounds + 1)
        if noise_schedule is None
        else [float(v) for v in noise_schedule]
    )
    return IomgpModel(
        data=data,
        cfg=cfg,
        noise_schedule=schedule,
        kernel_params=[params] * M,
        resp=resp,
        stick=stick,
    )
