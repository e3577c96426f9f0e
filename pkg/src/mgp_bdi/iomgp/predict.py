"""Multi-modal predictive distribution and runtime mode-selection policies."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from ..errors import InputError
from ..gp import kernel_matrix
from .model import IomgpModel


def mixture_weights(model: IomgpModel) -> np.ndarray:
    """Expected stick-breaking weights E[v_m] prod_{j<m} (1 - E[v_j]),
    renormalized over the truncation level."""
    ev = model.stick.expected_v()
    keep = np.concatenate([[1.0], np.cumprod(1.0 - ev[:-1])])
    w = ev * keep
    total = w.sum()
    if total <= 0:
        raise InputError("degenerate stick posterior: zero total weight")
    return w / total


@dataclass(frozen=True)
class Mode:
    weight: float
    mean: np.ndarray  # (D,)
    variance: np.ndarray  # (D,)


def predict_modes(model: IomgpModel, query, with_variance: bool = True) -> list[Mode]:
    """All M predictive modes at a query state: normalized weights, and
    per-dimension GP predictive means/variances under each component's
    responsibility-weighted noise. with_variance=False skips the variance
    solves (action selection only needs means and weights)."""
    comps = model.require_components()
    q = np.asarray(query, dtype=float).reshape(1, -1)
    if q.shape[1] != model.data.q:
        raise InputError(f"query dimension {q.shape[1]} != state dimension {model.data.q}")
    weights = mixture_weights(model)
    modes = []
    for m, comp in enumerate(comps):
        k_star = kernel_matrix(model.data.states, q, comp.params)[:, 0]
        mean = comp.beta @ k_star  # (D,)
        if with_variance:
            v = solve_triangular(comp.chol_a, comp.w * k_star, lower=True, check_finite=False)
            var = max(comp.params.signal_variance - float(v @ v), 0.0)
        else:
            var = np.nan
        modes.append(Mode(weight=float(weights[m]), mean=mean, variance=np.full(model.d, var)))
    return modes


class ModeSelector:
    """Base for runtime mode-selection rules; ties break to the lower index."""

    def pick(self, modes: list[Mode]) -> int:
        raise NotImplementedError


@dataclass
class committed(ModeSelector):
    """Execute a mode fixed at episode start."""

    mode: int

    def pick(self, modes: list[Mode]) -> int:
        if not 0 <= self.mode < len(modes):
            raise InputError(f"mode index {self.mode} out of range for M={len(modes)}")
        return self.mode


class max_weight(ModeSelector):
    def pick(self, modes: list[Mode]) -> int:
        weights = np.array([m.weight for m in modes])
        return int(np.argmax(weights))  # argmax takes the first maximum


@dataclass
class nearest_prev(ModeSelector):
    """Mode whose mean is L2-closest to the previously executed action;
    falls back to max weight before any action has run."""

    prev_action: np.ndarray | None = None

    def pick(self, modes: list[Mode]) -> int:
        if self.prev_action is None:
            return max_weight().pick(modes)
        prev = np.asarray(self.prev_action, dtype=float)
        dists = np.array([np.linalg.norm(m.mean - prev) for m in modes])
        return int(np.argmin(dists))


def sample_mode(model: IomgpModel, rng: np.random.Generator) -> int:
    """Draw a component index from the mixture weights (for committed runs)."""
    w = mixture_weights(model)
    return int(rng.choice(len(w), p=w))


def select_action(model: IomgpModel, query, selector: ModeSelector) -> np.ndarray:
    modes = predict_modes(model, query, with_variance=False)
    return modes[selector.pick(modes)].mean
