"""Round-segmented demonstration datasets and their on-disk JSON schema."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InputError

DATASET_VERSION = 1


@dataclass
class RoundSegmentedDataset:
    """States and expert actions, segmented by the collection round that
    produced them.

    injected_sigma2[j] is the injection variance used while collecting round
    j; it is a collection-time fact stored with the data (the likelihood's
    heteroscedastic map lives in the model's noise schedule).
    """

    states: np.ndarray  # (N, Q)
    actions: np.ndarray  # (N, D)
    round_sizes: list[int]
    injected_sigma2: list[float]
    round_of: np.ndarray = field(init=False)  # (N,) 0-based round index per datum

    def __post_init__(self) -> None:
        self.states = np.asarray(self.states, dtype=float)
        self.actions = np.asarray(self.actions, dtype=float)
        if self.states.ndim != 2 or self.actions.ndim != 2:
            raise InputError("states and actions must be 2-D arrays")
        if self.states.shape[0] != self.actions.shape[0]:
            raise InputError("states and actions must have equal length")
        if self.states.shape[0] == 0:
            raise InputError("dataset is empty")
        if not (np.all(np.isfinite(self.states)) and np.all(np.isfinite(self.actions))):
            raise InputError("dataset contains non-finite entries")
        if len(self.round_sizes) != len(self.injected_sigma2):
            raise InputError("one injected sigma^2 per round is required")
        if any(sz < 1 for sz in self.round_sizes):
            raise InputError("round sizes must be >= 1")
        if int(np.sum(self.round_sizes)) != self.states.shape[0]:
            raise InputError("round sizes must sum to the dataset length")
        self.round_of = np.repeat(np.arange(len(self.round_sizes)), self.round_sizes)

    @property
    def n(self) -> int:
        return self.states.shape[0]

    @property
    def q(self) -> int:
        return self.states.shape[1]

    @property
    def d(self) -> int:
        return self.actions.shape[1]

    @property
    def n_rounds(self) -> int:
        return len(self.round_sizes)

    def appended(self, states, actions, sigma2: float) -> "RoundSegmentedDataset":
        """New dataset with one more round segment."""
        states = np.asarray(states, dtype=float)
        actions = np.asarray(actions, dtype=float)
        return RoundSegmentedDataset(
            states=np.vstack([self.states, states]),
            actions=np.vstack([self.actions, actions]),
            round_sizes=[*self.round_sizes, states.shape[0]],
            injected_sigma2=[*self.injected_sigma2, float(sigma2)],
        )


def hetero_noise_diag(round_sizes, variances) -> np.ndarray:
    """Expand per-round variances to the per-datum diagonal, constant within
    each round segment."""
    sizes = [int(s) for s in round_sizes]
    var = np.asarray(variances, dtype=float)
    if var.shape[0] != len(sizes):
        raise InputError("need one variance per round")
    if np.any(var <= 0) or not np.all(np.isfinite(var)):
        raise InputError("noise variances must be positive and finite")
    return np.repeat(var, sizes)


def dataset_to_doc(ds: RoundSegmentedDataset) -> dict:
    rounds = []
    start = 0
    for size, sig2 in zip(ds.round_sizes, ds.injected_sigma2):
        pairs = [
            {"s": ds.states[i].tolist(), "a": ds.actions[i].tolist()}
            for i in range(start, start + size)
        ]
        rounds.append({"sigma2": float(sig2), "pairs": pairs})
        start += size
    return {"version": DATASET_VERSION, "Q": ds.q, "D": ds.d, "rounds": rounds}


def dataset_from_doc(doc: dict) -> RoundSegmentedDataset:
    if doc.get("version") != DATASET_VERSION:
        raise InputError(f"unsupported dataset version {doc.get('version')!r}")
    states, actions, sizes, sig2s = [], [], [], []
    for rnd in doc["rounds"]:
        pairs = rnd["pairs"]
        if not pairs:
            raise InputError("dataset round with no pairs")
        sizes.append(len(pairs))
        sig2s.append(float(rnd["sigma2"]))
        for pair in pairs:
            states.append(pair["s"])
            actions.append(pair["a"])
    ds = RoundSegmentedDataset(
        states=np.asarray(states, dtype=float),
        actions=np.asarray(actions, dtype=float),
        round_sizes=sizes,
        injected_sigma2=sig2s,
    )
    if ds.q != doc["Q"] or ds.d != doc["D"]:
        raise InputError("dataset Q/D header does not match pair shapes")
    return ds


def dump_json(doc: dict, path: str | Path) -> None:
    """Deterministic JSON writer: stable key order, repr-exact doubles."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_json(path: str | Path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def save_dataset(ds: RoundSegmentedDataset, path: str | Path) -> None:
    dump_json(dataset_to_doc(ds), path)


def load_dataset(path: str | Path) -> RoundSegmentedDataset:
    return dataset_from_doc(load_json(path))
