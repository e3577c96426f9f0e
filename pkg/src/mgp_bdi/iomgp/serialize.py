"""Model snapshots: a single JSON document that reconstructs the fitted
policy exactly (posteriors are recomputed from the stored factors)."""

from __future__ import annotations

from dataclasses import asdict
from pathlib import Path

import numpy as np

from ..data import (
    RoundSegmentedDataset,
    dataset_from_doc,
    dataset_to_doc,
    dump_json,
    load_json,
)
from ..errors import InputError
from ..gp import KernelParams
from .inference import update_f
from .model import FitConfig, IomgpModel, Responsibilities, StickPosterior

MODEL_VERSION = 1


def model_to_doc(
    model: IomgpModel, dataset_ref: str | None = None, inline_dataset: bool | None = None
) -> dict:
    """Serialize to the snapshot schema. The dataset is inlined unless a
    dataset_ref path is given."""
    if inline_dataset is None:
        inline_dataset = dataset_ref is None
    return {
        "version": MODEL_VERSION,
        "M": model.m_max,
        "Q": model.data.q,
        "D": model.data.d,
        "kernel_params": [
            {"log_signal_variance": p.log_signal_variance, "log_lengthscale": p.log_lengthscale}
            for p in model.kernel_params
        ],
        "noise_schedule": list(model.noise_schedule),
        "responsibilities": model.resp.r.tolist(),
        "stick": {
            "alpha": model.stick.alpha.tolist(),
            "beta": model.stick.beta_post.tolist(),
            "concentration": model.stick.concentration,
        },
        "dataset": dataset_to_doc(model.data) if inline_dataset else None,
        "dataset_ref": dataset_ref,
        "elbo_trace": list(model.elbo_trace),
        "config": asdict(model.cfg),
        "converged": model.converged,
    }


def model_from_doc(doc: dict, dataset: RoundSegmentedDataset | None = None) -> IomgpModel:
    if doc.get("version") != MODEL_VERSION:
        raise InputError(f"unsupported model version {doc.get('version')!r}")
    if dataset is None:
        if doc.get("dataset") is not None:
            dataset = dataset_from_doc(doc["dataset"])
        elif doc.get("dataset_ref"):
            from ..data import load_dataset

            dataset = load_dataset(doc["dataset_ref"])
        else:
            raise InputError("snapshot has neither an inline dataset nor a dataset_ref")
    cfg = FitConfig(**doc["config"]) if "config" in doc else FitConfig(m_max=doc["M"])
    if cfg.m_max != doc["M"]:
        raise InputError("config m_max disagrees with snapshot M")
    resp = Responsibilities(r=np.asarray(doc["responsibilities"], dtype=float), floor=cfg.floor)
    resp.validate()
    if resp.r.shape != (dataset.n, doc["M"]):
        raise InputError("responsibility matrix shape does not match dataset/truncation")
    if dataset.q != doc["Q"] or dataset.d != doc["D"]:
        raise InputError("snapshot Q/D header does not match the dataset")
    stick = StickPosterior(
        alpha=np.asarray(doc["stick"]["alpha"], dtype=float),
        beta_post=np.asarray(doc["stick"]["beta"], dtype=float),
        concentration=float(doc["stick"]["concentration"]),
    )
    model = IomgpModel(
        data=dataset,
        cfg=cfg,
        noise_schedule=[float(v) for v in doc["noise_schedule"]],
        kernel_params=[
            KernelParams(p["log_signal_variance"], p["log_lengthscale"])
            for p in doc["kernel_params"]
        ],
        resp=resp,
        stick=stick,
    )
    model.elbo_trace = [float(v) for v in doc.get("elbo_trace", [])]
    model.converged = bool(doc.get("converged", False))
    for m in range(model.m_max):
        update_f(model, m)
    return model


def save_model(model: IomgpModel, path: str | Path, dataset_ref: str | None = None) -> None:
    dump_json(model_to_doc(model, dataset_ref=dataset_ref), path)


def load_model(path: str | Path, dataset: RoundSegmentedDataset | None = None) -> IomgpModel:
    path = Path(path)
    doc = load_json(path)
    if dataset is None and doc.get("dataset") is None and doc.get("dataset_ref"):
        from ..data import load_dataset

        ref = Path(doc["dataset_ref"])
        if not ref.is_absolute():
            ref = path.parent / ref
        dataset = load_dataset(ref)
    return model_from_doc(doc, dataset=dataset)
