"""Live demonstration sessions over a local JSON/HTTP endpoint.

The server is authoritative: it samples the injection noise, records the
(state, intended-action) pairs, and executes intended + eps in the world; the
client is a dumb terminal that posts intents and renders echoes. One step
request advances exactly one tick. In realtime mode a watchdog additionally
ticks the active session at `tick_rate` Hz with the last intent held
(zero-order hold) whenever the client stalls; lockstep mode (the default for
programmatic clients and tests) never self-ticks.
"""

from __future__ import annotations

import asyncio
import itertools
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException
from pydantic import BaseModel

from . import __version__
from .data import DATASET_VERSION, dump_json, load_json
from .rng import derive_rng
from .sim import SweepConfig, SweepWorld, clamp_action, reset, step

PROTOCOL_VERSION = 1


@dataclass
class BridgeSettings:
    env: SweepConfig | None = None
    sigma2: float = 0.0
    tick_rate: float = 20.0
    realtime: bool = False
    dataset_path: Path | None = None
    ui_dir: Path | None = None


class StartRequest(BaseModel):
    sigma2: float | None = None
    seed: int = 0
    start_perturbation: float | None = None
    tick_rate: float | None = None


class StepRequest(BaseModel):
    intended: list[float]


class FinishRequest(BaseModel):
    accept: bool


@dataclass
class Session:
    session_id: str
    world: SweepWorld
    sigma2: float
    tick_rate: float
    rng: np.random.Generator
    status: str = "active"  # active | succeeded | failed | discarded | accepted
    states: list[np.ndarray] = field(default_factory=list)
    intended: list[np.ndarray] = field(default_factory=list)
    executed: list[np.ndarray] = field(default_factory=list)
    eps: list[np.ndarray] = field(default_factory=list)
    eps_raw: list[np.ndarray] = field(default_factory=list)
    last_intent: np.ndarray = field(default_factory=lambda: np.zeros(2))
    has_intent: bool = False
    last_activity: float = field(default_factory=time.monotonic)
    lock: asyncio.Lock = field(default_factory=asyncio.Lock)

    def view(self) -> dict:
        cfg = self.world.cfg
        last_int = self.intended[-1].tolist() if self.intended else None
        last_exec = self.executed[-1].tolist() if self.executed else None
        return {
            "protocol": PROTOCOL_VERSION,
            "session_id": self.session_id,
            "tick": self.world.t,
            "status": self.status,
            "score": self.world.score(),
            "robot": self.world.robot_pos.tolist(),
            "boxes": [
                {"pos": b.pos.tolist(), "half_size": b.half_size, "on_table": b.on_table}
                for b in self.world.boxes
            ],
            "sigma2": self.sigma2,
            "tick_rate": self.tick_rate,
            "horizon": cfg.horizon,
            "table_half_extent": cfg.table_half_extent,
            "robot_radius": cfg.robot_radius,
            "action_limit": cfg.action_limit,
            "intended": last_int,
            "executed": last_exec,
        }

    def tick(self, intended: np.ndarray) -> None:
        """Record the intent, execute intended + eps, advance the world.

        The logged eps is the effective disturbance executed - intended
        (exactly what the client must correct for, clamp included); the raw
        Gaussian draw is kept alongside for reconstruction audits."""
        obs = self.world.observe()
        eps_raw = (
            self.rng.normal(0.0, float(np.sqrt(self.sigma2)), size=2)
            if self.sigma2 > 0
            else np.zeros(2)
        )
        executed = clamp_action(intended + eps_raw, self.world.cfg.action_limit)
        self.states.append(obs)
        self.intended.append(intended.copy())
        self.eps_raw.append(eps_raw)
        self.eps.append(executed - intended)
        self.executed.append(executed)
        step(self.world, executed)
        self.last_intent = intended.copy()
        self.has_intent = True
        self.last_activity = time.monotonic()
        if self.world.success():
            self.status = "succeeded"
        elif self.world.t >= self.world.cfg.horizon:
            self.status = "failed"

    def fragment(self) -> dict:
        """Accepted episode as a one-round dataset document plus the
        disturbance audit (eps, executed) and quality metadata."""
        n_boxes = len(self.world.boxes)
        pairs = [
            {"s": s.tolist(), "a": a.tolist()} for s, a in zip(self.states, self.intended)
        ]
        return {
            "version": DATASET_VERSION,
            "Q": 2 * n_boxes,
            "D": 2,
            "rounds": [{"sigma2": self.sigma2, "pairs": pairs}],
            "meta": {
                "session_id": self.session_id,
                "score": self.world.score(),
                "success": self.world.success(),
                "warning_incomplete": not self.world.success(),
                "code_version": __version__,
            },
            "audit": {
                "intended": [a.tolist() for a in self.intended],
                "executed": [a.tolist() for a in self.executed],
                "eps": [e.tolist() for e in self.eps],
                "eps_raw": [e.tolist() for e in self.eps_raw],
            },
        }


def _merge_fragment_into_dataset(path: Path, fragment: dict) -> None:
    """Append the fragment's pairs to the dataset file, extending the current
    round if the sigma2 matches, else opening a new round."""
    if path.exists():
        doc = load_json(path)
    else:
        doc = {"version": DATASET_VERSION, "Q": fragment["Q"], "D": fragment["D"], "rounds": []}
    new_round = fragment["rounds"][0]
    if doc["rounds"] and doc["rounds"][-1]["sigma2"] == new_round["sigma2"]:
        doc["rounds"][-1]["pairs"].extend(new_round["pairs"])
    else:
        doc["rounds"].append({"sigma2": new_round["sigma2"], "pairs": list(new_round["pairs"])})
    dump_json(doc, path)


def create_app(settings: BridgeSettings | None = None) -> FastAPI:
    settings = settings or BridgeSettings()
    env_cfg = settings.env or SweepConfig()
    app = FastAPI(title="table-sweep demo bridge", version=__version__)
    sessions: dict[str, Session] = {}
    counter = itertools.count(1)
    watchdogs: dict[str, asyncio.Task] = {}

    def get_session(session_id: str) -> Session:
        session = sessions.get(session_id)
        if session is None:
            raise HTTPException(status_code=404, detail=f"no session {session_id!r}")
        return session

    async def watchdog(session: Session) -> None:
        # zero-order hold: tick with the held intent when the client stalls
        period = 1.0 / session.tick_rate
        while session.status == "active":
            await asyncio.sleep(period)
            async with session.lock:
                stale = time.monotonic() - session.last_activity
                if session.status == "active" and session.has_intent and stale > 1.5 * period:
                    session.tick(session.last_intent)

    @app.get("/api/info")
    async def info() -> dict:
        return {
            "protocol": PROTOCOL_VERSION,
            "version": __version__,
            "sigma2": settings.sigma2,
            "tick_rate": settings.tick_rate,
            "realtime": settings.realtime,
            "env": env_cfg.to_dict(),
        }

    @app.post("/api/sessions")
    async def start(req: StartRequest) -> dict:
        sigma2 = settings.sigma2 if req.sigma2 is None else req.sigma2
        if sigma2 < 0:
            raise HTTPException(status_code=422, detail="sigma2 must be non-negative")
        tick_rate = req.tick_rate or settings.tick_rate
        if tick_rate <= 0:
            raise HTTPException(status_code=422, detail="tick_rate must be positive")
        session_id = f"s{next(counter):04d}"
        world = reset(env_cfg, start_perturbation=req.start_perturbation, seed=req.seed)
        session = Session(
            session_id=session_id,
            world=world,
            sigma2=float(sigma2),
            tick_rate=float(tick_rate),
            rng=derive_rng(req.seed, "demo-session", session_id),
        )
        sessions[session_id] = session
        if settings.realtime:
            watchdogs[session_id] = asyncio.create_task(watchdog(session))
        return {"session_id": session_id, "view": session.view()}

    @app.get("/api/sessions/{session_id}")
    async def state(session_id: str) -> dict:
        return get_session(session_id).view()

    @app.post("/api/sessions/{session_id}/step")
    async def step_session(session_id: str, req: StepRequest) -> dict:
        session = get_session(session_id)
        async with session.lock:
            if session.status != "active":
                raise HTTPException(
                    status_code=409, detail=f"session is {session.status}, not active"
                )
            intended = np.asarray(req.intended, dtype=float)
            if intended.shape != (2,) or not np.all(np.isfinite(intended)):
                raise HTTPException(status_code=422, detail="intended must be a finite 2-vector")
            session.tick(intended)
            return {
                "view": session.view(),
                "intended": session.intended[-1].tolist(),
                "executed": session.executed[-1].tolist(),
            }

    @app.post("/api/sessions/{session_id}/finish")
    async def finish(session_id: str, req: FinishRequest) -> dict:
        session = get_session(session_id)
        async with session.lock:
            if session.status in ("accepted", "discarded"):
                raise HTTPException(status_code=409, detail="session already finished")
            if not req.accept:
                session.status = "discarded"
                return {"status": session.status, "fragment": None}
            fragment = session.fragment()
            session.status = "accepted"
            if settings.dataset_path is not None:
                _merge_fragment_into_dataset(Path(settings.dataset_path), fragment)
            return {"status": session.status, "fragment": fragment}

    if settings.ui_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(settings.ui_dir), html=True), name="ui")

    return app
