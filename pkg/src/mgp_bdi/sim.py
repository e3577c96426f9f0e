"""Deterministic 2-D table-sweep environment.

A disk robot pushes square boxes off a table under quasi-static contact: the
robot is position-commanded by a velocity action, and an overlapped box is
displaced along the contact normal by the penetration depth scaled by
(1 - friction_slip). A two-phase PID supervisor provides the algorithmic
expert. All dynamics are pure float arithmetic: identical (config, seed,
action sequence) gives bit-identical trajectories.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InputError
from .rng import derive_rng


@dataclass(frozen=True)
class PidGains:
    kp: float = 1.5
    ki: float = 0.0
    kd: float = 0.0


@dataclass(frozen=True)
class SweepConfig:
    n_boxes: int = 2
    table_half_extent: float = 0.25
    friction_slip: float = 0.2
    dt: float = 0.05
    horizon: int = 200
    action_limit: float = 0.1
    start_perturbation: float = 0.0
    box_half_size: float = 0.02
    robot_radius: float = 0.02
    robot_start: tuple[float, float] = (0.0, -0.13)
    two_box_offset: float = 0.10
    two_box_height: float = 0.12
    approach_margin: float = 0.01
    push_standoff: float = 0.025
    pid: PidGains = field(default_factory=PidGains)

    def __post_init__(self) -> None:
        if not 2 <= self.n_boxes <= 3:
            raise InputError("n_boxes must be 2 or 3")
        if self.dt <= 0 or self.horizon < 1 or self.action_limit <= 0:
            raise InputError("dt, horizon and action_limit must be positive")
        if not 0 <= self.friction_slip < 1:
            raise InputError("friction_slip must lie in [0, 1)")

    @property
    def q(self) -> int:
        return 2 * self.n_boxes

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in (
            "n_boxes", "table_half_extent", "friction_slip", "dt", "horizon",
            "action_limit", "start_perturbation", "box_half_size", "robot_radius",
            "two_box_offset", "two_box_height", "approach_margin", "push_standoff",
        )}
        d["robot_start"] = list(self.robot_start)
        d["pid"] = {"kp": self.pid.kp, "ki": self.pid.ki, "kd": self.pid.kd}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SweepConfig":
        d = dict(d)
        pid = PidGains(**d.pop("pid")) if "pid" in d else PidGains()
        if "robot_start" in d:
            d["robot_start"] = tuple(d["robot_start"])
        return cls(pid=pid, **d)


@dataclass
class Box:
    pos: np.ndarray
    half_size: float
    on_table: bool = True


@dataclass
class SweepWorld:
    cfg: SweepConfig
    robot_pos: np.ndarray
    boxes: list[Box]
    t: int = 0

    def observe(self) -> np.ndarray:
        """Relative box coordinates, flattened: (box_i - robot) for each box.
        Boxes keep their exit position after leaving the table."""
        rel = [box.pos - self.robot_pos for box in self.boxes]
        return np.concatenate(rel)

    def score(self) -> int:
        return sum(1 for box in self.boxes if not box.on_table)

    def success(self) -> bool:
        return self.score() == len(self.boxes)

    def copy(self) -> "SweepWorld":
        return SweepWorld(
            cfg=self.cfg,
            robot_pos=self.robot_pos.copy(),
            boxes=[Box(b.pos.copy(), b.half_size, b.on_table) for b in self.boxes],
            t=self.t,
        )


def clamp_action(action, limit: float) -> np.ndarray:
    v = np.asarray(action, dtype=float)
    speed = float(np.linalg.norm(v))
    # few-ulp dead band keeps the clamp idempotent bit-for-bit
    if speed > limit * (1.0 + 4.0 * np.finfo(float).eps):
        v = v * (limit / speed)
    return v


def reset(cfg: SweepConfig, start_perturbation: float | None = None, seed: int = 0) -> SweepWorld:
    """Fresh world. Two boxes sit at fixed mirror-symmetric positions; three
    boxes are sampled one per trisected strip with insets that make overlap
    impossible. The robot starts at the centre plus U(-p, p) per axis."""
    p = cfg.start_perturbation if start_perturbation is None else float(start_perturbation)
    if p < 0:
        raise InputError("start perturbation must be non-negative")
    rng = derive_rng(seed, "sweep-reset")
    h = cfg.table_half_extent
    hs = cfg.box_half_size
    start = np.asarray(cfg.robot_start, dtype=float)
    if cfg.n_boxes == 2:
        boxes = [
            Box(pos=np.array([-cfg.two_box_offset, cfg.two_box_height]), half_size=hs),
            Box(pos=np.array([cfg.two_box_offset, cfg.two_box_height]), half_size=hs),
        ]
    else:
        # upper band, one box per trisected strip, placed with |y| > |x| so
        # every box is swept toward the top edge; insets keep neighbouring
        # strips and the robot approach corridor clear
        inset_x = hs + 0.015
        inset_y = hs + 0.03
        strips = [(-h, -h / 3.0), (-h / 3.0, h / 3.0), (h / 3.0, h)]
        boxes = []
        for lo, hi in strips:
            x_max = min(hi - inset_x, h - inset_y - 0.02)
            x_min = max(lo + inset_x, -(h - inset_y - 0.02))
            x = rng.uniform(x_min, x_max)
            y = rng.uniform(max(0.10, abs(x) + 0.015), h - inset_y)
            boxes.append(Box(pos=np.array([x, y]), half_size=hs))
    robot = start + (rng.uniform(-p, p, size=2) if p > 0 else 0.0)
    return SweepWorld(cfg=cfg, robot_pos=robot, boxes=boxes)


def step(world: SweepWorld, action) -> np.ndarray:
    """Advance one tick: move the robot by the clamped velocity, resolve
    quasi-static pushes, retire boxes whose centre crossed the boundary."""
    a = np.asarray(action, dtype=float)
    if a.shape != (2,) or not np.all(np.isfinite(a)):
        raise InputError("action must be a finite 2-vector")
    cfg = world.cfg
    v = clamp_action(a, cfg.action_limit)
    world.robot_pos = world.robot_pos + v * cfg.dt
    h = cfg.table_half_extent
    for box in world.boxes:
        if not box.on_table:
            continue
        lo = box.pos - box.half_size
        hi = box.pos + box.half_size
        closest = np.minimum(np.maximum(world.robot_pos, lo), hi)
        delta = world.robot_pos - closest
        dist = float(np.linalg.norm(delta))
        if dist < cfg.robot_radius:
            if dist > 1e-12:
                normal = -delta / dist
            else:
                speed = float(np.linalg.norm(v))
                normal = v / speed if speed > 1e-12 else np.array([1.0, 0.0])
            overlap = cfg.robot_radius - dist
            box.pos = box.pos + normal * overlap * (1.0 - cfg.friction_slip)
        if np.max(np.abs(box.pos)) > h:
            box.on_table = False
    world.t += 1
    return world.observe()


def push_direction(box_pos: np.ndarray) -> np.ndarray:
    """Outward unit axis toward the box's nearest table edge (x wins ties)."""
    axis = 0 if abs(box_pos[0]) >= abs(box_pos[1]) else 1
    direction = np.zeros(2)
    direction[axis] = 1.0 if box_pos[axis] >= 0 else -1.0
    return direction


class PidExpert:
    """Two-phase sweeping supervisor.

    For the current target box (episode script order, skipping swept boxes):
    approach a staging point behind the box relative to its nearest edge,
    then drive through the box toward that edge. The phase is re-derived from
    geometry every step, so the controller re-stages itself after
    disturbances.

    dither_std > 0 adds seeded Gaussian jitter to the commanded velocity,
    standing in for the variability of a human (or real-robot) demonstrator;
    the dithered command is the expert's intended action.
    """

    def __init__(
        self,
        cfg: SweepConfig,
        order: list[int] | tuple[int, ...],
        gains: PidGains | None = None,
        dither_std: float = 0.0,
        dither_rng: np.random.Generator | None = None,
    ):
        self.cfg = cfg
        self.order = list(order)
        self.gains = gains or cfg.pid
        self.dither_std = float(dither_std)
        if self.dither_std > 0 and dither_rng is None:
            raise InputError("dither_std > 0 requires a seeded dither_rng")
        self._dither_rng = dither_rng
        self.reset()

    def reset(self) -> None:
        self._integral = np.zeros(2)
        self._prev_err: np.ndarray | None = None

    def _current_target(self, world: SweepWorld) -> Box | None:
        for idx in self.order:
            if world.boxes[idx].on_table:
                return world.boxes[idx]
        return None

    def _target_point(self, world: SweepWorld, box: Box) -> np.ndarray:
        cfg = self.cfg
        direction = push_direction(box.pos)
        offset = box.half_size + cfg.robot_radius + cfg.approach_margin
        rel = world.robot_pos - box.pos
        along = float(rel @ direction)
        lateral = float(np.linalg.norm(rel - along * direction))
        # in contact the robot sits just behind the box centre; the relaxed
        # threshold keeps the controller in push mode through penetration
        behind = along <= -0.25 * box.half_size
        aligned = lateral <= box.half_size
        if behind and aligned:
            # receding target just past the box centre: the command ramps
            # with penetration instead of saturating at the limit
            return box.pos + direction * cfg.push_standoff
        return box.pos - direction * offset

    def intended_action(self, world: SweepWorld, prev_executed=None) -> np.ndarray:
        box = self._current_target(world)
        if box is None:
            return np.zeros(2)
        err = self._target_point(world, box) - world.robot_pos
        self._integral = self._integral + err * self.cfg.dt
        deriv = np.zeros(2) if self._prev_err is None else (err - self._prev_err) / self.cfg.dt
        self._prev_err = err
        g = self.gains
        u = g.kp * err + g.ki * self._integral + g.kd * deriv
        if self.dither_std > 0:
            u = u + self._dither_rng.normal(0.0, self.dither_std, size=2)
        return clamp_action(u, self.cfg.action_limit)

    __call__ = intended_action


@dataclass
class Trajectory:
    states: np.ndarray  # (T, Q) observation before each step
    intended: np.ndarray  # (T, D) policy/supervisor label
    executed: np.ndarray  # (T, D) action applied to the world

    @property
    def length(self) -> int:
        return self.states.shape[0]


@dataclass
class EpisodeResult:
    trajectory: Trajectory
    score: int
    success: bool
    error: str | None = None


def rollout(world: SweepWorld, policy, horizon: int | None = None, executor=None) -> EpisodeResult:
    """Run `policy(world, prev_executed) -> intended action` until success or
    the horizon. `executor` maps intended to executed actions (identity by
    default); both are clamped by the environment. A non-finite policy action
    ends the episode with the score achieved so far."""
    cfg = world.cfg
    steps = cfg.horizon if horizon is None else int(horizon)
    states, intended, executed = [], [], []
    prev_exec = None
    error = None
    for _ in range(steps):
        if world.success():
            break
        obs = world.observe()
        try:
            a_int = np.asarray(policy(world, prev_exec), dtype=float)
        except Exception as exc:  # surfaced as a recorded rollout error
            error = f"policy failure: {exc}"
            break
        if a_int.shape != (2,) or not np.all(np.isfinite(a_int)):
            error = "non-finite policy action"
            break
        a_exec = np.asarray(a_int if executor is None else executor(a_int), dtype=float)
        if not np.all(np.isfinite(a_exec)):
            error = "non-finite executed action"
            break
        a_exec = clamp_action(a_exec, cfg.action_limit)
        states.append(obs)
        intended.append(a_int)
        executed.append(a_exec)
        step(world, a_exec)
        prev_exec = a_exec
    traj = Trajectory(
        states=np.asarray(states, dtype=float).reshape(len(states), cfg.q),
        intended=np.asarray(intended, dtype=float).reshape(len(intended), 2),
        executed=np.asarray(executed, dtype=float).reshape(len(executed), 2),
    )
    return EpisodeResult(trajectory=traj, score=world.score(), success=world.success(), error=error)
