"""Joint controllers: direct force, P-D position, velocity, and
computed-torque trajectory tracking.

Controllers produce torques consumed by the dynamics step; they never write
state. Torques are always clamped to per-joint effort limits, and position
targets beyond the joint limits are clamped with the clamping flagged on the
controller status.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .asset.model import ArticulationSpec
from .dynamics.algorithms import compile_articulation, rnea
from .errors import (EmptyTrajectory, NonMonotoneTime, NoTrajectoryLoaded,
                     TargetShapeMismatch, UnknownJoint)
from .kinematics import ArticulationState


class ControlMode(enum.Enum):
    FORCE = "force"
    POSITION = "position"
    VELOCITY = "velocity"
    TRAJECTORY = "trajectory"


@dataclass(frozen=True)
class ControllerSpec:
    """Which joints to drive, in which mode, with which gains.

    Gains may be scalars (shared by every controlled dof) or per-joint
    sequences; all must be non-negative.
    """

    joints: tuple[str, ...]
    mode: ControlMode
    kp: float | tuple = 0.0
    kd: float | tuple = 0.0
    kv: float | tuple = 0.0
    gravity_compensation: bool = False

    def __post_init__(self):
        object.__setattr__(self, "joints", tuple(self.joints))
        if not self.joints:
            raise TargetShapeMismatch("controller needs at least one joint")
        for name in ("kp", "kd", "kv"):
            value = getattr(self, name)
            if np.isscalar(value):
                if value < 0:
                    raise TargetShapeMismatch(f"{name} must be non-negative")
            else:
                value = tuple(float(v) for v in value)
                if len(value) != len(self.joints):
                    raise TargetShapeMismatch(
                        f"{name} has {len(value)} entries for {len(self.joints)} joints")
                if any(v < 0 for v in value):
                    raise TargetShapeMismatch(f"{name} must be non-negative")
                object.__setattr__(self, name, value)


@dataclass(frozen=True)
class TrajectoryPoint:
    """One scheduled knot: time plus position/velocity/acceleration per
    controlled joint."""

    t: float
    q: np.ndarray
    qd: np.ndarray
    qdd: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "q", np.asarray(self.q, dtype=float).reshape(-1))
        object.__setattr__(self, "qd", np.asarray(self.qd, dtype=float).reshape(-1))
        object.__setattr__(self, "qdd", np.asarray(self.qdd, dtype=float).reshape(-1))


def _hermite(p0: TrajectoryPoint, p1: TrajectoryPoint, t: float):
    h = p1.t - p0.t
    s = (t - p0.t) / h
    h00 = 2 * s**3 - 3 * s**2 + 1
    h10 = s**3 - 2 * s**2 + s
    h01 = -2 * s**3 + 3 * s**2
    h11 = s**3 - s**2
    q = h00 * p0.q + h10 * h * p0.qd + h01 * p1.q + h11 * h * p1.qd
    d00 = (6 * s**2 - 6 * s) / h
    d10 = 3 * s**2 - 4 * s + 1
    d01 = (-6 * s**2 + 6 * s) / h
    d11 = 3 * s**2 - 2 * s
    qd = d00 * p0.q + d10 * p0.qd + d01 * p1.q + d11 * p1.qd
    a00 = (12 * s - 6) / h**2
    a10 = (6 * s - 4) / h
    a01 = (-12 * s + 6) / h**2
    a11 = (6 * s - 2) / h
    qdd = a00 * p0.q + a10 * p0.qd + a01 * p1.q + a11 * p1.qd
    return q, qd, qdd


class Controller:
    """A ControllerSpec bound to one articulation's joints."""

    def __init__(self, articulation: ArticulationSpec, spec: ControllerSpec):
        self.spec = spec
        self.articulation = articulation
        self.model = compile_articulation(articulation)
        index = articulation.dof_index()
        self.dof_indices: list[int] = []
        per_joint_width: list[int] = []
        for name in spec.joints:
            if name not in index:
                raise UnknownJoint(f"controller names unknown joint {name!r}")
            start, n = index[name]
            self.dof_indices.extend(range(start, start + n))
            per_joint_width.append(n)
        if not self.dof_indices:
            raise TargetShapeMismatch("controlled joints carry no dofs")
        self.n = len(self.dof_indices)

        def expand(gain):
            per_joint = [gain] * len(spec.joints) if np.isscalar(gain) else list(gain)
            return np.repeat(np.asarray(per_joint, dtype=float), per_joint_width)

        self.kp_vec = expand(spec.kp)
        self.kd_vec = expand(spec.kd)
        self.kv_vec = expand(spec.kv)
        self._target: np.ndarray | None = None
        self._trajectory: list[TrajectoryPoint] | None = None
        self.target_clamped = False

    @property
    def ready(self) -> bool:
        """A controller idles (contributes nothing) until it has a target or,
        in trajectory mode, loaded points."""
        if self.spec.mode == ControlMode.TRAJECTORY:
            return self._trajectory is not None
        return self._target is not None

    def set_target(self, target) -> None:
        """Set the mode-specific target (tau, q*, or qd*); trajectory mode
        takes its reference from the loaded points instead."""
        if self.spec.mode == ControlMode.TRAJECTORY:
            raise TargetShapeMismatch("trajectory controllers use load_trajectory")
        t = np.asarray(target, dtype=float).reshape(-1)
        if t.size != self.n:
            raise TargetShapeMismatch(
                f"target has {t.size} entries, controller drives {self.n} dofs")
        self.target_clamped = False
        if self.spec.mode == ControlMode.POSITION:
            lower = self.model.lower[self.dof_indices]
            upper = self.model.upper[self.dof_indices]
            clamped = np.clip(t, lower, upper)
            self.target_clamped = bool(np.any(clamped != t))
            t = clamped
        self._target = t

    def load_trajectory(self, points: list[TrajectoryPoint]) -> None:
        """Install trajectory knots (strictly increasing absolute times).
        The reference is a cubic Hermite through (q, qd); outside the knot
        span it holds the boundary position with zero velocity."""
        if not points:
            raise EmptyTrajectory("trajectory needs at least one point")
        for p in points:
            if p.q.size != self.n or p.qd.size != self.n or p.qdd.size != self.n:
                raise TargetShapeMismatch(
                    f"trajectory point width {p.q.size} != controlled dofs {self.n}")
        times = [p.t for p in points]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise NonMonotoneTime(f"trajectory times must strictly increase, got {times}")
        self._trajectory = list(points)

    def reference(self, sim_time: float):
        """Interpolated (q, qd, qdd) reference at an absolute sim time."""
        if self._trajectory is None:
            raise NoTrajectoryLoaded("no trajectory loaded")
        pts = self._trajectory
        if sim_time <= pts[0].t:
            return pts[0].q.copy(), np.zeros(self.n), np.zeros(self.n)
        if sim_time >= pts[-1].t:
            return pts[-1].q.copy(), np.zeros(self.n), np.zeros(self.n)
        for p0, p1 in zip(pts, pts[1:]):
            if p0.t <= sim_time <= p1.t:
                return _hermite(p0, p1, sim_time)
        raise NoTrajectoryLoaded("unreachable: time inside span not bracketed")

    def compute_torque(self, state: ArticulationState, sim_time: float,
                       gravity=None) -> np.ndarray:
        """Full-dof torque vector (zeros on uncontrolled dofs), clamped to the
        per-joint effort limits."""
        from .spatial import GRAVITY
        g = GRAVITY if gravity is None else gravity
        idx = self.dof_indices
        q, qd = state.q, state.qd
        tau = np.zeros(self.model.n_dof)
        mode = self.spec.mode
        if mode == ControlMode.FORCE:
            if self._target is None:
                raise TargetShapeMismatch("force controller has no target")
            tau[idx] = self._target
        elif mode == ControlMode.POSITION:
            if self._target is None:
                raise TargetShapeMismatch("position controller has no target")
            tau[idx] = self.kp_vec * (self._target - q[idx]) - self.kd_vec * qd[idx]
            if self.spec.gravity_compensation:
                hold = rnea(self.model, q, np.zeros_like(q), np.zeros_like(q), g)
                tau[idx] += hold[idx]
        elif mode == ControlMode.VELOCITY:
            if self._target is None:
                raise TargetShapeMismatch("velocity controller has no target")
            tau[idx] = self.kv_vec * (self._target - qd[idx])
        else:  # TRAJECTORY: feedforward inverse dynamics plus P-D feedback
            q_ref, qd_ref, qdd_ref = self.reference(sim_time)
            q_full = q.copy()
            qd_full = np.zeros_like(q)
            qdd_full = np.zeros_like(q)
            q_full[idx] = q_ref
            qd_full[idx] = qd_ref
            qdd_full[idx] = qdd_ref
            ff = rnea(self.model, q_full, qd_full, qdd_full, g)
            tau[idx] = (ff[idx] + self.kp_vec * (q_ref - q[idx])
                        + self.kd_vec * (qd_ref - qd[idx]))
        return np.clip(tau, -self.model.effort, self.model.effort)


def compute_torque(ctrl: Controller, state: ArticulationState, target,
                   sim_time: float, gravity=None) -> np.ndarray:
    """Functional wrapper: set the target (when given) and compute torques."""
    if target is not None:
        ctrl.set_target(target)
    return ctrl.compute_torque(state, sim_time, gravity)


def load_trajectory(ctrl: Controller, points: list[TrajectoryPoint]) -> None:
    ctrl.load_trajectory(points)
