"""Forward kinematics, geometric Jacobians, and damped-least-squares IK.

The state vector orders dofs by joint declaration order; an uncoupled screw
contributes two entries, (rotation, translation) in that fixed order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .asset.model import ArticulationSpec, JointKind, JointSpec
from .errors import DimensionMismatch, NoConvergence, UnknownLink
from .spatial import Transform, axis_angle_to_quaternion, quat_multiply, quat_to_rotvec

IK_DAMPING = 1e-3
IK_MAX_ITERS = 200


@dataclass
class ArticulationState:
    """Generalized coordinates and velocities (rad or m per dof)."""

    q: np.ndarray
    qd: np.ndarray

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float).reshape(-1)
        self.qd = np.asarray(self.qd, dtype=float).reshape(-1)
        if self.q.shape != self.qd.shape:
            raise DimensionMismatch(f"q has {self.q.size} entries, qd has {self.qd.size}")

    @staticmethod
    def zeros(dof: int) -> "ArticulationState":
        return ArticulationState(np.zeros(dof), np.zeros(dof))

    @property
    def dof(self) -> int:
        return self.q.size

    def copy(self) -> "ArticulationState":
        return ArticulationState(self.q.copy(), self.qd.copy())


def check_state(spec: ArticulationSpec, state: ArticulationState) -> None:
    if state.dof != spec.dof:
        raise DimensionMismatch(
            f"{spec.name!r} has {spec.dof} dofs, state carries {state.dof}")


def joint_motion(joint: JointSpec, q: np.ndarray) -> Transform:
    """Pose of the child joint frame relative to the zero-configuration joint
    frame for dof values q."""
    kind = joint.kind
    if kind == JointKind.FIXED:
        return Transform.identity()
    axis = joint.axis
    if kind == JointKind.HINGE:
        return Transform(axis_angle_to_quaternion(axis, q[0]))
    if kind == JointKind.SLIDER:
        return Transform(translation=axis * q[0])
    if joint.screw_coupled:
        return Transform(axis_angle_to_quaternion(axis, q[0]), axis * (joint.screw_pitch * q[0]))
    return Transform(axis_angle_to_quaternion(axis, q[0]), axis * q[1])


def forward_kinematics(spec: ArticulationSpec, state: ArticulationState,
                       base: Transform | None = None) -> dict[str, Transform]:
    """World pose of every link. The root sits at `base` (identity default);
    children compose parent pose, joint origin, and joint motion. A coupled
    screw translates by pitch*q along its axis while rotating by q about it."""
    check_state(spec, state)
    base = base if base is not None else Transform.identity()
    poses: dict[str, Transform] = {spec.root_link: base}
    index = spec.dof_index()
    remaining = list(spec.joints)
    while remaining:
        progressed = False
        for joint in list(remaining):
            if joint.parent_link in poses:
                start, n = index[joint.name]
                motion = joint_motion(joint, state.q[start:start + n])
                poses[joint.child_link] = poses[joint.parent_link] @ joint.origin @ motion
                remaining.remove(joint)
                progressed = True
        if not progressed:  # unreachable for validated specs
            raise DimensionMismatch("joint graph is not a connected tree")
    return poses


def _path_to_root(spec: ArticulationSpec, link: str) -> list[JointSpec]:
    parent_joint = {j.child_link: j for j in spec.joints}
    path = []
    cur = link
    while cur != spec.root_link:
        j = parent_joint[cur]
        path.append(j)
        cur = j.parent_link
    path.reverse()
    return path


def jacobian(spec: ArticulationSpec, state: ArticulationState, link: str,
             point, base: Transform | None = None) -> np.ndarray:
    """6 x dof world-frame geometric Jacobian of a point rigidly attached to
    `link`: rows stack (angular; linear) velocity per unit joint velocity.
    Joints off the root-to-link path contribute zero columns."""
    if link not in spec.link_names():
        raise UnknownLink(f"unknown link {link!r}")
    check_state(spec, state)
    point = np.asarray(point, dtype=float).reshape(3)
    poses = forward_kinematics(spec, state, base)
    index = spec.dof_index()
    jac = np.zeros((6, spec.dof))
    for joint in _path_to_root(spec, link):
        start, n = index[joint.name]
        if n == 0:
            continue
        # Joint frame pose at the current configuration (motion included for
        # the translation part so screw axes stay anchored correctly).
        frame = poses[joint.parent_link] @ joint.origin
        axis_w = frame.apply_vector(joint.axis)
        origin_w = frame.translation
        r = point - origin_w
        if joint.kind == JointKind.HINGE:
            jac[:3, start] = axis_w
            jac[3:, start] = np.cross(axis_w, r)
        elif joint.kind == JointKind.SLIDER:
            jac[3:, start] = axis_w
        elif joint.kind == JointKind.SCREW and joint.screw_coupled:
            jac[:3, start] = axis_w
            jac[3:, start] = np.cross(axis_w, r) + joint.screw_pitch * axis_w
        else:  # uncoupled screw: rotation column then translation column
            jac[:3, start] = axis_w
            jac[3:, start] = np.cross(axis_w, r)
            jac[3:, start + 1] = axis_w
    return jac


def pose_error(current: Transform, target: Transform) -> np.ndarray:
    """Stacked (rotation-vector; position) error taking current to target."""
    rot = quat_to_rotvec(quat_multiply(target.rotation,
                                       np.array([current.rotation[0], -current.rotation[1],
                                                 -current.rotation[2], -current.rotation[3]])))
    return np.concatenate([rot, target.translation - current.translation])


def solve_ik(spec: ArticulationSpec, state0: ArticulationState, link: str,
             target: Transform, tol_pos: float = 1e-4, tol_rot: float = 1e-3,
             max_iters: int = IK_MAX_ITERS, base: Transform | None = None,
             damping: float = IK_DAMPING) -> ArticulationState:
    """Damped-least-squares IK from state0 toward a world target pose.

    The damping adapts Levenberg-Marquardt style (grows on rejected steps,
    shrinks back toward the base value on accepted ones), and a stalled
    search restarts from a deterministic perturbation of state0; max_iters
    bounds the total iteration count across restarts. Joint limits are
    enforced by projection after each step. On success the returned state's
    forward kinematics is within (tol_pos, tol_rot) of the target; otherwise
    NoConvergence carries the best residual seen.
    """
    if tol_pos <= 0 or tol_rot <= 0:
        raise ValueError("tolerances must be positive")
    if link not in spec.link_names():
        raise UnknownLink(f"unknown link {link!r}")
    check_state(spec, state0)
    lower, upper = spec.dof_limit_arrays()
    q0 = np.clip(state0.q.copy(), lower, upper)
    restart_rng = np.random.default_rng(0x1D5)
    span = np.where(np.isfinite(upper - lower), upper - lower, 2.0)

    q = q0.copy()
    lam = damping
    best = (math.inf, math.inf)
    cost_prev = math.inf
    stall = 0
    for _ in range(max_iters):
        st = ArticulationState(q, np.zeros_like(q))
        current = forward_kinematics(spec, st, base)[link]
        err = pose_error(current, target)
        rot_res = float(np.linalg.norm(err[:3]))
        pos_res = float(np.linalg.norm(err[3:]))
        if (pos_res, rot_res) < best:
            best = (pos_res, rot_res)
        if pos_res <= tol_pos and rot_res <= tol_rot:
            return ArticulationState(q, np.zeros_like(q))
        cost = float(err @ err)
        if cost < cost_prev * (1.0 - 1e-3):
            lam = max(damping, lam / 3.0)
            stall = 0
        else:
            lam = min(1.0, lam * 5.0)
            stall += 1
        cost_prev = min(cost, cost_prev)
        if stall >= 20:
            q = np.clip(q0 + restart_rng.uniform(-0.5, 0.5, q0.size) * span,
                        lower, upper)
            lam = damping
            cost_prev = math.inf
            stall = 0
            continue
        jac = jacobian(spec, st, link, current.translation, base)
        # active-set handling: dofs pressing against a limit drop out of the
        # step so the remaining joints absorb the error
        frozen = np.zeros(q.size, dtype=bool)
        for _ in range(q.size):
            jac_eff = jac.copy()
            jac_eff[:, frozen] = 0.0
            jjt = jac_eff @ jac_eff.T + (lam ** 2) * np.eye(6)
            dq = jac_eff.T @ np.linalg.solve(jjt, err)
            pressing = (((q <= lower + 1e-12) & (dq < 0))
                        | ((q >= upper - 1e-12) & (dq > 0)))
            if not np.any(pressing & ~frozen):
                break
            frozen |= pressing
        step = np.linalg.norm(dq)
        if step > 0.5:
            dq *= 0.5 / step
        q = np.clip(q + dq, lower, upper)
    raise NoConvergence(
        f"IK did not reach tolerance after {max_iters} iterations "
        f"(best pos residual {best[0]:.3e} m, rot residual {best[1]:.3e} rad)",
        pos_residual=best[0], rot_residual=best[1])
