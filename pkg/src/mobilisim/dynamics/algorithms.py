"""Reduced-coordinate dynamics over an articulation tree.

Forward dynamics uses an articulated-body recursion, inverse dynamics a
recursive Newton-Euler pass; both are O(dof) in the tree size. Body frames
coincide with link frames; six-vectors stack (angular; linear). The fixed
base carries the gravity field by offsetting the base acceleration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..asset.model import ArticulationSpec, JointKind, JointSpec
from ..errors import DimensionMismatch, SingularInertia
from ..kinematics import ArticulationState, joint_motion
from ..spatial import (GRAVITY, Transform, spatial_cross_force, spatial_cross_motion,
                       spatial_transform)

# Coulomb friction is smoothed as -friction * tanh(qd / FRICTION_VEL_SCALE)
# to keep the fixed-step integrator free of stiction discontinuities.
FRICTION_VEL_SCALE = 0.01


@dataclass
class CompiledArticulation:
    """Per-spec constants precomputed for the dynamics recursions. Link 0 is
    the root; links are ordered parents-before-children."""

    spec: ArticulationSpec
    link_names: list[str]
    link_index: dict[str, int]
    parent: list[int]
    joints: list[JointSpec | None]          # joint connecting link i to its parent
    inertia66: list[np.ndarray]
    subspace: list[np.ndarray | None]       # 6 x n_i motion subspace, child frame
    dof_slice: list[slice]
    n_dof: int
    damping: np.ndarray
    friction: np.ndarray
    effort: np.ndarray
    lower: np.ndarray
    upper: np.ndarray


def _motion_subspace(joint: JointSpec) -> np.ndarray | None:
    a = joint.axis
    if joint.kind == JointKind.FIXED:
        return None
    if joint.kind == JointKind.HINGE:
        s = np.zeros((6, 1))
        s[:3, 0] = a
        return s
    if joint.kind == JointKind.SLIDER:
        s = np.zeros((6, 1))
        s[3:, 0] = a
        return s
    if joint.screw_coupled:
        s = np.zeros((6, 1))
        s[:3, 0] = a
        s[3:, 0] = joint.screw_pitch * a
        return s
    s = np.zeros((6, 2))
    s[:3, 0] = a
    s[3:, 1] = a
    return s


def compile_articulation(spec: ArticulationSpec) -> CompiledArticulation:
    """Build (and memoize on the spec instance) the compiled recursion data."""
    cached = getattr(spec, "_compiled", None)
    if cached is not None:
        return cached

    joint_of_child = {j.child_link: j for j in spec.joints}
    order = [spec.root_link]
    children: dict[str, list[str]] = {l.name: [] for l in spec.links}
    for j in spec.joints:
        children[j.parent_link].append(j.child_link)
    cursor = 0
    while cursor < len(order):
        order.extend(children[order[cursor]])
        cursor += 1

    link_index = {name: i for i, name in enumerate(order)}
    parent, joints, inertia66, subspace = [], [], [], []
    dof_slice: list[slice] = []
    index = spec.dof_index()
    damping, friction, effort = [], [], []
    for name in order:
        link = spec.link(name)
        inertia66.append(link.inertial.matrix66())
        if name == spec.root_link:
            parent.append(-1)
            joints.append(None)
            subspace.append(None)
            dof_slice.append(slice(0, 0))
            continue
        j = joint_of_child[name]
        parent.append(link_index[j.parent_link])
        joints.append(j)
        subspace.append(_motion_subspace(j))
        start, n = index[j.name]
        dof_slice.append(slice(start, start + n))
        damping.extend([j.damping] * n)
        friction.extend([j.friction] * n)
        effort.extend([j.effort] * n)

    lower, upper = spec.dof_limit_arrays()
    compiled = CompiledArticulation(
        spec=spec, link_names=order, link_index=link_index, parent=parent,
        joints=joints, inertia66=inertia66, subspace=subspace, dof_slice=dof_slice,
        n_dof=spec.dof,
        damping=_scatter_by_slice(np.array(damping), dof_slice, spec.dof),
        friction=_scatter_by_slice(np.array(friction), dof_slice, spec.dof),
        effort=_scatter_by_slice(np.array(effort), dof_slice, spec.dof),
        lower=lower, upper=upper)
    object.__setattr__(spec, "_compiled", compiled)
    return compiled


def _scatter_by_slice(values: np.ndarray, slices: list[slice], n: int) -> np.ndarray:
    # values are packed in link order; re-place them at their dof indices
    out = np.zeros(n)
    taken = 0
    for sl in slices:
        width = sl.stop - sl.start
        if width:
            out[sl] = values[taken:taken + width]
            taken += width
    return out


def _joint_transforms(model: CompiledArticulation, q: np.ndarray):
    """Per-link (child-pose-in-parent Transform, 6x6 parent->child motion
    transform); entry 0 is None for the root."""
    pose_in_parent: list[Transform | None] = [None]
    xup: list[np.ndarray | None] = [None]
    for i in range(1, len(model.link_names)):
        j = model.joints[i]
        t = j.origin @ joint_motion(j, q[model.dof_slice[i]])
        pose_in_parent.append(t)
        xup.append(spatial_transform(t))
    return pose_in_parent, xup


def _velocity_pass(model, q, qd):
    _, xup = _joint_transforms(model, q)
    n = len(model.link_names)
    v: list[np.ndarray] = [np.zeros(6)] * n
    vj: list[np.ndarray] = [np.zeros(6)] * n
    for i in range(1, n):
        s = model.subspace[i]
        vji = s @ qd[model.dof_slice[i]] if s is not None else np.zeros(6)
        v[i] = xup[i] @ v[model.parent[i]] + vji
        vj[i] = vji
    return xup, v, vj


def _check_dims(model: CompiledArticulation, *vectors) -> None:
    for vec in vectors:
        if np.asarray(vec).reshape(-1).size != model.n_dof:
            raise DimensionMismatch(
                f"expected {model.n_dof} dof entries, got {np.asarray(vec).size}")


def aba_full(model: CompiledArticulation, q: np.ndarray, qd: np.ndarray,
             tau: np.ndarray, gravity=GRAVITY, base_rotation: np.ndarray | None = None,
             f_ext: dict[int, np.ndarray] | None = None,
             extra_inertia: dict[int, np.ndarray] | None = None):
    """Articulated-body forward dynamics.

    tau holds generalized forces per dof (damping and friction already folded
    in by the caller). f_ext maps link index to a body-frame spatial force
    about the link origin; extra_inertia maps link index to an additional 6x6
    spatial inertia (used to merge rigid attachments). Returns (qdd, aux)
    where aux carries the per-link velocities and bias-free accelerations for
    reuse by callers.
    """
    _check_dims(model, q, qd, tau)
    n = len(model.link_names)
    xup, v, vj = _velocity_pass(model, q, qd)
    ia: list[np.ndarray] = [None] * n
    pa: list[np.ndarray] = [None] * n
    c: list[np.ndarray] = [np.zeros(6)] * n
    for i in range(1, n):
        inertia = model.inertia66[i]
        if extra_inertia and i in extra_inertia:
            inertia = inertia + extra_inertia[i]
        ia[i] = inertia.copy()
        c[i] = spatial_cross_motion(v[i], vj[i])
        pa[i] = spatial_cross_force(v[i], inertia @ v[i])
        if f_ext and i in f_ext:
            pa[i] = pa[i] - f_ext[i]

    u_of: list[np.ndarray | None] = [None] * n
    dinv: list[np.ndarray | None] = [None] * n
    ubias: list[np.ndarray | None] = [None] * n
    for i in range(n - 1, 0, -1):
        s = model.subspace[i]
        p = model.parent[i]
        if s is not None:
            u = ia[i] @ s
            d = s.T @ u
            det = float(np.linalg.det(d)) if d.shape[0] > 1 else float(d[0, 0])
            if not math.isfinite(det) or abs(det) < 1e-12:
                raise SingularInertia(
                    f"articulated inertia singular at joint {model.joints[i].name!r}")
            di = np.linalg.inv(d)
            ub = tau[model.dof_slice[i]] - s.T @ pa[i]
            u_of[i], dinv[i], ubias[i] = u, di, ub
            ia_star = ia[i] - u @ di @ u.T
            pa_star = pa[i] + ia_star @ c[i] + u @ (di @ ub)
        else:
            ia_star = ia[i]
            pa_star = pa[i] + ia[i] @ c[i]
        if p >= 0:
            if p > 0:
                ia[p] = ia[p] + xup[i].T @ ia_star @ xup[i]
                pa[p] = pa[p] + xup[i].T @ pa_star
            # forces reaching the fixed root are absorbed by the anchor

    g = np.asarray(gravity, dtype=float).reshape(3)
    if base_rotation is not None:
        g = base_rotation.T @ g
    a: list[np.ndarray] = [np.concatenate([np.zeros(3), -g])] + [np.zeros(6)] * (n - 1)
    qdd = np.zeros(model.n_dof)
    for i in range(1, n):
        s = model.subspace[i]
        ai = xup[i] @ a[model.parent[i]] + c[i]
        if s is not None:
            qdd_i = dinv[i] @ (ubias[i] - u_of[i].T @ ai)
            qdd[model.dof_slice[i]] = qdd_i
            ai = ai + s @ qdd_i
        a[i] = ai
    return qdd, {"xup": xup, "v": v, "a": a}


def rnea(model: CompiledArticulation, q: np.ndarray, qd: np.ndarray,
         qdd: np.ndarray, gravity=GRAVITY, base_rotation: np.ndarray | None = None,
         f_ext: dict[int, np.ndarray] | None = None,
         extra_inertia: dict[int, np.ndarray] | None = None) -> np.ndarray:
    """Recursive Newton-Euler inverse dynamics: generalized forces producing
    qdd at (q, qd) under gravity. Pure rigid-body term: no joint damping or
    friction."""
    _check_dims(model, q, qd, qdd)
    n = len(model.link_names)
    xup, v, vj = _velocity_pass(model, q, qd)
    g = np.asarray(gravity, dtype=float).reshape(3)
    if base_rotation is not None:
        g = base_rotation.T @ g
    a: list[np.ndarray] = [np.concatenate([np.zeros(3), -g])] + [np.zeros(6)] * (n - 1)
    f: list[np.ndarray] = [np.zeros(6)] * n
    for i in range(1, n):
        s = model.subspace[i]
        sqdd = s @ qdd[model.dof_slice[i]] if s is not None else np.zeros(6)
        a[i] = xup[i] @ a[model.parent[i]] + sqdd + spatial_cross_motion(v[i], vj[i])
        inertia = model.inertia66[i]
        if extra_inertia and i in extra_inertia:
            inertia = inertia + extra_inertia[i]
        f[i] = inertia @ a[i] + spatial_cross_force(v[i], inertia @ v[i])
        if f_ext and i in f_ext:
            f[i] = f[i] - f_ext[i]

    tau = np.zeros(model.n_dof)
    for i in range(n - 1, 0, -1):
        s = model.subspace[i]
        if s is not None:
            tau[model.dof_slice[i]] = s.T @ f[i]
        p = model.parent[i]
        if p > 0:
            f[p] = f[p] + xup[i].T @ f[i]
    return tau


def friction_torque(model: CompiledArticulation, qd: np.ndarray) -> np.ndarray:
    """Joint-level dissipation: viscous damping plus smoothed Coulomb friction."""
    return -model.damping * qd - model.friction * np.tanh(qd / FRICTION_VEL_SCALE)


def forward_dynamics(spec: ArticulationSpec, state: ArticulationState,
                     tau: np.ndarray, gravity=GRAVITY) -> np.ndarray:
    """Generalized accelerations under gravity, applied torques, joint damping
    and smoothed Coulomb friction."""
    model = compile_articulation(spec)
    tau = np.asarray(tau, dtype=float).reshape(-1)
    _check_dims(model, state.q, state.qd, tau)
    total = tau + friction_torque(model, state.qd)
    qdd, _ = aba_full(model, state.q, state.qd, total, gravity)
    return qdd


def inverse_dynamics(spec: ArticulationSpec, state: ArticulationState,
                     qdd: np.ndarray, gravity=GRAVITY) -> np.ndarray:
    """Joint torques needed to produce qdd at the given state (gravity
    included; damping and friction excluded)."""
    model = compile_articulation(spec)
    qdd = np.asarray(qdd, dtype=float).reshape(-1)
    return rnea(model, state.q, state.qd, qdd, gravity)


def link_world_poses(model: CompiledArticulation, q: np.ndarray,
                     base: Transform) -> list[Transform]:
    """World pose per link, in compiled link order."""
    pose_in_parent, _ = _joint_transforms(model, q)
    poses: list[Transform] = [base] + [None] * (len(model.link_names) - 1)
    for i in range(1, len(model.link_names)):
        poses[i] = poses[model.parent[i]] @ pose_in_parent[i]
    return poses


def link_world_twists(model: CompiledArticulation, q: np.ndarray, qd: np.ndarray,
                      base: Transform) -> list[np.ndarray]:
    """World-frame (angular; linear) velocity of each link-frame origin."""
    return link_world_poses_twists(model, q, qd, base)[1]


def link_world_poses_twists(model: CompiledArticulation, q: np.ndarray, qd: np.ndarray,
                            base: Transform):
    """World pose and world (angular; linear) origin velocity per link, from
    one shared kinematic pass."""
    pose_in_parent, xup = _joint_transforms(model, q)
    n = len(model.link_names)
    poses: list[Transform] = [base] + [None] * (n - 1)
    v: list[np.ndarray] = [np.zeros(6)] * n
    twists: list[np.ndarray] = [np.zeros(6)] * n
    for i in range(1, n):
        p = model.parent[i]
        poses[i] = poses[p] @ pose_in_parent[i]
        s = model.subspace[i]
        vji = s @ qd[model.dof_slice[i]] if s is not None else np.zeros(6)
        v[i] = xup[i] @ v[p] + vji
        r = poses[i].matrix()
        twists[i] = np.concatenate([r @ v[i][:3], r @ v[i][3:]])
    return poses, twists


def link_accelerations(model: CompiledArticulation, q: np.ndarray, qd: np.ndarray,
                       qdd: np.ndarray, base: Transform) -> list[np.ndarray]:
    """World-frame (angular acceleration; classical linear acceleration of the
    link-frame origin point) per link, gravity not included."""
    _check_dims(model, q, qd, qdd)
    n = len(model.link_names)
    xup, v, vj = _velocity_pass(model, q, qd)
    a: list[np.ndarray] = [np.zeros(6)] * n
    for i in range(1, n):
        s = model.subspace[i]
        sqdd = s @ qdd[model.dof_slice[i]] if s is not None else np.zeros(6)
        a[i] = xup[i] @ a[model.parent[i]] + sqdd + spatial_cross_motion(v[i], vj[i])
    poses = link_world_poses(model, q, base)
    out = []
    for i, pose in enumerate(poses):
        r = pose.matrix()
        lin_classical = a[i][3:] + np.cross(v[i][:3], v[i][3:])
        out.append(np.concatenate([r @ a[i][:3], r @ lin_classical]))
    return out
