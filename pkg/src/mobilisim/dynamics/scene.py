"""Simulation scene: articulations in dynamic or kinematic mode, controllers,
rigid attachment constraints, and semi-implicit Euler stepping.

A scene is single-writer: one agent calls step/set at a time; state reads
between steps see immutable snapshots. Dynamic articulations integrate
accelerations from the articulated-body recursion; kinematic articulations
follow externally set configurations and do not respond to forces. An
attachment welds one articulation (through a designated link) into a holder
link: the attached body's inertia merges into the holder's recursion, and
the constraint breaks when its transmitted force exceeds a threshold.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from typing import TYPE_CHECKING

from ..asset.model import ArticulationSpec
from ..errors import UnknownLink, ValidationError, WrongMode

if TYPE_CHECKING:  # control imports dynamics.algorithms; scene defers the reverse
    from ..control import Controller, ControllerSpec
from ..kinematics import ArticulationState, jacobian
from ..spatial import Transform, cross3, spatial_cross_force, spatial_transform
from .algorithms import (CompiledArticulation, aba_full, compile_articulation,
                         friction_torque, link_world_poses, link_world_poses_twists)

DEFAULT_DT = 1.0 / 500.0
DEFAULT_BREAK_FORCE = 500.0


class Mode(enum.Enum):
    DYNAMIC = "dynamic"
    KINEMATIC = "kinematic"


@dataclass(frozen=True)
class SceneConfig:
    gravity: tuple[float, float, float] = (0.0, 0.0, -9.81)
    dt: float = DEFAULT_DT

    def __post_init__(self):
        if not (0.0 < self.dt <= 0.1):
            raise ValidationError(f"dt must be in (0, 0.1], got {self.dt}")


@dataclass
class AttachmentConstraint:
    """Frozen relative pose welding `attached_art` (via one of its links) to a
    holder link, possibly across articulations."""

    holder_art: str
    holder_link: str
    attached_art: str
    attached_link: str
    relative: Transform                     # attached link pose in holder link frame
    break_threshold: float = DEFAULT_BREAK_FORCE
    active: bool = True
    # precomputed at attach time
    inertia_attached: np.ndarray | None = None   # total inertia, attached-link frame
    inertia_holder: np.ndarray | None = None     # same, expressed in holder frame
    local_anchor_inv: Transform | None = None    # inv(attached link pose in its base)
    rel_link_poses: list[Transform] | None = None  # holder link <- each attached link
    x_relative: np.ndarray | None = None         # spatial_transform(relative)
    applied_wrench: np.ndarray = field(default_factory=lambda: np.zeros(6))


class _Articulation:
    def __init__(self, name: str, spec: ArticulationSpec, base: Transform,
                 mode: Mode, gravity_enabled: bool):
        self.name = name
        self.spec = spec
        self.model: CompiledArticulation = compile_articulation(spec)
        self.base = base
        self.base_rot = base.matrix()
        self.mode = mode
        self.gravity_enabled = gravity_enabled
        self.q = np.zeros(spec.dof)
        self.qd = np.zeros(spec.dof)
        self.last_qdd = np.zeros(spec.dof)
        self.poses: list[Transform] = link_world_poses(self.model, self.q, base)
        self.twists: list[np.ndarray] = [np.zeros(6) for _ in self.model.link_names]
        self.controllers: list = []
        self.pending_q: np.ndarray | None = None
        self.slaved_by: AttachmentConstraint | None = None
        self.wrench_world: dict[int, np.ndarray] = {}
        self._aux = None

    def link_idx(self, link: str) -> int:
        try:
            return self.model.link_index[link]
        except KeyError:
            raise UnknownLink(f"articulation {self.name!r} has no link {link!r}") from None

    def refresh_caches(self) -> None:
        self.poses, self.twists = link_world_poses_twists(self.model, self.q,
                                                          self.qd, self.base)


class Scene:
    """Container and stepper for articulations sharing one clock."""

    def __init__(self, config: SceneConfig | None = None):
        self.config = config or SceneConfig()
        self.time = 0.0
        self.arts: dict[str, _Articulation] = {}
        self.constraints: list[AttachmentConstraint] = []
        self.events: list[dict] = []
        self._link_ids: dict[tuple[str, str], int] = {}
        self._id_to_link: dict[int, tuple[str, str]] = {}
        self._next_link_id = 1

    # -- construction --------------------------------------------------------

    def add_articulation(self, spec: ArticulationSpec, base: Transform | None = None,
                         mode: Mode = Mode.DYNAMIC, gravity_enabled: bool = True,
                         name: str | None = None) -> str:
        name = name or spec.name
        if name in self.arts:
            raise ValidationError(f"articulation {name!r} already in scene")
        art = _Articulation(name, spec, base or Transform.identity(), mode, gravity_enabled)
        self.arts[name] = art
        for link in art.model.link_names:
            self._link_ids[(name, link)] = self._next_link_id
            self._id_to_link[self._next_link_id] = (name, link)
            self._next_link_id += 1
        return name

    def add_controller(self, art_name: str, spec: "ControllerSpec") -> "Controller":
        from ..control import Controller
        art = self._art(art_name)
        ctrl = Controller(art.spec, spec)
        art.controllers.append(ctrl)
        return ctrl

    # -- accessors -----------------------------------------------------------

    def _art(self, name: str) -> _Articulation:
        if name not in self.arts:
            raise UnknownLink(f"no articulation named {name!r}")
        return self.arts[name]

    def state(self, name: str) -> ArticulationState:
        art = self._art(name)
        return ArticulationState(art.q.copy(), art.qd.copy())

    def set_state(self, name: str, q, qd=None) -> None:
        """Directly overwrite an articulation's coordinates (setup helper)."""
        art = self._art(name)
        art.q = np.asarray(q, dtype=float).reshape(art.model.n_dof).copy()
        if qd is not None:
            art.qd = np.asarray(qd, dtype=float).reshape(art.model.n_dof).copy()
        art.refresh_caches()
        self._update_slaved()

    def link_pose(self, art_name: str, link: str) -> Transform:
        art = self._art(art_name)
        return art.poses[art.link_idx(link)]

    def link_velocity(self, art_name: str, link: str) -> np.ndarray:
        """World (angular; linear) velocity of the link-frame origin."""
        art = self._art(art_name)
        return art.twists[art.link_idx(link)].copy()

    def link_id(self, art_name: str, link: str) -> int:
        return self._link_ids[(art_name, link)]

    def link_of_id(self, link_id: int) -> tuple[str, str]:
        return self._id_to_link[link_id]

    def last_qdd(self, name: str) -> np.ndarray:
        return self._art(name).last_qdd.copy()

    def fk(self, name: str) -> dict[str, Transform]:
        art = self._art(name)
        return {link: art.poses[i] for i, link in enumerate(art.model.link_names)}

    def collision_geometry(self):
        """Yield (link_id, primitive, world transform) over every link."""
        for name, art in self.arts.items():
            for i, link_name in enumerate(art.model.link_names):
                link = art.spec.link(link_name)
                pose = art.poses[i]
                lid = self._link_ids[(name, link_name)]
                for prim in link.collision:
                    yield lid, prim, pose @ prim.origin

    # -- commands ------------------------------------------------------------

    def set_kinematic_state(self, name: str, q) -> None:
        """Queue a configuration for a kinematic articulation; it is applied
        at the next step with velocity from finite differences."""
        art = self._art(name)
        if art.mode != Mode.KINEMATIC:
            raise WrongMode(f"articulation {name!r} is not kinematic")
        art.pending_q = np.asarray(q, dtype=float).reshape(art.model.n_dof).copy()

    def apply_wrench(self, art_name: str, link: str, force, torque=(0.0, 0.0, 0.0),
                     point=None) -> None:
        """Accumulate a world-frame wrench on a link for the next step. The
        force acts at `point` (world; defaults to the link origin). Wrenches
        on an attached articulation route through its holder link."""
        art = self._art(art_name)
        idx = art.link_idx(link)
        force = np.asarray(force, dtype=float).reshape(3)
        torque = np.asarray(torque, dtype=float).reshape(3)
        pose = art.poses[idx]
        p = pose.translation if point is None else np.asarray(point, dtype=float).reshape(3)

        constraint = art.slaved_by
        if constraint is not None and constraint.active:
            about_att = np.concatenate([torque + cross3(p - pose.translation, force), force])
            constraint.applied_wrench = constraint.applied_wrench + about_att
            holder = self._art(constraint.holder_art)
            hidx = holder.link_idx(constraint.holder_link)
            hpose = holder.poses[hidx]
            n_o = torque + cross3(p - hpose.translation, force)
            acc = holder.wrench_world.setdefault(hidx, np.zeros(6))
            acc += np.concatenate([n_o, force])
            return

        n_o = torque + cross3(p - pose.translation, force)
        acc = art.wrench_world.setdefault(idx, np.zeros(6))
        acc += np.concatenate([n_o, force])

    def attach(self, holder_art: str, holder_link: str, attached_art: str,
               attached_link: str, relative: Transform | None = None,
               break_threshold: float = DEFAULT_BREAK_FORCE) -> AttachmentConstraint:
        """Weld `attached_art` onto a holder link with a frozen relative pose
        (default: the current relative pose). The attached articulation's
        internal configuration freezes while attached."""
        holder = self._art(holder_art)
        attached = self._art(attached_art)
        if holder is attached:
            raise ValidationError("cannot attach an articulation to itself")
        if attached.slaved_by is not None:
            raise ValidationError(f"{attached_art!r} is already attached")
        hidx = holder.link_idx(holder_link)
        aidx = attached.link_idx(attached_link)
        if relative is None:
            relative = holder.poses[hidx].inverse() @ attached.poses[aidx]

        att_pose_inv = attached.poses[aidx].inverse()
        inertia_att = np.zeros((6, 6))
        rel_link_poses = []
        for i, _ in enumerate(attached.model.link_names):
            rel_i = att_pose_inv @ attached.poses[i]
            rel_link_poses.append(relative @ rel_i)
            x = spatial_transform(rel_i)
            inertia_att += x.T @ attached.model.inertia66[i] @ x
        x_rel = spatial_transform(relative)
        inertia_holder = x_rel.T @ inertia_att @ x_rel

        local = link_world_poses(attached.model, attached.q, Transform.identity())[aidx]
        constraint = AttachmentConstraint(
            holder_art=holder_art, holder_link=holder_link,
            attached_art=attached_art, attached_link=attached_link,
            relative=relative, break_threshold=break_threshold,
            inertia_attached=inertia_att, inertia_holder=inertia_holder,
            local_anchor_inv=local.inverse(), rel_link_poses=rel_link_poses,
            x_relative=x_rel)
        attached.slaved_by = constraint
        self.constraints.append(constraint)
        self._update_slaved()
        return constraint

    def detach(self, constraint: AttachmentConstraint) -> None:
        if not constraint.active:
            return
        constraint.active = False
        attached = self._art(constraint.attached_art)
        attached.slaved_by = None
        # Recover generalized velocities that best reproduce the rigid twist
        # the holder was imparting.
        aidx = attached.link_idx(constraint.attached_link)
        twist = attached.twists[aidx]
        st = ArticulationState(attached.q, np.zeros_like(attached.q))
        jac = jacobian(attached.spec, st, constraint.attached_link,
                       attached.poses[aidx].translation, attached.base)
        qd, *_ = np.linalg.lstsq(jac, twist, rcond=None)
        attached.qd = qd
        attached.refresh_caches()
        self.events.append({"type": "detach", "time": self.time,
                            "articulation": constraint.attached_art})

    # -- stepping ------------------------------------------------------------

    def _gravity_of(self, art: _Articulation) -> np.ndarray:
        if art.gravity_enabled:
            return np.asarray(self.config.gravity, dtype=float)
        return np.zeros(3)

    def _body_f_ext(self, art: _Articulation) -> dict[int, np.ndarray] | None:
        if not art.wrench_world:
            return None
        out = {}
        for idx, w in art.wrench_world.items():
            r = art.poses[idx].matrix()
            out[idx] = np.concatenate([r.T @ w[:3], r.T @ w[3:]])
        return out

    def step(self) -> None:
        """Advance the scene by one dt: apply kinematic targets, compute
        controller torques, run forward dynamics, integrate semi-implicitly,
        clamp joint limits, maintain attachments, and bump the clock."""
        dt = self.config.dt

        for art in self.arts.values():
            if art.mode == Mode.KINEMATIC:
                if art.pending_q is not None:
                    art.qd = (art.pending_q - art.q) / dt
                    art.q = art.pending_q
                    art.pending_q = None
                else:
                    art.qd = np.zeros_like(art.qd)

        # attachment bookkeeping: merged inertia and gravity compensation
        extra_inertia: dict[str, dict[int, np.ndarray]] = {}
        for c in self.constraints:
            if not c.active:
                continue
            holder = self._art(c.holder_art)
            attached = self._art(c.attached_art)
            hidx = holder.link_idx(c.holder_link)
            extra_inertia.setdefault(c.holder_art, {})
            acc = extra_inertia[c.holder_art].setdefault(hidx, np.zeros((6, 6)))
            acc += c.inertia_holder
            g_h = self._gravity_of(holder)
            g_a = self._gravity_of(attached)
            dg = g_a - g_h
            if np.any(dg):
                mass = c.inertia_attached[5, 5]
                aidx = attached.link_idx(c.attached_link)
                apose = attached.poses[aidx]
                com_local = np.array([c.inertia_attached[2, 4], c.inertia_attached[0, 5],
                                      c.inertia_attached[1, 3]]) / mass
                com_world = apose.apply(com_local)
                self.apply_wrench(c.attached_art, c.attached_link,
                                  force=mass * dg, point=com_world)

        # forward dynamics at the pre-step state
        for art in self.arts.values():
            if art.mode != Mode.DYNAMIC or art.slaved_by is not None:
                art._aux = None
                continue
            g = self._gravity_of(art)
            tau = np.zeros(art.model.n_dof)
            for ctrl in art.controllers:
                if not ctrl.ready:
                    continue
                tau += ctrl.compute_torque(ArticulationState(art.q, art.qd), self.time, g)
            tau = np.clip(tau, -art.model.effort, art.model.effort)
            tau = tau + friction_torque(art.model, art.qd)
            qdd, aux = aba_full(art.model, art.q, art.qd, tau, g, art.base_rot,
                                self._body_f_ext(art), extra_inertia.get(art.name))
            art.last_qdd = qdd
            art._aux = aux

        # break-force check (pre-step kinematics and accelerations)
        to_detach = []
        for c in self.constraints:
            if not c.active:
                continue
            holder = self._art(c.holder_art)
            if holder._aux is None:
                continue
            hidx = holder.link_idx(c.holder_link)
            v_att = c.x_relative @ holder._aux["v"][hidx]
            a_att = c.x_relative @ holder._aux["a"][hidx]
            i_att = c.inertia_attached
            f_c = i_att @ a_att + spatial_cross_force(v_att, i_att @ v_att)
            attached = self._art(c.attached_art)
            apose = attached.poses[attached.link_idx(c.attached_link)]
            r = apose.matrix()
            f_app_body = np.concatenate([r.T @ c.applied_wrench[:3], r.T @ c.applied_wrench[3:]])
            f_c = f_c - f_app_body
            if np.linalg.norm(r @ f_c[3:]) > c.break_threshold:
                to_detach.append(c)

        # semi-implicit Euler with hard limit projection
        for art in self.arts.values():
            if art.mode != Mode.DYNAMIC or art.slaved_by is not None:
                continue
            art.qd = art.qd + art.last_qdd * dt
            art.q = art.q + art.qd * dt
            low = art.q < art.model.lower
            high = art.q > art.model.upper
            if low.any():
                art.q[low] = art.model.lower[low]
                art.qd[low] = 0.0
            if high.any():
                art.q[high] = art.model.upper[high]
                art.qd[high] = 0.0

        for art in self.arts.values():
            if art.slaved_by is None:
                art.refresh_caches()
            art.wrench_world = {}
        self._update_slaved()

        for c in self.constraints:
            c.applied_wrench = np.zeros(6)
        for c in to_detach:
            self.detach(c)

        self.time += dt

    def _update_slaved(self) -> None:
        """Re-anchor attached articulations so their welded link tracks the
        holder link rigidly, and propagate the holder's twist."""
        for c in self.constraints:
            if not c.active:
                continue
            holder = self._art(c.holder_art)
            attached = self._art(c.attached_art)
            hidx = holder.link_idx(c.holder_link)
            hpose = holder.poses[hidx]
            attached.base = hpose @ c.relative @ c.local_anchor_inv
            attached.base_rot = attached.base.matrix()
            attached.poses = [hpose @ rel for rel in c.rel_link_poses]
            h_twist = holder.twists[hidx]
            omega = h_twist[:3]
            v_h = h_twist[3:]
            p_h = hpose.translation
            attached.twists = [
                np.concatenate([omega, v_h + cross3(omega, pose.translation - p_h)])
                for pose in attached.poses
            ]
            attached.last_qdd = np.zeros_like(attached.last_qdd)
