"""Door-opening and drawer-pulling task environments.

Each task pairs a procedural cabinet with a flying gripper: a single free
6-dof body (translation x/y/z then yaw/pitch/roll joints) with gravity
disabled, initialized rigidly attached to the target part's handle. Policies
command the gripper in Cartesian space (velocity or pose targets realized as
wrenches at the gripper body), and success is reaching 90% of the target
joint's annotated motion range; driving the joint the opposite way beyond a
tolerance, or tearing the gripper off the handle, fails the episode.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, replace

import numpy as np

from .asset.cabinet import CabinetConfig, GroundTruthMotion, generate_cabinet
from .asset.model import (ArticulationSpec, BoxPrimitive, JointKind, JointSpec,
                          LinkSpec)
from .dynamics.scene import AttachmentConstraint, Scene, SceneConfig
from .errors import InvalidConfig
from .sensors.camera import CameraIntrinsics, SensorFrame, look_at, render
from .spatial import SpatialInertia, Transform, axis_angle_to_quaternion, quat_multiply, quat_rotate, quat_to_rotvec

GRIPPER_MASS = 1.0
GRIPPER_WORKSPACE = 10.0

# Cartesian servo gains for the gripper command interface.
KV_LIN, KV_ANG = 150.0, 4.0
KP_POS, KD_POS = 400.0, 40.0
KP_ROT, KD_ROT = 12.0, 1.2


class TaskKind(enum.Enum):
    OPEN_DOOR = "door"
    PULL_DRAWER = "drawer"


class Outcome(enum.Enum):
    SUCCESS = "success"
    FAILURE = "failure"
    TIMEOUT = "timeout"


@dataclass(frozen=True)
class TaskConfig:
    success_fraction: float = 0.9
    max_steps: int = 2000
    dt: float = 1.0 / 500.0
    opposite_fraction: float = 0.02     # tolerance as a fraction of the range
    break_threshold: float = 500.0
    pull_speed: float = 0.35            # m/s, drawer policy
    door_lead: float = 0.3              # rad the door servo leads the hinge
    crack_angle: float = 0.1            # rad before switching to arc servo
    flip_axis: bool = False             # drive policies with a reversed axis
    cabinet: CabinetConfig | None = None


@dataclass(frozen=True)
class TaskSpec:
    """Task contract: which joint of which articulation must move how far."""

    kind: TaskKind
    articulation: ArticulationSpec      # annotated limits (no reverse slack)
    target_joint: str
    success_fraction: float = 0.9
    max_steps: int = 2000
    opposite_tolerance: float = 0.0     # rad or m

    def __post_init__(self):
        if not (0.0 < self.success_fraction <= 1.0):
            raise InvalidConfig(f"success_fraction must be in (0, 1], got {self.success_fraction}")
        joint = self.articulation.joint(self.target_joint)
        want = JointKind.HINGE if self.kind == TaskKind.OPEN_DOOR else JointKind.SLIDER
        if joint.kind != want:
            raise InvalidConfig(
                f"{self.kind.value} task requires a {want.value} joint, "
                f"{self.target_joint!r} is {joint.kind.value}")


@dataclass
class TaskResult:
    outcome: Outcome | None             # None while the episode is running
    final_fraction: float
    steps_used: int
    gripper_detached: bool

    def to_json_line(self, seed: int, kind: TaskKind) -> str:
        return json.dumps({"seed": seed, "kind": kind.value,
                           "outcome": self.outcome.value if self.outcome else "running",
                           "final_fraction": self.final_fraction,
                           "steps": self.steps_used})


@dataclass(frozen=True)
class MobilityObservation:
    """Motion-axis pose plus the target part's averaged surface normal and
    joint position/velocity."""

    pivot: np.ndarray
    direction: np.ndarray
    part_normal: np.ndarray
    joint_position: float
    joint_velocity: float


@dataclass(frozen=True)
class RawObservation:
    q: np.ndarray
    qd: np.ndarray
    gripper_pose: np.ndarray   # quaternion (4) + translation (3)
    gripper_twist: np.ndarray  # angular (3) + linear (3), world

    def vector(self) -> np.ndarray:
        return np.concatenate([self.q, self.qd, self.gripper_pose, self.gripper_twist])


@dataclass(frozen=True)
class VisualObservation:
    frame: SensorFrame
    target_mask: np.ndarray


class Repr(enum.Enum):
    RAW = "raw"
    MOBILITY = "mobility"
    VISUAL = "visual"


@dataclass
class GripperCommand:
    """Cartesian command for the flying gripper: either a twist target
    (velocity mode) or a pose target (position mode)."""

    linear_velocity: np.ndarray | None = None
    angular_velocity: np.ndarray | None = None
    target_pose: Transform | None = None


def make_gripper_spec() -> ArticulationSpec:
    """Free 6-dof gripper: sliders along world x/y/z, then yaw/pitch/roll
    hinges, ending in a palm-and-fingers body."""
    tiny = SpatialInertia(1e-3, inertia=np.eye(3) * 1e-7)
    links = [LinkSpec("anchor", tiny)]
    joints = []
    chain = [
        ("tx", JointKind.SLIDER, (1.0, 0.0, 0.0), (-GRIPPER_WORKSPACE, GRIPPER_WORKSPACE)),
        ("ty", JointKind.SLIDER, (0.0, 1.0, 0.0), (-GRIPPER_WORKSPACE, GRIPPER_WORKSPACE)),
        ("tz", JointKind.SLIDER, (0.0, 0.0, 1.0), (-GRIPPER_WORKSPACE, GRIPPER_WORKSPACE)),
        ("rz", JointKind.HINGE, (0.0, 0.0, 1.0), (-2.0 * math.pi, 2.0 * math.pi)),
        ("ry", JointKind.HINGE, (0.0, 1.0, 0.0), (-2.0 * math.pi, 2.0 * math.pi)),
        ("rx", JointKind.HINGE, (1.0, 0.0, 0.0), (-2.0 * math.pi, 2.0 * math.pi)),
    ]
    parent = "anchor"
    for name, kind, axis, (lo, hi) in chain[:-1]:
        child = f"stage_{name}"
        links.append(LinkSpec(child, tiny))
        joints.append(JointSpec(f"g_{name}", kind, parent, child, axis=axis,
                                limit_lower=lo, limit_upper=hi, damping=0.5))
        parent = child
    palm = BoxPrimitive((0.035, 0.04, 0.045), Transform(translation=(0.0, 0.0, 0.0)))
    finger_a = BoxPrimitive((0.05, 0.012, 0.012), Transform(translation=(0.075, 0.0, 0.03)))
    finger_b = BoxPrimitive((0.05, 0.012, 0.012), Transform(translation=(0.075, 0.0, -0.03)))
    body = LinkSpec("body", SpatialInertia(GRIPPER_MASS, inertia=np.eye(3) * 2e-3),
                    (palm, finger_a, finger_b), "gripper")
    links.append(body)
    name, kind, axis, (lo, hi) = chain[-1]
    joints.append(JointSpec(f"g_{name}", kind, parent, "body", axis=axis,
                            limit_lower=lo, limit_upper=hi, damping=0.5))
    return ArticulationSpec("gripper", tuple(links), tuple(joints), "anchor")


@dataclass
class Task:
    """A running episode: the task contract plus the scene it plays out in."""

    spec: TaskSpec
    scene: Scene
    seed: int
    cabinet: str
    gripper: str
    truth: GroundTruthMotion
    constraint: AttachmentConstraint
    config: TaskConfig
    steps: int = 0
    _succeeded: bool = False
    _dof_start: int = 0

    @property
    def target_range(self) -> tuple[float, float]:
        j = self.spec.articulation.joint(self.spec.target_joint)
        return j.limit_lower, j.limit_upper

    def fraction(self) -> float:
        lo, hi = self.target_range
        q = self.scene.state(self.cabinet).q[self._dof_start]
        return (q - lo) / (hi - lo)


def make_task(kind: TaskKind, seed: int, config: TaskConfig | None = None) -> Task:
    """Build a task scene: procedural cabinet, flying gripper with gravity
    disabled, gripper attached at the target handle's grasp frame."""
    config = config or TaskConfig()
    if config.cabinet is not None:
        cab_config = config.cabinet
    elif kind == TaskKind.PULL_DRAWER:
        cab_config = CabinetConfig(n_drawers=1 + seed % 3, n_doors=0)
    else:
        cab_config = CabinetConfig(n_drawers=0, n_doors=1 + seed % 2)
    pure_spec, truths = generate_cabinet(cab_config, seed)

    want = JointKind.SLIDER if kind == TaskKind.PULL_DRAWER else JointKind.HINGE
    candidates = [t for t in truths if t.kind == want]
    if not candidates:
        raise InvalidConfig(f"cabinet has no {want.value} joint for a {kind.value} task")
    truth = candidates[0]

    lo, hi = truth.limit_lower, truth.limit_upper
    tol_abs = config.opposite_fraction * (hi - lo)
    task_spec = TaskSpec(kind=kind, articulation=pure_spec, target_joint=truth.joint,
                         success_fraction=config.success_fraction,
                         max_steps=config.max_steps, opposite_tolerance=tol_abs)

    # the scene joint gets slack below the annotated range so opposite-direction
    # motion is physically representable
    target = pure_spec.joint(truth.joint)
    scene_spec = pure_spec.with_joint(replace(target, limit_lower=lo - 2.0 * tol_abs))

    scene = Scene(SceneConfig(dt=config.dt))
    cabinet = scene.add_articulation(scene_spec, name="cabinet")
    grip_spec = make_gripper_spec()
    grasp = Transform(translation=truth.handle_center)
    gripper = scene.add_articulation(grip_spec, base=grasp, gravity_enabled=False,
                                     name="gripper")
    constraint = scene.attach(cabinet, truth.part_link, gripper, "body",
                              break_threshold=config.break_threshold)
    task = Task(spec=task_spec, scene=scene, seed=seed, cabinet=cabinet,
                gripper=gripper, truth=truth, constraint=constraint, config=config)
    task._dof_start = scene_spec.dof_index()[truth.joint][0]
    return task


def evaluate_step(task: Task) -> TaskResult:
    """Episode status: Success when the fraction ever reached the threshold
    (latched), Failure on opposite-direction motion beyond tolerance or a
    detached gripper, Timeout at the step budget."""
    fraction = task.fraction()
    if fraction >= task.spec.success_fraction:
        task._succeeded = True
    detached = not task.constraint.active
    lo, hi = task.target_range
    outcome = None
    if task._succeeded:
        outcome = Outcome.SUCCESS
    elif detached or fraction < -task.spec.opposite_tolerance / (hi - lo):
        outcome = Outcome.FAILURE
    elif task.steps >= task.spec.max_steps:
        outcome = Outcome.TIMEOUT
    return TaskResult(outcome=outcome, final_fraction=fraction,
                      steps_used=task.steps, gripper_detached=detached)


def apply_command(task: Task, command: GripperCommand) -> None:
    """Realize a Cartesian gripper command as a wrench on the gripper body."""
    scene = task.scene
    pose = scene.link_pose(task.gripper, "body")
    twist = scene.link_velocity(task.gripper, "body")
    force = np.zeros(3)
    torque = np.zeros(3)
    if command.target_pose is not None:
        tgt = command.target_pose
        force = KP_POS * (tgt.translation - pose.translation) - KD_POS * twist[3:]
        q_err = quat_multiply(tgt.rotation, np.array([pose.rotation[0], -pose.rotation[1],
                                                      -pose.rotation[2], -pose.rotation[3]]))
        torque = KP_ROT * quat_to_rotvec(q_err) - KD_ROT * twist[:3]
    else:
        v_star = command.linear_velocity if command.linear_velocity is not None else np.zeros(3)
        w_star = command.angular_velocity if command.angular_velocity is not None else np.zeros(3)
        force = KV_LIN * (np.asarray(v_star, dtype=float) - twist[3:])
        torque = KV_ANG * (np.asarray(w_star, dtype=float) - twist[:3])
    scene.apply_wrench(task.gripper, "body", force=force, torque=torque,
                       point=pose.translation)


def heuristic_drawer_policy(task: Task) -> GripperCommand:
    """Pull along the ground-truth slider axis at constant speed."""
    axis = task.truth.axis_direction.copy()
    if task.config.flip_axis:
        axis = -axis
    return GripperCommand(linear_velocity=axis * task.config.pull_speed,
                          angular_velocity=np.zeros(3))


def heuristic_door_policy(task: Task) -> GripperCommand:
    """Crack the door along the opening tangent, then servo the gripper along
    the circular arc about the ground-truth hinge axis."""
    q = task.scene.state(task.cabinet).q[task._dof_start]
    axis = task.truth.axis_direction.copy()
    if task.config.flip_axis:
        axis = -axis
    if q < task.config.crack_angle:
        tangent = quat_rotate(axis_angle_to_quaternion(axis, q), task.truth.approach_axis)
        if task.config.flip_axis:
            tangent = -tangent
        return GripperCommand(linear_velocity=tangent * task.config.pull_speed,
                              angular_velocity=axis * (task.config.pull_speed / 0.3))
    lo, hi = task.target_range
    lead = min(q + task.config.door_lead, hi) - 0.0
    rot = axis_angle_to_quaternion(task.truth.axis_direction, lead)
    grasp0 = task.truth.handle_center
    pivot = task.truth.pivot
    target_pos = pivot + quat_rotate(rot, grasp0 - pivot)
    target = Transform(rot, target_pos)
    return GripperCommand(target_pose=target)


def step_task(task: Task, command: GripperCommand | None) -> TaskResult:
    if command is not None:
        apply_command(task, command)
    task.scene.step()
    task.steps += 1
    return evaluate_step(task)


def run_episode(task: Task, policy) -> TaskResult:
    """Drive the policy until Success/Failure/Timeout (success latches)."""
    result = evaluate_step(task)
    while result.outcome is None:
        result = step_task(task, policy(task))
    return result


def policy_for(kind: TaskKind):
    return heuristic_drawer_policy if kind == TaskKind.PULL_DRAWER else heuristic_door_policy


def observe(task: Task, repr_kind: Repr, intrinsics: CameraIntrinsics | None = None):
    """Extract one of the observation representations from the live scene."""
    scene = task.scene
    if repr_kind == Repr.RAW:
        st = scene.state(task.cabinet)
        pose = scene.link_pose(task.gripper, "body")
        twist = scene.link_velocity(task.gripper, "body")
        return RawObservation(q=st.q, qd=st.qd,
                              gripper_pose=np.concatenate([pose.rotation, pose.translation]),
                              gripper_twist=twist)
    if repr_kind == Repr.MOBILITY:
        st = scene.state(task.cabinet)
        base = scene.link_pose(task.cabinet, task.spec.articulation.root_link)
        pivot = base.apply(task.truth.pivot)
        direction = base.apply_vector(task.truth.axis_direction)
        normal = part_average_normal(task)
        start = task._dof_start
        return MobilityObservation(pivot=pivot, direction=direction, part_normal=normal,
                                   joint_position=float(st.q[start]),
                                   joint_velocity=float(st.qd[start]))
    intr = intrinsics or CameraIntrinsics()
    frame = front_view(task, intr)
    mask = frame.segmentation == scene.link_id(task.cabinet, task.truth.part_link)
    return VisualObservation(frame=frame, target_mask=mask)


def front_view(task: Task, intrinsics: CameraIntrinsics) -> SensorFrame:
    spec = task.spec.articulation
    heights = [j.origin.translation[2] for j in spec.joints] or [0.5]
    center = np.array([0.0, 0.0, float(np.mean(heights))])
    eye = center + np.array([2.2, 0.0, 0.3])
    return render(task.scene, look_at(eye, center), intrinsics)


def part_average_normal(task: Task, view_direction=(1.0, 0.0, 0.0)) -> np.ndarray:
    """Area-weighted average of the target part's box-face normals over the
    faces visible from the given viewing side, unit-normalized."""
    view = np.asarray(view_direction, dtype=float)
    link = task.spec.articulation.link(task.truth.part_link)
    pose = task.scene.link_pose(task.cabinet, task.truth.part_link)
    total = np.zeros(3)
    for prim in link.collision:
        if not isinstance(prim, BoxPrimitive):
            continue
        world = pose @ prim.origin
        r = world.matrix()
        he = prim.half_extents
        for axis in range(3):
            for sign in (1.0, -1.0):
                n_world = sign * r[:, axis]
                area = 4.0 * he[(axis + 1) % 3] * he[(axis + 2) % 3]
                w = area * max(0.0, float(np.dot(n_world, view)))
                total += w * n_world
    norm = np.linalg.norm(total)
    if norm < 1e-12:
        return view / np.linalg.norm(view)
    return total / norm


def write_result_log(path, results: list[tuple[int, TaskKind, TaskResult]]) -> None:
    """One JSON line per episode."""
    with open(path, "w", encoding="utf-8") as fh:
        for seed, kind, result in results:
            fh.write(result.to_json_line(seed, kind) + "\n")
