"""Articulated-object description: links, typed joints, and validation.

An articulation is a set of rigid links connected by joints forming a tree
with a single root. Joint kinds: Fixed (0 dof), Hinge (rotation about an
axis), Slider (translation along an axis), and Screw (rotation plus
translation along the same axis, either coupled through a pitch into one dof
or left as two independent dofs).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np

from ..errors import ValidationError
from ..spatial import SpatialInertia, Transform, _vec3

AXIS_TOL = 1e-9


class JointKind(enum.Enum):
    FIXED = "fixed"
    HINGE = "hinge"
    SLIDER = "slider"
    SCREW = "screw"


# -- collision primitives -----------------------------------------------------

@dataclass(frozen=True, eq=False)
class BoxPrimitive:
    half_extents: np.ndarray
    origin: Transform = field(default_factory=Transform.identity)

    def __post_init__(self):
        he = _vec3(self.half_extents)
        object.__setattr__(self, "half_extents", he)
        if not np.all(he > 0):
            raise ValidationError(f"box half-extents must be positive, got {he}")

    def to_dict(self) -> dict:
        return {"kind": "box", "half_extents": [float(v) for v in self.half_extents],
                "origin": self.origin.to_dict()}


@dataclass(frozen=True, eq=False)
class SpherePrimitive:
    radius: float
    origin: Transform = field(default_factory=Transform.identity)

    def __post_init__(self):
        object.__setattr__(self, "radius", float(self.radius))
        if not self.radius > 0:
            raise ValidationError(f"sphere radius must be positive, got {self.radius}")

    def to_dict(self) -> dict:
        return {"kind": "sphere", "radius": self.radius, "origin": self.origin.to_dict()}


@dataclass(frozen=True, eq=False)
class CylinderPrimitive:
    """Cylinder along the local z-axis, with flat caps."""

    radius: float
    half_length: float
    origin: Transform = field(default_factory=Transform.identity)

    def __post_init__(self):
        object.__setattr__(self, "radius", float(self.radius))
        object.__setattr__(self, "half_length", float(self.half_length))
        if not (self.radius > 0 and self.half_length > 0):
            raise ValidationError("cylinder dimensions must be positive")

    def to_dict(self) -> dict:
        return {"kind": "cylinder", "radius": self.radius,
                "half_length": self.half_length, "origin": self.origin.to_dict()}


CollisionPrimitive = BoxPrimitive | SpherePrimitive | CylinderPrimitive


def primitive_from_dict(d: dict) -> CollisionPrimitive:
    kind = d["kind"]
    origin = Transform.from_dict(d["origin"])
    if kind == "box":
        return BoxPrimitive(np.array(d["half_extents"]), origin)
    if kind == "sphere":
        return SpherePrimitive(d["radius"], origin)
    if kind == "cylinder":
        return CylinderPrimitive(d["radius"], d["half_length"], origin)
    raise ValidationError(f"unknown primitive kind {kind!r}")


# -- joints and links ---------------------------------------------------------

@dataclass(frozen=True, eq=False)
class JointSpec:
    """Typed joint connecting a parent link to a child link.

    `origin` places the joint frame in the parent link frame; `axis` is a
    unit vector in the joint frame. For Hinge and Screw the limits are in
    radians on the rotation coordinate; for Slider they are in meters.
    `screw_pitch` (m/rad) is required exactly when the joint is a coupled
    Screw; an uncoupled Screw has two dofs ordered (rotation, translation)
    with the translation unlimited.
    """

    name: str
    kind: JointKind
    parent_link: str
    child_link: str
    origin: Transform = field(default_factory=Transform.identity)
    axis: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 1.0]))
    limit_lower: float = 0.0
    limit_upper: float = 0.0
    screw_coupled: bool = False
    screw_pitch: float | None = None
    damping: float = 0.0
    friction: float = 0.0
    effort: float = 1000.0

    def __post_init__(self):
        axis = _vec3(self.axis)
        n = np.linalg.norm(axis)
        if abs(n - 1.0) > AXIS_TOL:
            if n < AXIS_TOL:
                raise ValidationError(f"joint {self.name!r}: axis has zero norm")
            axis = axis / n
        object.__setattr__(self, "axis", axis)
        object.__setattr__(self, "limit_lower", float(self.limit_lower))
        object.__setattr__(self, "limit_upper", float(self.limit_upper))
        if self.limit_lower > self.limit_upper:
            raise ValidationError(
                f"joint {self.name!r}: limit_lower {self.limit_lower} > limit_upper {self.limit_upper}")
        if self.kind in (JointKind.HINGE, JointKind.SLIDER):
            if not (np.isfinite(self.limit_lower) and np.isfinite(self.limit_upper)):
                raise ValidationError(f"joint {self.name!r}: limits must be finite")
            if self.screw_coupled or self.screw_pitch is not None:
                raise ValidationError(f"joint {self.name!r}: screw fields on a non-screw joint")
        if self.kind == JointKind.SCREW:
            if self.screw_coupled and self.screw_pitch is None:
                raise ValidationError(f"joint {self.name!r}: coupled screw requires a pitch")
            if not self.screw_coupled and self.screw_pitch is not None:
                raise ValidationError(f"joint {self.name!r}: pitch given for uncoupled screw")
        if self.kind == JointKind.FIXED and (self.screw_coupled or self.screw_pitch is not None):
            raise ValidationError(f"joint {self.name!r}: screw fields on a fixed joint")
        if self.damping < 0 or self.friction < 0 or self.effort < 0:
            raise ValidationError(f"joint {self.name!r}: damping/friction/effort must be >= 0")

    @property
    def dof(self) -> int:
        if self.kind == JointKind.FIXED:
            return 0
        if self.kind == JointKind.SCREW and not self.screw_coupled:
            return 2
        return 1

    def dof_limits(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-dof (lower, upper) arrays; unlimited dofs get +-inf."""
        if self.kind == JointKind.SCREW and not self.screw_coupled:
            return (np.array([self.limit_lower, -np.inf]),
                    np.array([self.limit_upper, np.inf]))
        if self.dof == 0:
            return np.zeros(0), np.zeros(0)
        return np.array([self.limit_lower]), np.array([self.limit_upper])

    def to_dict(self) -> dict:
        return {
            "name": self.name, "kind": self.kind.value,
            "parent_link": self.parent_link, "child_link": self.child_link,
            "origin": self.origin.to_dict(), "axis": [float(v) for v in self.axis],
            "limit_lower": self.limit_lower, "limit_upper": self.limit_upper,
            "screw_coupled": self.screw_coupled, "screw_pitch": self.screw_pitch,
            "damping": self.damping, "friction": self.friction, "effort": self.effort,
        }

    def __eq__(self, other) -> bool:
        return isinstance(other, JointSpec) and self.to_dict() == other.to_dict()


def joint_from_dict(d: dict) -> JointSpec:
    return JointSpec(
        name=d["name"], kind=JointKind(d["kind"]),
        parent_link=d["parent_link"], child_link=d["child_link"],
        origin=Transform.from_dict(d["origin"]), axis=np.array(d["axis"]),
        limit_lower=d["limit_lower"], limit_upper=d["limit_upper"],
        screw_coupled=d["screw_coupled"], screw_pitch=d["screw_pitch"],
        damping=d["damping"], friction=d["friction"], effort=d["effort"],
    )


@dataclass(frozen=True, eq=False)
class LinkSpec:
    """Rigid link: inertial properties, convex collision primitives, and an
    optional category-specific part label (e.g. "drawer", "rot. door")."""

    name: str
    inertial: SpatialInertia = field(default_factory=lambda: SpatialInertia(1.0))
    collision: tuple = ()
    semantic_label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "collision", tuple(self.collision))

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "inertial": {"mass": self.inertial.mass,
                         "com": [float(v) for v in self.inertial.com],
                         "inertia": [[float(v) for v in row] for row in self.inertial.inertia]},
            "collision": [c.to_dict() for c in self.collision],
            "semantic_label": self.semantic_label,
        }

    def __eq__(self, other) -> bool:
        return isinstance(other, LinkSpec) and self.to_dict() == other.to_dict()


def link_from_dict(d: dict) -> LinkSpec:
    inertial = SpatialInertia(d["inertial"]["mass"], np.array(d["inertial"]["com"]),
                              np.array(d["inertial"]["inertia"]))
    return LinkSpec(name=d["name"], inertial=inertial,
                    collision=tuple(primitive_from_dict(c) for c in d["collision"]),
                    semantic_label=d["semantic_label"])


@dataclass(frozen=True, eq=False)
class ArticulationSpec:
    """Validated tree of links and joints with a single root."""

    name: str
    links: tuple
    joints: tuple
    root_link: str

    def __post_init__(self):
        object.__setattr__(self, "links", tuple(self.links))
        object.__setattr__(self, "joints", tuple(self.joints))
        validate_tree(self)

    @property
    def dof(self) -> int:
        return sum(j.dof for j in self.joints)

    def link(self, name: str) -> LinkSpec:
        for l in self.links:
            if l.name == name:
                return l
        raise KeyError(name)

    def joint(self, name: str) -> JointSpec:
        for j in self.joints:
            if j.name == name:
                return j
        raise KeyError(name)

    def link_names(self) -> list[str]:
        return [l.name for l in self.links]

    def dof_index(self) -> dict[str, tuple[int, int]]:
        """Joint name -> (first dof index, dof count), in joint declaration order."""
        out, start = {}, 0
        for j in self.joints:
            out[j.name] = (start, j.dof)
            start += j.dof
        return out

    def dof_limit_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        lowers, uppers = [], []
        for j in self.joints:
            lo, hi = j.dof_limits()
            lowers.append(lo)
            uppers.append(hi)
        if not lowers:
            return np.zeros(0), np.zeros(0)
        return np.concatenate(lowers), np.concatenate(uppers)

    def with_joint(self, joint: JointSpec) -> "ArticulationSpec":
        joints = tuple(joint if j.name == joint.name else j for j in self.joints)
        return ArticulationSpec(self.name, self.links, joints, self.root_link)

    def with_link(self, link: LinkSpec) -> "ArticulationSpec":
        links = tuple(link if l.name == link.name else l for l in self.links)
        return ArticulationSpec(self.name, links, self.joints, self.root_link)

    def to_dict(self) -> dict:
        return {"name": self.name, "root_link": self.root_link,
                "links": [l.to_dict() for l in self.links],
                "joints": [j.to_dict() for j in self.joints]}

    def __eq__(self, other) -> bool:
        return isinstance(other, ArticulationSpec) and self.to_dict() == other.to_dict()


def articulation_from_dict(d: dict) -> ArticulationSpec:
    return ArticulationSpec(
        name=d["name"],
        links=tuple(link_from_dict(l) for l in d["links"]),
        joints=tuple(joint_from_dict(j) for j in d["joints"]),
        root_link=d["root_link"],
    )


def validate_tree(spec: ArticulationSpec) -> None:
    """Check the tree invariants: unique names, resolvable references, every
    non-root link with exactly one parent joint, no cycles, single root."""
    link_names = [l.name for l in spec.links]
    if len(set(link_names)) != len(link_names):
        raise ValidationError(f"{spec.name!r}: duplicate link names")
    joint_names = [j.name for j in spec.joints]
    if len(set(joint_names)) != len(joint_names):
        raise ValidationError(f"{spec.name!r}: duplicate joint names")
    names = set(link_names)
    if spec.root_link not in names:
        raise ValidationError(f"{spec.name!r}: root link {spec.root_link!r} not declared")

    parent_of: dict[str, str] = {}
    for j in spec.joints:
        if j.parent_link not in names:
            raise ValidationError(f"joint {j.name!r}: unknown parent link {j.parent_link!r}")
        if j.child_link not in names:
            raise ValidationError(f"joint {j.name!r}: unknown child link {j.child_link!r}")
        if j.child_link in parent_of:
            raise ValidationError(f"link {j.child_link!r} has more than one parent joint")
        if j.child_link == spec.root_link:
            raise ValidationError(f"root link {spec.root_link!r} may not be a joint child")
        parent_of[j.child_link] = j.parent_link

    for l in link_names:
        if l != spec.root_link and l not in parent_of:
            raise ValidationError(f"link {l!r} is not connected to the tree")

    # Walk each link to the root; revisiting a link on one walk is a cycle.
    for start in parent_of:
        seen = {start}
        cur = start
        while cur != spec.root_link:
            cur = parent_of.get(cur)
            if cur is None:
                raise ValidationError(f"link {start!r} does not reach the root")
            if cur in seen:
                raise ValidationError(f"cycle through links {sorted(seen)}")
            seen.add(cur)


@dataclass(frozen=True)
class PhysicalPropertyRanges:
    """Uniform sampling ranges for joint friction/damping and link density."""

    friction: tuple[float, float] = (0.0, 0.0)
    damping: tuple[float, float] = (0.0, 0.0)
    density_scale: tuple[float, float] = (1.0, 1.0)

    def __post_init__(self):
        for name in ("friction", "damping", "density_scale"):
            lo, hi = getattr(self, name)
            if not (0.0 <= lo <= hi):
                raise ValidationError(f"{name} range must satisfy 0 <= lo <= hi, got [{lo}, {hi}]")


def randomize_properties(spec: ArticulationSpec, ranges: PhysicalPropertyRanges,
                         seed: int) -> ArticulationSpec:
    """Redraw joint friction/damping and scale link masses uniformly from the
    given ranges. Deterministic per seed."""
    rng = np.random.default_rng(seed)
    joints = []
    for j in spec.joints:
        friction = float(rng.uniform(*ranges.friction))
        damping = float(rng.uniform(*ranges.damping))
        joints.append(replace(j, friction=friction, damping=damping))
    links = []
    for l in spec.links:
        scale = float(rng.uniform(*ranges.density_scale))
        links.append(LinkSpec(l.name, l.inertial.scaled(scale), l.collision, l.semantic_label))
    return ArticulationSpec(spec.name, tuple(links), tuple(joints), spec.root_link)
