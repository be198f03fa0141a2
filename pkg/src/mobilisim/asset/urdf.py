"""URDF subset parser.

Supported elements: robot/link{inertial, collision/geometry{box, sphere,
cylinder}} and joint{type, origin, axis, limit, dynamics}. Joint types map
revolute -> Hinge, continuous -> Hinge clamped to [-2pi, 2pi], prismatic ->
Slider, fixed -> Fixed. Mesh geometry has no primitive fallback and is
rejected. Screw joints are not expressible in URDF; they arrive through the
mobility sidecar.
"""

from __future__ import annotations

import math
import xml.etree.ElementTree as ET

import numpy as np

from ..errors import ParseError, UnsupportedElement, ValidationError
from ..spatial import SpatialInertia, Transform, axis_angle_to_quaternion, quat_multiply
from .model import (ArticulationSpec, BoxPrimitive, CylinderPrimitive, JointKind,
                    JointSpec, LinkSpec, SpherePrimitive)

TWO_PI = 2.0 * math.pi

_JOINT_KINDS = {
    "revolute": JointKind.HINGE,
    "continuous": JointKind.HINGE,
    "prismatic": JointKind.SLIDER,
    "fixed": JointKind.FIXED,
}

# Links without an <inertial> element get a token mass so they stay simulable.
_DEFAULT_MASS = 1e-3
_DEFAULT_INERTIA = np.eye(3) * 1e-7


def _floats(text: str, n: int, what: str) -> np.ndarray:
    parts = text.split()
    if len(parts) != n:
        raise ParseError(f"{what}: expected {n} numbers, got {text!r}")
    try:
        return np.array([float(p) for p in parts])
    except ValueError as exc:
        raise ParseError(f"{what}: {exc}") from exc


def _origin(elem: ET.Element | None, what: str) -> Transform:
    if elem is None:
        return Transform.identity()
    xyz = _floats(elem.get("xyz", "0 0 0"), 3, f"{what} origin xyz")
    rpy = _floats(elem.get("rpy", "0 0 0"), 3, f"{what} origin rpy")
    q = np.array([1.0, 0.0, 0.0, 0.0])
    # URDF rpy is fixed-axis XYZ: R = Rz(yaw) @ Ry(pitch) @ Rx(roll).
    for axis, angle in (((0, 0, 1), rpy[2]), ((0, 1, 0), rpy[1]), ((1, 0, 0), rpy[0])):
        if angle != 0.0:
            q = quat_multiply(q, axis_angle_to_quaternion(axis, angle))
    return Transform(q, xyz)


def _parse_inertial(link: ET.Element, name: str) -> SpatialInertia:
    inertial = link.find("inertial")
    if inertial is None:
        return SpatialInertia(_DEFAULT_MASS, np.zeros(3), _DEFAULT_INERTIA)
    mass_el = inertial.find("mass")
    if mass_el is None:
        raise ValidationError(f"link {name!r}: inertial without mass")
    mass = float(mass_el.get("value", "0"))
    origin = _origin(inertial.find("origin"), f"link {name!r} inertial")
    inertia_el = inertial.find("inertia")
    if inertia_el is None:
        inertia = _DEFAULT_INERTIA.copy()
    else:
        ixx = float(inertia_el.get("ixx", "0"))
        iyy = float(inertia_el.get("iyy", "0"))
        izz = float(inertia_el.get("izz", "0"))
        ixy = float(inertia_el.get("ixy", "0"))
        ixz = float(inertia_el.get("ixz", "0"))
        iyz = float(inertia_el.get("iyz", "0"))
        inertia = np.array([[ixx, ixy, ixz], [ixy, iyy, iyz], [ixz, iyz, izz]])
    r = origin.matrix()
    try:
        return SpatialInertia(mass, origin.translation, r @ inertia @ r.T)
    except ValueError as exc:
        raise ValidationError(f"link {name!r}: {exc}") from exc


def _parse_collisions(link: ET.Element, name: str) -> list:
    prims = []
    for coll in link.findall("collision"):
        geom = coll.find("geometry")
        if geom is None:
            raise ValidationError(f"link {name!r}: collision without geometry")
        origin = _origin(coll.find("origin"), f"link {name!r} collision")
        shape = list(geom)
        if len(shape) != 1:
            raise ValidationError(f"link {name!r}: geometry must hold exactly one shape")
        el = shape[0]
        if el.tag == "box":
            size = _floats(el.get("size", ""), 3, f"link {name!r} box size")
            prims.append(BoxPrimitive(size / 2.0, origin))
        elif el.tag == "sphere":
            prims.append(SpherePrimitive(float(el.get("radius", "0")), origin))
        elif el.tag == "cylinder":
            prims.append(CylinderPrimitive(float(el.get("radius", "0")),
                                           float(el.get("length", "0")) / 2.0, origin))
        elif el.tag == "mesh":
            raise UnsupportedElement(
                f"link {name!r}: mesh collision geometry is not supported; "
                "supply convex primitives instead")
        else:
            raise UnsupportedElement(f"link {name!r}: unknown geometry {el.tag!r}")
    return prims


def parse_urdf(text: str) -> ArticulationSpec:
    """Parse a URDF document into a validated articulation.

    Raises ParseError on malformed XML, ValidationError on structural
    violations (cycles, duplicate names, missing links, inverted limits), and
    UnsupportedElement for geometry outside the primitive subset.
    """
    try:
        root = ET.fromstring(text)
    except ET.ParseError as exc:
        raise ParseError(f"malformed XML: {exc}") from exc
    if root.tag != "robot":
        raise ParseError(f"expected <robot> document, got <{root.tag}>")
    name = root.get("name", "robot")

    links = []
    for link_el in root.findall("link"):
        link_name = link_el.get("name")
        if not link_name:
            raise ValidationError("link without a name")
        links.append(LinkSpec(
            name=link_name,
            inertial=_parse_inertial(link_el, link_name),
            collision=tuple(_parse_collisions(link_el, link_name)),
            semantic_label=link_el.get("semantic", ""),
        ))
    if not links:
        raise ValidationError("document declares no links")

    joints = []
    children = set()
    for joint_el in root.findall("joint"):
        joint_name = joint_el.get("name")
        if not joint_name:
            raise ValidationError("joint without a name")
        jtype = joint_el.get("type", "")
        if jtype not in _JOINT_KINDS:
            raise UnsupportedElement(f"joint {joint_name!r}: unsupported type {jtype!r}")
        kind = _JOINT_KINDS[jtype]
        parent_el = joint_el.find("parent")
        child_el = joint_el.find("child")
        if parent_el is None or child_el is None:
            raise ValidationError(f"joint {joint_name!r}: missing parent or child")
        axis_el = joint_el.find("axis")
        axis = (_floats(axis_el.get("xyz", "1 0 0"), 3, f"joint {joint_name!r} axis")
                if axis_el is not None else np.array([1.0, 0.0, 0.0]))

        lower, upper, effort = 0.0, 0.0, 1000.0
        limit_el = joint_el.find("limit")
        if limit_el is not None:
            lower = float(limit_el.get("lower", "0"))
            upper = float(limit_el.get("upper", "0"))
            effort = float(limit_el.get("effort", "1000"))
        if jtype == "continuous":
            lower, upper = -TWO_PI, TWO_PI
        elif kind in (JointKind.HINGE, JointKind.SLIDER):
            if limit_el is None:
                raise ValidationError(f"joint {joint_name!r}: {jtype} joint requires a limit")
            # unbounded limits clamp to a two-turn range, like continuous joints
            if not math.isfinite(lower):
                lower = -TWO_PI
            if not math.isfinite(upper):
                upper = TWO_PI

        damping, friction = 0.0, 0.0
        dyn_el = joint_el.find("dynamics")
        if dyn_el is not None:
            damping = float(dyn_el.get("damping", "0"))
            friction = float(dyn_el.get("friction", "0"))

        if lower > upper:
            raise ValidationError(
                f"joint {joint_name!r}: inverted limits [{lower}, {upper}]")
        try:
            joints.append(JointSpec(
                name=joint_name, kind=kind,
                parent_link=parent_el.get("link", ""), child_link=child_el.get("link", ""),
                origin=_origin(joint_el.find("origin"), f"joint {joint_name!r}"),
                axis=axis, limit_lower=lower, limit_upper=upper,
                damping=damping, friction=friction, effort=effort,
            ))
        except ValidationError:
            raise
        children.add(child_el.get("link", ""))

    roots = [l.name for l in links if l.name not in children]
    if len(roots) != 1:
        raise ValidationError(f"expected a single root link, found {roots}")
    return ArticulationSpec(name=name, links=tuple(links), joints=tuple(joints),
                            root_link=roots[0])
