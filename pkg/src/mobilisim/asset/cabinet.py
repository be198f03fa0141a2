"""Procedural cabinet generator: a carcass with sliding drawers and hinged
doors, each with a handle and ground-truth motion metadata.

Frame convention: the cabinet front is the plane x = 0 with the outward
normal +x, width along y centered at 0, height along z starting at 0.
Handles are boxes protruding from the movable part's front face; the grasp
frame sits at the handle centroid with the approach axis along the part's
motion direction (for doors, the tangent of the opening arc at the closed
pose).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import InvalidConfig
from ..spatial import SpatialInertia, Transform
from .model import ArticulationSpec, BoxPrimitive, JointKind, JointSpec, LinkSpec

DOOR_RANGE = math.radians(135.0)
DRAWER_TRAVEL_FRACTION = 0.8


@dataclass(frozen=True)
class CabinetConfig:
    """Dimension and property ranges for procedural cabinets. A degenerate
    range (x, x) pins the value."""

    n_drawers: int = 1
    n_doors: int = 0
    depth_range: tuple[float, float] = (0.35, 0.6)
    width_range: tuple[float, float] = (0.5, 0.9)
    height_range: tuple[float, float] = (0.7, 1.2)
    wall_thickness: float = 0.02
    drawer_mass_range: tuple[float, float] = (1.0, 3.0)
    door_mass_range: tuple[float, float] = (1.5, 3.5)
    body_mass: float = 25.0
    friction_range: tuple[float, float] = (0.2, 1.0)
    damping_range: tuple[float, float] = (1.0, 4.0)
    handle_protrusion: float = 0.04
    handle_width: float = 0.1
    handle_thickness: float = 0.02
    # Doors may open against a commanded direction by this much before the
    # physical stop engages; keeps opposite-direction motion representable.
    reverse_slack: float = 0.0


@dataclass(frozen=True)
class GroundTruthMotion:
    """Motion annotation for one movable part, in the cabinet base frame at
    the closed configuration."""

    joint: str
    kind: JointKind
    part_link: str
    pivot: np.ndarray
    axis_direction: np.ndarray
    limit_lower: float
    limit_upper: float
    handle_center: np.ndarray
    approach_axis: np.ndarray


def _box_inertia(mass: float, full_extents) -> np.ndarray:
    a, b, c = full_extents
    return mass / 12.0 * np.diag([b * b + c * c, a * a + c * c, a * a + b * b])


def _combine_parts(parts: list[tuple[float, np.ndarray, np.ndarray]]) -> SpatialInertia:
    """Composite inertia of (mass, com, inertia-about-com) parts, about the
    composite com, expressed in the common frame."""
    total = sum(p[0] for p in parts)
    com = sum(p[0] * p[1] for p in parts) / total
    inertia = np.zeros((3, 3))
    for m, c, i in parts:
        d = c - com
        inertia += i + m * (np.dot(d, d) * np.eye(3) - np.outer(d, d))
    return SpatialInertia(total, com, inertia)


def _boxes_link(name: str, boxes: list[tuple[np.ndarray, np.ndarray]],
                mass: float, semantic: str) -> LinkSpec:
    """Link whose collision is a set of (center, half_extents) boxes, with
    mass distributed by volume."""
    volumes = np.array([8.0 * he[0] * he[1] * he[2] for _, he in boxes])
    masses = mass * volumes / volumes.sum()
    parts = [(m, np.asarray(c, dtype=float), _box_inertia(m, 2.0 * np.asarray(he)))
             for m, (c, he) in zip(masses, boxes)]
    prims = tuple(BoxPrimitive(he, Transform(translation=c)) for c, he in boxes)
    return LinkSpec(name, _combine_parts(parts), prims, semantic)


def _validate(config: CabinetConfig) -> None:
    if config.n_drawers < 0 or config.n_doors < 0 or config.n_doors > 2:
        raise InvalidConfig(f"bad part counts: {config.n_drawers} drawers, {config.n_doors} doors")
    for rname in ("depth_range", "width_range", "height_range",
                  "drawer_mass_range", "door_mass_range", "friction_range", "damping_range"):
        lo, hi = getattr(config, rname)
        if not (0.0 <= lo <= hi):
            raise InvalidConfig(f"{rname} must satisfy 0 <= lo <= hi, got [{lo}, {hi}]")
    for dname in ("depth_range", "width_range", "height_range"):
        if getattr(config, dname)[0] <= 0:
            raise InvalidConfig(f"{dname} must be positive")
    if config.wall_thickness <= 0 or config.wall_thickness >= config.depth_range[0] / 4:
        raise InvalidConfig("wall_thickness out of range")
    if config.body_mass <= 0:
        raise InvalidConfig("body_mass must be positive")
    if config.reverse_slack < 0:
        raise InvalidConfig("reverse_slack must be >= 0")


def generate_cabinet(config: CabinetConfig, seed: int) -> tuple[ArticulationSpec, list[GroundTruthMotion]]:
    """Generate a cabinet articulation plus ground-truth motion annotations.

    Deterministic per (config, seed): the same inputs serialize to identical
    bytes. Every drawer gets limits [0, 0.8 * depth]; every door [0, 135 deg].
    """
    _validate(config)
    rng = np.random.default_rng(seed)
    depth = float(rng.uniform(*config.depth_range))
    width = float(rng.uniform(*config.width_range))
    height = float(rng.uniform(*config.height_range))
    t = config.wall_thickness
    gap = 0.005

    links: list[LinkSpec] = []
    joints: list[JointSpec] = []
    truths: list[GroundTruthMotion] = []

    # Carcass: back, left, right, bottom, top panels (front open).
    half_h = height / 2.0
    body_boxes = [
        (np.array([-depth + t / 2.0, 0.0, half_h]), np.array([t / 2.0, width / 2.0, half_h])),
        (np.array([-depth / 2.0, -(width - t) / 2.0, half_h]),
         np.array([depth / 2.0, t / 2.0, half_h])),
        (np.array([-depth / 2.0, (width - t) / 2.0, half_h]),
         np.array([depth / 2.0, t / 2.0, half_h])),
        (np.array([-depth / 2.0, 0.0, t / 2.0]), np.array([depth / 2.0, width / 2.0, t / 2.0])),
        (np.array([-depth / 2.0, 0.0, height - t / 2.0]),
         np.array([depth / 2.0, width / 2.0, t / 2.0])),
    ]
    links.append(_boxes_link("body", body_boxes, config.body_mass, "body"))

    h_interior = height - 2.0 * t
    w_interior = width - 2.0 * t
    if config.n_drawers > 0 and config.n_doors > 0:
        drawer_band = 0.4 * h_interior
    elif config.n_drawers > 0:
        drawer_band = h_interior
    else:
        drawer_band = 0.0
    door_band = h_interior - drawer_band

    hp, hw, ht = config.handle_protrusion, config.handle_width, config.handle_thickness

    for i in range(config.n_drawers):
        slot = drawer_band / config.n_drawers
        z_hi = t + h_interior - i * slot
        z_lo = z_hi - slot + gap
        face_h = z_hi - z_lo
        face_w = w_interior - 2.0 * gap
        if face_h <= 4.0 * ht or face_w <= 2.0 * hw:
            raise InvalidConfig(f"drawer {i} too small for its handle")
        z_center = 0.5 * (z_lo + z_hi)
        tray_depth = depth - 2.0 * t - 0.01
        name = f"drawer_{i}"
        handle_he = np.array([hp / 2.0, min(hw, 0.4 * face_w) / 2.0, ht / 2.0])
        boxes = [
            (np.array([-t / 2.0, 0.0, 0.0]), np.array([t / 2.0, face_w / 2.0, face_h / 2.0])),
            (np.array([-t - tray_depth / 2.0, 0.0, -0.01]),
             np.array([tray_depth / 2.0, (face_w - 0.02) / 2.0, (face_h - 0.03) / 2.0])),
            (np.array([hp / 2.0, 0.0, 0.0]), handle_he),
        ]
        mass = float(rng.uniform(*config.drawer_mass_range))
        friction = float(rng.uniform(*config.friction_range))
        damping = float(rng.uniform(*config.damping_range))
        links.append(_boxes_link(name, boxes, mass, "drawer"))
        joints.append(JointSpec(
            name=f"{name}_joint", kind=JointKind.SLIDER, parent_link="body", child_link=name,
            origin=Transform(translation=(0.0, 0.0, z_center)), axis=(1.0, 0.0, 0.0),
            limit_lower=-config.reverse_slack, limit_upper=DRAWER_TRAVEL_FRACTION * depth,
            damping=damping, friction=friction))
        truths.append(GroundTruthMotion(
            joint=f"{name}_joint", kind=JointKind.SLIDER, part_link=name,
            pivot=np.array([0.0, 0.0, z_center]), axis_direction=np.array([1.0, 0.0, 0.0]),
            limit_lower=0.0, limit_upper=DRAWER_TRAVEL_FRACTION * depth,
            handle_center=np.array([hp / 2.0, 0.0, z_center]),
            approach_axis=np.array([1.0, 0.0, 0.0])))

    for i in range(config.n_doors):
        if door_band <= 0.1:
            raise InvalidConfig("no height left for doors")
        z_lo, z_hi = t, t + door_band - gap
        z_center = 0.5 * (z_lo + z_hi)
        face_h = z_hi - z_lo
        if config.n_doors == 1:
            door_w = w_interior - 2.0 * gap
            hinge_low_y = bool(rng.integers(0, 2))
            y_hinge = -door_w / 2.0 if hinge_low_y else door_w / 2.0
        else:
            door_w = w_interior / 2.0 - 2.0 * gap
            hinge_low_y = (i == 0)
            y_hinge = -(w_interior / 2.0 - gap) if hinge_low_y else (w_interior / 2.0 - gap)
        s = 1.0 if hinge_low_y else -1.0
        axis = np.array([0.0, 0.0, -1.0]) if hinge_low_y else np.array([0.0, 0.0, 1.0])
        if face_h <= 4.0 * ht or door_w <= 0.12:
            raise InvalidConfig(f"door {i} too small for its handle")
        name = f"door_{i}"
        handle_y = s * (door_w - 0.06)
        handle_he = np.array([hp / 2.0, ht / 2.0, min(hw, 0.4 * face_h) / 2.0])
        boxes = [
            (np.array([-t / 2.0, s * door_w / 2.0, 0.0]),
             np.array([t / 2.0, door_w / 2.0, face_h / 2.0])),
            (np.array([hp / 2.0, handle_y, 0.0]), handle_he),
        ]
        mass = float(rng.uniform(*config.door_mass_range))
        friction = float(rng.uniform(*config.friction_range))
        damping = float(rng.uniform(*config.damping_range))
        links.append(_boxes_link(name, boxes, mass, "rot. door"))
        joints.append(JointSpec(
            name=f"{name}_joint", kind=JointKind.HINGE, parent_link="body", child_link=name,
            origin=Transform(translation=(0.0, y_hinge, z_center)), axis=axis,
            limit_lower=-config.reverse_slack, limit_upper=DOOR_RANGE,
            damping=damping, friction=friction))
        handle_center = np.array([hp / 2.0, y_hinge + handle_y, z_center])
        pivot = np.array([0.0, y_hinge, z_center])
        tangent = np.cross(axis, handle_center - pivot)
        tangent /= np.linalg.norm(tangent)
        truths.append(GroundTruthMotion(
            joint=f"{name}_joint", kind=JointKind.HINGE, part_link=name,
            pivot=pivot, axis_direction=axis.copy(),
            limit_lower=0.0, limit_upper=DOOR_RANGE,
            handle_center=handle_center, approach_axis=tangent))

    spec = ArticulationSpec(name=f"cabinet_{seed}", links=tuple(links),
                            joints=tuple(joints), root_link="body")
    return spec, truths
