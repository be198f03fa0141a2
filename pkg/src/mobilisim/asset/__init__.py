"""Articulated-object descriptions: URDF parsing, mobility annotations,
property randomization, procedural cabinets, and canonical serialization."""

from .cabinet import CabinetConfig, GroundTruthMotion, generate_cabinet
from .codec import parse_spec, serialize_spec
from .model import (ArticulationSpec, BoxPrimitive, CollisionPrimitive,
                    CylinderPrimitive, JointKind, JointSpec, LinkSpec,
                    PhysicalPropertyRanges, SpherePrimitive, randomize_properties)
from .sidecar import apply_mobility_sidecar, load_sidecar
from .urdf import parse_urdf

__all__ = [
    "ArticulationSpec", "BoxPrimitive", "CabinetConfig", "CollisionPrimitive",
    "CylinderPrimitive", "GroundTruthMotion", "JointKind", "JointSpec", "LinkSpec",
    "PhysicalPropertyRanges", "SpherePrimitive", "apply_mobility_sidecar",
    "generate_cabinet", "load_sidecar", "parse_spec", "parse_urdf",
    "randomize_properties", "serialize_spec",
]
