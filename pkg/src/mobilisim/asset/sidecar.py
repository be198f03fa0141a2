"""Mobility sidecar: JSON annotations upgrading URDF joints.

The sidecar carries what URDF cannot express: screw joints (with coupling
and pitch), overridden motion limits, and part semantic labels. Format: a
JSON array of entries ``{joint, motion_type?, coupled?, pitch?, limit?,
semantic?}``; unknown fields are ignored.
"""

from __future__ import annotations

import json
from dataclasses import replace

from ..errors import ConflictingLimits, ParseError, UnknownJoint, ValidationError
from .model import ArticulationSpec, JointKind, LinkSpec

_MOTION_TYPES = {"hinge": JointKind.HINGE, "slider": JointKind.SLIDER,
                 "screw": JointKind.SCREW}


def load_sidecar(text: str) -> list[dict]:
    """Parse sidecar JSON; the document must be an array of objects."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"sidecar is not valid JSON: {exc}") from exc
    if not isinstance(doc, list) or not all(isinstance(e, dict) for e in doc):
        raise ParseError("sidecar must be a JSON array of objects")
    return doc


def apply_mobility_sidecar(spec: ArticulationSpec, sidecar: list[dict]) -> ArticulationSpec:
    """Apply sidecar entries to an articulation and re-validate.

    Raises UnknownJoint for entries naming a joint that does not exist and
    ConflictingLimits when an entry's lower limit exceeds its upper.
    """
    joints = {j.name: j for j in spec.joints}
    links = {l.name: l for l in spec.links}
    for entry in sidecar:
        name = entry.get("joint")
        if name not in joints:
            raise UnknownJoint(f"sidecar names unknown joint {name!r}")
        joint = joints[name]

        lower, upper = joint.limit_lower, joint.limit_upper
        if "limit" in entry and entry["limit"] is not None:
            lo, hi = entry["limit"]
            if lo > hi:
                raise ConflictingLimits(
                    f"sidecar joint {name!r}: limit [{lo}, {hi}] inverted")
            lower, upper = float(lo), float(hi)

        kind = joint.kind
        coupled = joint.screw_coupled
        pitch = joint.screw_pitch
        if "motion_type" in entry:
            motion = entry["motion_type"]
            if motion not in _MOTION_TYPES:
                raise ValidationError(
                    f"sidecar joint {name!r}: unknown motion_type {motion!r}")
            kind = _MOTION_TYPES[motion]
        if kind == JointKind.SCREW:
            coupled = bool(entry.get("coupled", False))
            pitch = float(entry["pitch"]) if entry.get("pitch") is not None else None
            if coupled and pitch is None:
                raise ValidationError(
                    f"sidecar joint {name!r}: coupled screw requires a pitch")
            if not coupled:
                pitch = None
        else:
            coupled, pitch = False, None

        joints[name] = replace(joint, kind=kind, limit_lower=lower, limit_upper=upper,
                               screw_coupled=coupled, screw_pitch=pitch)

        if entry.get("semantic"):
            part = links[joint.child_link]
            links[joint.child_link] = LinkSpec(part.name, part.inertial, part.collision,
                                               str(entry["semantic"]))

    return ArticulationSpec(
        name=spec.name,
        links=tuple(links[l.name] for l in spec.links),
        joints=tuple(joints[j.name] for j in spec.joints),
        root_link=spec.root_link,
    )
