"""Canonical serialization of articulation specs.

The canonical form is JSON with sorted keys and no whitespace, so equal
specs serialize to identical bytes (the determinism tests rely on this).
"""

from __future__ import annotations

import json

from ..errors import ParseError
from .model import ArticulationSpec, articulation_from_dict


def serialize_spec(spec: ArticulationSpec) -> str:
    return json.dumps(spec.to_dict(), sort_keys=True, separators=(",", ":"))


def parse_spec(text: str) -> ArticulationSpec:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"spec document is not valid JSON: {exc}") from exc
    return articulation_from_dict(doc)
