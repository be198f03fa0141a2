"""Reduced-coordinate forward/inverse dynamics and scene time stepping."""

from .algorithms import (FRICTION_VEL_SCALE, CompiledArticulation, aba_full,
                         compile_articulation, forward_dynamics, friction_torque,
                         inverse_dynamics, link_accelerations, link_world_poses,
                         link_world_twists, rnea)
from .scene import (DEFAULT_BREAK_FORCE, DEFAULT_DT, AttachmentConstraint, Mode,
                    Scene, SceneConfig)

__all__ = [
    "AttachmentConstraint", "CompiledArticulation", "DEFAULT_BREAK_FORCE",
    "DEFAULT_DT", "FRICTION_VEL_SCALE", "Mode", "Scene", "SceneConfig",
    "aba_full", "compile_articulation", "forward_dynamics", "friction_torque",
    "inverse_dynamics", "link_accelerations", "link_world_poses",
    "link_world_twists", "rnea",
]
