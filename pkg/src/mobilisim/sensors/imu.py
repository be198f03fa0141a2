"""Inertial measurement unit attached to a link.

Reports the link's world orientation, body-frame angular velocity, and
body-frame specific force (kinematic acceleration minus gravity, so a link
at rest under gravity (0, 0, -9.81) reads +9.81 along body z).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..dynamics.algorithms import aba_full, friction_torque, link_accelerations
from ..dynamics.scene import Mode, Scene
from ..spatial import quat_normalize


@dataclass(frozen=True)
class ImuReading:
    orientation: np.ndarray          # unit quaternion, world <- body
    angular_velocity: np.ndarray     # rad/s, body frame
    linear_acceleration: np.ndarray  # m/s^2, body frame, specific force

    def __post_init__(self):
        object.__setattr__(self, "orientation", quat_normalize(self.orientation))


def read_imu(scene: Scene, art_name: str, link: str) -> ImuReading:
    """Read an IMU mounted at the link-frame origin.

    The acceleration reflects the most recent actuation torques together with
    friction/damping evaluated at the current state; wrenches queued for the
    next step are not anticipated.
    """
    art = scene._art(art_name)
    idx = art.link_idx(link)
    pose = art.poses[idx]
    r = pose.matrix()
    gravity = scene._gravity_of(art)

    if art.mode == Mode.DYNAMIC and art.slaved_by is None:
        tau = np.zeros(art.model.n_dof)
        for ctrl in art.controllers:
            if not ctrl.ready:
                continue
            from ..kinematics import ArticulationState
            tau += ctrl.compute_torque(ArticulationState(art.q, art.qd), scene.time, gravity)
        tau = np.clip(tau, -art.model.effort, art.model.effort)
        qdd, _ = aba_full(art.model, art.q, art.qd, tau + friction_torque(art.model, art.qd),
                          gravity, art.base_rot)
    else:
        qdd = np.zeros(art.model.n_dof)

    acc = link_accelerations(art.model, art.q, art.qd, qdd, art.base)[idx]
    twist = art.twists[idx]
    specific_force = r.T @ (acc[3:] - gravity)
    return ImuReading(orientation=pose.rotation.copy(),
                      angular_velocity=r.T @ twist[:3],
                      linear_acceleration=specific_force)
