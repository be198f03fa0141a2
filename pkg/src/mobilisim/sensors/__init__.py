"""Depth/normal/segmentation camera, point-cloud lifting, hemisphere view
sampling, IMU readings, and the binary frame dump format."""

from .camera import (DEFAULT_FOCAL, DEFAULT_RESOLUTION, CameraIntrinsics,
                     SensorFrame, lift_point_cloud, look_at, project_points,
                     render, sample_hemisphere_views)
from .imu import ImuReading, read_imu
from .msf import read_frame, write_frame

__all__ = [
    "CameraIntrinsics", "DEFAULT_FOCAL", "DEFAULT_RESOLUTION", "ImuReading",
    "SensorFrame", "lift_point_cloud", "look_at", "project_points", "read_frame",
    "read_imu", "render", "sample_hemisphere_views", "write_frame",
]
