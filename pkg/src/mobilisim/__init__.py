"""mobilisim: reduced-coordinate simulation of articulated household objects.

Provides an asset pipeline (URDF subset + mobility annotations + procedural
cabinets), kinematics and dynamics over joint coordinates, a controller
hierarchy, depth/normal/segmentation sensing by ray casting, flying-gripper
manipulation tasks, motion-attribute metrics, and an asynchronous TCP server.
"""

__version__ = "0.1.0"
