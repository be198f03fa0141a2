import math

import numpy as np
import pytest

from mobilisim.asset.model import ArticulationSpec, JointKind, JointSpec, LinkSpec
from mobilisim.control import (ControlMode, Controller, ControllerSpec,
                               TrajectoryPoint, compute_torque, load_trajectory)
from mobilisim.dynamics import Scene, SceneConfig, inverse_dynamics
from mobilisim.errors import (EmptyTrajectory, NonMonotoneTime, NoTrajectoryLoaded,
                              TargetShapeMismatch, UnknownJoint)
from mobilisim.kinematics import ArticulationState
from mobilisim.spatial import SpatialInertia
from oracles import hermite_oracle


def pendulum(damping=0.0, effort=1000.0) -> ArticulationSpec:
    links = (LinkSpec("base", SpatialInertia(1.0)),
             LinkSpec("bob", SpatialInertia(1.0, com=(0, 0, -1.0),
                                            inertia=np.eye(3) * 1e-3)))
    joints = (JointSpec("swing", JointKind.HINGE, "base", "bob", axis=(0, 1, 0),
                        limit_lower=-3.0, limit_upper=3.0, damping=damping,
                        effort=effort),)
    return ArticulationSpec("pendulum", links, joints, "base")


class TestModes:
    def test_position_zero_error_zero_torque(self):
        ctrl = Controller(pendulum(), ControllerSpec(
            joints=("swing",), mode=ControlMode.POSITION, kp=100.0, kd=20.0))
        st = ArticulationState(np.array([0.5]), np.zeros(1))
        tau = compute_torque(ctrl, st, [0.5], sim_time=0.0)
        np.testing.assert_allclose(tau, 0.0, atol=1e-12)

    def test_position_with_gravity_term(self):
        spec = pendulum()
        ctrl = Controller(spec, ControllerSpec(
            joints=("swing",), mode=ControlMode.POSITION, kp=100.0, kd=20.0,
            gravity_compensation=True))
        st = ArticulationState(np.array([math.pi / 2]), np.zeros(1))
        tau = compute_torque(ctrl, st, [math.pi / 2], sim_time=0.0)
        hold = inverse_dynamics(spec, st, np.zeros(1))
        np.testing.assert_allclose(tau, hold, atol=1e-12)

    def test_velocity_linear_law(self):
        ctrl = Controller(pendulum(), ControllerSpec(
            joints=("swing",), mode=ControlMode.VELOCITY, kv=2.0))
        st = ArticulationState(np.zeros(1), np.array([0.0]))
        tau = compute_torque(ctrl, st, [0.5], sim_time=0.0)
        assert tau[0] == pytest.approx(1.0)

    def test_force_passthrough_clamped(self):
        ctrl = Controller(pendulum(effort=10.0), ControllerSpec(
            joints=("swing",), mode=ControlMode.FORCE))
        st = ArticulationState.zeros(1)
        tau = compute_torque(ctrl, st, [500.0], sim_time=0.0)
        assert tau[0] == 10.0

    def test_every_mode_respects_effort_limits(self):
        spec = pendulum(effort=5.0)
        for mode, gains, target in (
                (ControlMode.POSITION, {"kp": 1e4, "kd": 0.0}, [2.9]),
                (ControlMode.VELOCITY, {"kv": 1e4}, [10.0]),
                (ControlMode.FORCE, {}, [1e6])):
            ctrl = Controller(spec, ControllerSpec(joints=("swing",), mode=mode, **gains))
            st = ArticulationState.zeros(1)
            tau = compute_torque(ctrl, st, target, sim_time=0.0)
            assert np.all(np.abs(tau) <= 5.0)

    def test_unreachable_position_target_clamped_and_flagged(self):
        ctrl = Controller(pendulum(), ControllerSpec(
            joints=("swing",), mode=ControlMode.POSITION, kp=10.0))
        ctrl.set_target([100.0])
        assert ctrl.target_clamped
        ctrl.set_target([1.0])
        assert not ctrl.target_clamped

    def test_target_shape_mismatch(self):
        ctrl = Controller(pendulum(), ControllerSpec(
            joints=("swing",), mode=ControlMode.VELOCITY, kv=1.0))
        with pytest.raises(TargetShapeMismatch):
            ctrl.set_target([1.0, 2.0])

    def test_unknown_joint(self):
        with pytest.raises(UnknownJoint):
            Controller(pendulum(), ControllerSpec(joints=("elbow",),
                                                  mode=ControlMode.FORCE))

    def test_per_joint_gain_arrays(self):
        links = (LinkSpec("base", SpatialInertia(1.0)),
                 LinkSpec("a", SpatialInertia(1.0, com=(1, 0, 0))),
                 LinkSpec("b", SpatialInertia(1.0, com=(1, 0, 0))))
        joints = (JointSpec("j0", JointKind.HINGE, "base", "a", axis=(0, 0, 1),
                            limit_lower=-3, limit_upper=3),
                  JointSpec("j1", JointKind.HINGE, "a", "b", axis=(0, 0, 1),
                            limit_lower=-3, limit_upper=3))
        spec = ArticulationSpec("pair", links, joints, "base")
        ctrl = Controller(spec, ControllerSpec(joints=("j0", "j1"),
                                               mode=ControlMode.VELOCITY,
                                               kv=(2.0, 5.0)))
        st = ArticulationState(np.zeros(2), np.zeros(2))
        tau = compute_torque(ctrl, st, [1.0, 1.0], sim_time=0.0)
        np.testing.assert_allclose(tau, [2.0, 5.0])
        with pytest.raises(TargetShapeMismatch):
            ControllerSpec(joints=("j0", "j1"), mode=ControlMode.VELOCITY,
                           kv=(2.0,))
        with pytest.raises(TargetShapeMismatch):
            ControllerSpec(joints=("j0",), mode=ControlMode.POSITION, kp=-1.0)


class TestTrajectory:
    def make(self):
        return Controller(pendulum(), ControllerSpec(
            joints=("swing",), mode=ControlMode.TRAJECTORY, kp=100.0, kd=20.0))

    def test_single_point_holds_forever(self):
        ctrl = self.make()
        load_trajectory(ctrl, [TrajectoryPoint(1.0, [0.7], [0.0], [0.0])])
        for t in (0.0, 1.0, 5.0, 100.0):
            q, qd, qdd = ctrl.reference(t)
            assert q[0] == 0.7 and qd[0] == 0.0 and qdd[0] == 0.0

    def test_midpoint_matches_hermite_oracle(self):
        ctrl = self.make()
        p0 = TrajectoryPoint(0.0, [0.0], [0.5], [0.0])
        p1 = TrajectoryPoint(2.0, [1.0], [-0.25], [0.0])
        load_trajectory(ctrl, [p0, p1])
        for t in (0.5, 1.0, 1.7):
            q, qd, qdd = ctrl.reference(t)
            oq, oqd, oqdd = hermite_oracle(0.0, 0.0, 0.5, 2.0, 1.0, -0.25, t)
            assert q[0] == pytest.approx(oq, abs=1e-12)
            assert qd[0] == pytest.approx(oqd, abs=1e-12)
            assert qdd[0] == pytest.approx(oqdd, abs=1e-12)

    def test_boundaries_hold_with_zero_rates(self):
        ctrl = self.make()
        load_trajectory(ctrl, [TrajectoryPoint(1.0, [0.2], [0.4], [0.1]),
                               TrajectoryPoint(2.0, [0.8], [0.0], [0.0])])
        q, qd, qdd = ctrl.reference(0.0)
        assert (q[0], qd[0], qdd[0]) == (0.2, 0.0, 0.0)
        q, qd, qdd = ctrl.reference(10.0)
        assert (q[0], qd[0], qdd[0]) == (0.8, 0.0, 0.0)

    def test_c1_continuity_at_knots(self):
        ctrl = self.make()
        pts = [TrajectoryPoint(0.0, [0.0], [0.3], [0.0]),
               TrajectoryPoint(1.0, [0.5], [-0.2], [0.0]),
               TrajectoryPoint(2.5, [-0.1], [0.1], [0.0])]
        load_trajectory(ctrl, pts)
        for knot in (1.0,):
            eps = 1e-9
            q_l, qd_l, _ = ctrl.reference(knot - eps)
            q_r, qd_r, _ = ctrl.reference(knot + eps)
            assert abs(q_l[0] - q_r[0]) < 1e-9
            assert abs(qd_l[0] - qd_r[0]) < 1e-7

    def test_non_monotone_rejected(self):
        ctrl = self.make()
        with pytest.raises(NonMonotoneTime):
            load_trajectory(ctrl, [TrajectoryPoint(1.0, [0.0], [0.0], [0.0]),
                                   TrajectoryPoint(1.0, [1.0], [0.0], [0.0])])

    def test_empty_rejected(self):
        with pytest.raises(EmptyTrajectory):
            load_trajectory(self.make(), [])

    def test_query_without_trajectory(self):
        with pytest.raises(NoTrajectoryLoaded):
            self.make().reference(0.0)

    def test_closed_loop_tracking_error(self):
        # track q_ref(t) = 0.5 sin t on a pendulum for 5 s
        spec = pendulum(damping=0.1)
        scene = Scene(SceneConfig(dt=1.0 / 500.0))
        scene.add_articulation(spec)
        ctrl = scene.add_controller("pendulum", ControllerSpec(
            joints=("swing",), mode=ControlMode.TRAJECTORY, kp=100.0, kd=20.0))
        knots = np.linspace(0.0, 5.0, 51)
        ctrl.load_trajectory([TrajectoryPoint(t, [0.5 * math.sin(t)],
                                              [0.5 * math.cos(t)],
                                              [-0.5 * math.sin(t)]) for t in knots])
        worst = 0.0
        for _ in range(2500):
            scene.step()
            q = scene.state("pendulum").q[0]
            worst = max(worst, abs(q - 0.5 * math.sin(scene.time)))
        assert worst < 0.02


def test_position_controller_converges_in_five_seconds():
    spec = pendulum(damping=0.2)
    scene = Scene(SceneConfig(dt=1.0 / 500.0))
    scene.add_articulation(spec)
    ctrl = scene.add_controller("pendulum", ControllerSpec(
        joints=("swing",), mode=ControlMode.POSITION, kp=100.0, kd=20.0,
        gravity_compensation=True))
    ctrl.set_target([1.0])
    for _ in range(2500):
        scene.step()
    assert abs(scene.state("pendulum").q[0] - 1.0) < 1e-3
