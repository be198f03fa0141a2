import math

import numpy as np
import pytest

from mobilisim.asset.model import ArticulationSpec, JointKind, JointSpec, LinkSpec
from mobilisim.errors import DimensionMismatch, NoConvergence, UnknownLink
from mobilisim.kinematics import (ArticulationState, forward_kinematics, jacobian,
                                  solve_ik)
from mobilisim.spatial import SpatialInertia, Transform
from oracles import fd_point_jacobian, matrix_fk, random_tree


def two_link_planar() -> ArticulationSpec:
    links = (LinkSpec("base", SpatialInertia(1.0)),
             LinkSpec("upper", SpatialInertia(1.0)),
             LinkSpec("lower", SpatialInertia(1.0)))
    joints = (
        JointSpec("j0", JointKind.HINGE, "base", "upper", axis=(0, 0, 1),
                  limit_lower=-math.pi, limit_upper=math.pi),
        JointSpec("j1", JointKind.HINGE, "upper", "lower",
                  origin=Transform(translation=(1.0, 0.0, 0.0)), axis=(0, 0, 1),
                  limit_lower=-math.pi, limit_upper=math.pi),
    )
    return ArticulationSpec("planar2", links, joints, "base")


def six_dof_chain() -> ArticulationSpec:
    axes = [(0, 0, 1), (0, 1, 0), (0, 1, 0), (1, 0, 0), (0, 1, 0), (1, 0, 0)]
    offsets = [(0, 0, 0.2), (0, 0, 0.2), (0.3, 0, 0), (0.3, 0, 0), (0.2, 0, 0), (0.1, 0, 0)]
    links = [LinkSpec("base", SpatialInertia(1.0))]
    joints = []
    for i, (axis, off) in enumerate(zip(axes, offsets)):
        links.append(LinkSpec(f"l{i}", SpatialInertia(1.0)))
        joints.append(JointSpec(f"j{i}", JointKind.HINGE, links[i].name, f"l{i}",
                                origin=Transform(translation=off), axis=axis,
                                limit_lower=-2.5, limit_upper=2.5))
    return ArticulationSpec("arm6", tuple(links), tuple(joints), "base")


class TestForwardKinematics:
    def test_zero_configuration_composes_origins(self):
        spec = six_dof_chain()
        fk = forward_kinematics(spec, ArticulationState.zeros(6))
        mfk = matrix_fk(spec, np.zeros(6))
        for name, pose in fk.items():
            np.testing.assert_allclose(pose.matrix4(), mfk[name], atol=1e-14)

    def test_two_link_planar_tip(self):
        spec = two_link_planar()
        st = ArticulationState(np.array([math.pi / 2, math.pi / 2]), np.zeros(2))
        fk = forward_kinematics(spec, st)
        tip = fk["lower"].apply((1.0, 0.0, 0.0))
        np.testing.assert_allclose(tip, [-1.0, 1.0, 0.0], atol=1e-12)

    def test_coupled_screw_advances_by_pitch(self):
        links = (LinkSpec("base", SpatialInertia(1.0)), LinkSpec("cap", SpatialInertia(1.0)))
        joints = (JointSpec("s", JointKind.SCREW, "base", "cap", axis=(0, 0, 1),
                            limit_lower=0.0, limit_upper=4 * math.pi,
                            screw_coupled=True, screw_pitch=0.01),)
        spec = ArticulationSpec("screwed", links, joints, "base")
        st = ArticulationState(np.array([2 * math.pi]), np.zeros(1))
        pose = forward_kinematics(spec, st)["cap"]
        np.testing.assert_allclose(pose.translation, [0, 0, 0.01 * 2 * math.pi],
                                   atol=1e-12)
        assert pose.translation[2] == pytest.approx(0.0628318, abs=1e-6)
        # full turn: rotation back to identity
        np.testing.assert_allclose(np.abs(pose.rotation[0]), 1.0, atol=1e-12)

    def test_dimension_mismatch(self):
        spec = two_link_planar()
        with pytest.raises(DimensionMismatch):
            forward_kinematics(spec, ArticulationState.zeros(3))

    def test_matches_matrix_oracle_on_random_trees(self, rng):
        for _ in range(25):
            spec = random_tree(rng, max_dof=8)
            q = rng.uniform(-1.5, 1.5, spec.dof)
            fk = forward_kinematics(spec, ArticulationState(q, np.zeros_like(q)))
            mfk = matrix_fk(spec, q)
            for name, pose in fk.items():
                np.testing.assert_allclose(pose.matrix4(), mfk[name], atol=1e-12)

    def test_configuration_continuity(self, rng):
        spec = six_dof_chain()
        q = rng.uniform(-1, 1, 6)
        base_fk = forward_kinematics(spec, ArticulationState(q, np.zeros(6)))
        delta = 1e-8
        near = forward_kinematics(spec, ArticulationState(q + delta, np.zeros(6)))
        for name in base_fk:
            shift = np.linalg.norm(near[name].translation - base_fk[name].translation)
            assert shift < 1e-6


class TestJacobian:
    def test_single_hinge_about_z(self):
        links = (LinkSpec("base", SpatialInertia(1.0)), LinkSpec("arm", SpatialInertia(1.0)))
        joints = (JointSpec("j", JointKind.HINGE, "base", "arm", axis=(0, 0, 1),
                            limit_lower=-3.2, limit_upper=3.2),)
        spec = ArticulationSpec("hinge1", links, joints, "base")
        jac = jacobian(spec, ArticulationState.zeros(1), "arm", (1.0, 0.0, 0.0))
        np.testing.assert_allclose(jac[:, 0], [0, 0, 1, 0, 1, 0], atol=1e-14)

    def test_single_slider_along_x(self):
        links = (LinkSpec("base", SpatialInertia(1.0)), LinkSpec("rod", SpatialInertia(1.0)))
        joints = (JointSpec("j", JointKind.SLIDER, "base", "rod", axis=(1, 0, 0),
                            limit_lower=-1, limit_upper=1),)
        spec = ArticulationSpec("slide1", links, joints, "base")
        jac = jacobian(spec, ArticulationState.zeros(1), "rod", (0.3, 0.2, 0.1))
        np.testing.assert_allclose(jac[:, 0], [0, 0, 0, 1, 0, 0], atol=1e-14)

    def test_off_path_joints_contribute_zero(self):
        spec, _ = _fork()
        st = ArticulationState.zeros(spec.dof)
        jac = jacobian(spec, st, "left", (0, 0, 0))
        index = spec.dof_index()
        start, _ = index["j_right"]
        np.testing.assert_allclose(jac[:, start], 0.0)

    def test_unknown_link(self):
        spec = two_link_planar()
        with pytest.raises(UnknownLink):
            jacobian(spec, ArticulationState.zeros(2), "nope", (0, 0, 0))

    def test_finite_difference_agreement_random_trees(self, rng):
        worst = 0.0
        for _ in range(20):
            spec = random_tree(rng, max_dof=5)
            if spec.dof == 0:
                continue
            q = rng.uniform(-1, 1, spec.dof)
            st = ArticulationState(q, np.zeros_like(q))
            link = spec.links[-1].name
            point_local = rng.uniform(-0.3, 0.3, 3)
            fk = forward_kinematics(spec, st)[link]
            point_world = fk.apply(point_local)
            jac = jacobian(spec, st, link, point_world)
            jac_fd = fd_point_jacobian(spec, q, link, point_local, h=1e-6)
            worst = max(worst, float(np.abs(jac - jac_fd).max()))
        assert worst < 1e-6


def _fork():
    links = (LinkSpec("base", SpatialInertia(1.0)),
             LinkSpec("left", SpatialInertia(1.0)),
             LinkSpec("right", SpatialInertia(1.0)))
    joints = (
        JointSpec("j_left", JointKind.HINGE, "base", "left", axis=(0, 0, 1),
                  limit_lower=-3, limit_upper=3),
        JointSpec("j_right", JointKind.HINGE, "base", "right", axis=(0, 0, 1),
                  limit_lower=-3, limit_upper=3),
    )
    return ArticulationSpec("fork", links, joints, "base"), None


class TestInverseKinematics:
    def test_fixed_point(self):
        spec = six_dof_chain()
        st = ArticulationState(np.full(6, 0.3), np.zeros(6))
        target = forward_kinematics(spec, st)["l5"]
        out = solve_ik(spec, st, "l5", target, tol_pos=1e-6, tol_rot=1e-6)
        np.testing.assert_allclose(out.q, st.q, atol=1e-9)

    def test_unreachable_target(self):
        spec = two_link_planar()
        target = Transform(translation=(3.0, 0.0, 0.0))
        with pytest.raises(NoConvergence) as err:
            solve_ik(spec, ArticulationState.zeros(2), "lower", target,
                     tol_pos=1e-4, tol_rot=math.pi)
        assert err.value.pos_residual > 0.5  # best residual reported

    def test_limits_respected(self, rng):
        spec = six_dof_chain()
        st = ArticulationState(np.zeros(6), np.zeros(6))
        goal = ArticulationState(rng.uniform(-1.0, 1.0, 6), np.zeros(6))
        target = forward_kinematics(spec, goal)["l5"]
        out = solve_ik(spec, st, "l5", target, tol_pos=1e-4, tol_rot=1e-3)
        lower, upper = spec.dof_limit_arrays()
        assert np.all(out.q >= lower - 1e-12) and np.all(out.q <= upper + 1e-12)

    def test_hundred_random_reachable_targets(self, rng):
        spec = six_dof_chain()
        home = ArticulationState(np.zeros(6), np.zeros(6))
        solved = 0
        for _ in range(100):
            goal_q = rng.uniform(-1.2, 1.2, 6)
            target = forward_kinematics(
                spec, ArticulationState(goal_q, np.zeros(6)))["l5"]
            out = solve_ik(spec, home, "l5", target, tol_pos=1e-4, tol_rot=1e-3,
                           max_iters=1000)
            reached = forward_kinematics(spec, out)["l5"]
            pos_err = np.linalg.norm(reached.translation - target.translation)
            assert pos_err <= 1e-4
            solved += 1
        assert solved == 100
