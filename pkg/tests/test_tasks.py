import json
import math

import numpy as np
import pytest

from mobilisim.asset import CabinetConfig
from mobilisim.errors import InvalidConfig
from mobilisim.sensors import CameraIntrinsics
from mobilisim.tasks import (GripperCommand, Outcome, Repr, TaskConfig,
                             TaskKind, TaskSpec, evaluate_step,
                             heuristic_door_policy, heuristic_drawer_policy,
                             make_task, observe, policy_for, run_episode,
                             step_task, write_result_log)

FAST = TaskConfig(max_steps=2000)


class TestMakeTask:
    def test_drawer_initial_state(self):
        task = make_task(TaskKind.PULL_DRAWER, seed=0)
        assert task.spec.kind == TaskKind.PULL_DRAWER
        assert task.fraction() == pytest.approx(0.0, abs=1e-12)
        assert task.constraint.active
        result = evaluate_step(task)
        assert result.outcome is None and not result.gripper_detached
        # gripper body sits at the handle grasp frame
        pose = task.scene.link_pose(task.gripper, "body")
        np.testing.assert_allclose(pose.translation, task.truth.handle_center,
                                   atol=1e-12)

    def test_same_seed_same_task(self):
        a = make_task(TaskKind.PULL_DRAWER, seed=5)
        b = make_task(TaskKind.PULL_DRAWER, seed=5)
        from mobilisim.asset import serialize_spec
        assert serialize_spec(a.spec.articulation) == serialize_spec(b.spec.articulation)
        assert a.truth.joint == b.truth.joint

    def test_task_kind_joint_validation(self):
        task = make_task(TaskKind.OPEN_DOOR, seed=1)
        with pytest.raises(InvalidConfig):
            TaskSpec(kind=TaskKind.PULL_DRAWER, articulation=task.spec.articulation,
                     target_joint=task.spec.target_joint)

    def test_gripper_gravity_disabled_holds_still(self):
        task = make_task(TaskKind.PULL_DRAWER, seed=0)
        p0 = task.scene.link_pose(task.gripper, "body").translation.copy()
        for _ in range(100):
            task.scene.step()
        p1 = task.scene.link_pose(task.gripper, "body").translation
        np.testing.assert_allclose(p1, p0, atol=1e-6)

    def test_wrong_cabinet_for_kind(self):
        config = TaskConfig(cabinet=CabinetConfig(n_drawers=0, n_doors=1))
        with pytest.raises(InvalidConfig):
            make_task(TaskKind.PULL_DRAWER, seed=0, config=config)


class TestEvaluate:
    def test_fraction_arithmetic_success(self):
        task = make_task(TaskKind.PULL_DRAWER, seed=0)
        lo, hi = task.target_range
        q = np.array(task.scene.state(task.cabinet).q)
        q[task._dof_start] = lo + 0.92 * (hi - lo)
        task.scene.set_state(task.cabinet, q=q)
        result = evaluate_step(task)
        assert result.outcome == Outcome.SUCCESS
        assert result.final_fraction == pytest.approx(0.92)

    def test_under_threshold_times_out(self):
        task = make_task(TaskKind.PULL_DRAWER, seed=0,
                         config=TaskConfig(max_steps=3))
        lo, hi = task.target_range
        q = np.array(task.scene.state(task.cabinet).q)
        q[task._dof_start] = lo + 0.85 * (hi - lo)
        task.scene.set_state(task.cabinet, q=q)
        for _ in range(3):
            step_task(task, None)
        result = evaluate_step(task)
        assert result.outcome == Outcome.TIMEOUT

    def test_opposite_direction_fails(self):
        task = make_task(TaskKind.PULL_DRAWER, seed=0)
        lo, hi = task.target_range
        q = np.array(task.scene.state(task.cabinet).q)
        # drive below the annotated closed position beyond the tolerance
        q[task._dof_start] = lo - 1.5 * task.spec.opposite_tolerance
        task.scene.set_state(task.cabinet, q=q)
        result = evaluate_step(task)
        assert result.outcome == Outcome.FAILURE

    def test_door_fraction_example(self):
        # range [0, 135 deg]: a 123 deg opening is fraction 0.911 -> success
        task = make_task(TaskKind.OPEN_DOOR, seed=0)
        q = np.array(task.scene.state(task.cabinet).q)
        q[task._dof_start] = math.radians(123.0)
        task.scene.set_state(task.cabinet, q=q)
        result = evaluate_step(task)
        assert result.final_fraction == pytest.approx(123.0 / 135.0, abs=1e-12)
        assert result.final_fraction == pytest.approx(0.911, abs=1e-3)
        assert result.outcome == Outcome.SUCCESS

    def test_success_latches(self):
        task = make_task(TaskKind.PULL_DRAWER, seed=0)
        lo, hi = task.target_range
        q = np.array(task.scene.state(task.cabinet).q)
        q[task._dof_start] = lo + 0.95 * (hi - lo)
        task.scene.set_state(task.cabinet, q=q)
        assert evaluate_step(task).outcome == Outcome.SUCCESS
        q[task._dof_start] = lo + 0.5 * (hi - lo)
        task.scene.set_state(task.cabinet, q=q)
        assert evaluate_step(task).outcome == Outcome.SUCCESS


class TestPolicies:
    def test_drawer_policy_succeeds_within_kinematic_bound(self):
        task = make_task(TaskKind.PULL_DRAWER, seed=3, config=FAST)
        result = run_episode(task, heuristic_drawer_policy)
        assert result.outcome == Outcome.SUCCESS
        lo, hi = task.target_range
        flight = 0.9 * (hi - lo) / task.config.pull_speed
        bound = int(flight / task.scene.config.dt) + 600  # spin-up margin
        assert result.steps_used <= bound

    def test_drawer_fraction_monotone(self):
        task = make_task(TaskKind.PULL_DRAWER, seed=2, config=FAST)
        prev = -1.0
        result = evaluate_step(task)
        while result.outcome is None:
            result = step_task(task, heuristic_drawer_policy(task))
            assert result.final_fraction >= prev - 1e-9
            prev = result.final_fraction
        assert result.outcome == Outcome.SUCCESS

    def test_flipped_axis_fails_by_opposite_rule(self):
        task = make_task(TaskKind.PULL_DRAWER, seed=0,
                         config=TaskConfig(flip_axis=True))
        result = run_episode(task, heuristic_drawer_policy)
        assert result.outcome == Outcome.FAILURE
        assert result.final_fraction < 0.0

    def test_door_policy_succeeds(self):
        task = make_task(TaskKind.OPEN_DOOR, seed=4, config=FAST)
        result = run_episode(task, heuristic_door_policy)
        assert result.outcome == Outcome.SUCCESS

    def test_task_determinism_same_result(self):
        outcomes = []
        for _ in range(2):
            task = make_task(TaskKind.PULL_DRAWER, seed=7, config=FAST)
            result = run_episode(task, heuristic_drawer_policy)
            outcomes.append((result.outcome, result.final_fraction, result.steps_used))
        assert outcomes[0] == outcomes[1]

    def test_huge_yank_detaches_and_fails(self):
        task = make_task(TaskKind.PULL_DRAWER, seed=0,
                         config=TaskConfig(break_threshold=40.0))
        # command a violent sideways velocity: constraint force exceeds the
        # break threshold and the episode fails with the gripper detached
        result = evaluate_step(task)
        for _ in range(200):
            if result.outcome is not None:
                break
            result = step_task(task, GripperCommand(
                linear_velocity=np.array([0.0, 4.0, 4.0]),
                angular_velocity=np.zeros(3)))
        assert result.outcome == Outcome.FAILURE
        assert result.gripper_detached


class TestObservations:
    def test_raw_shape_contract(self):
        task = make_task(TaskKind.PULL_DRAWER, seed=0)
        obs = observe(task, Repr.RAW)
        dof = task.spec.articulation.dof
        assert obs.vector().shape == (2 * dof + 13,)
        assert obs.gripper_pose.shape == (7,)
        assert obs.gripper_twist.shape == (6,)

    def test_mobility_closed_drawer(self):
        task = make_task(TaskKind.PULL_DRAWER, seed=0)
        obs = observe(task, Repr.MOBILITY)
        assert obs.joint_position == 0.0
        assert obs.joint_velocity == 0.0
        assert abs(np.linalg.norm(obs.direction) - 1.0) < 1e-9
        assert abs(np.linalg.norm(obs.part_normal) - 1.0) < 1e-9
        # drawer front faces +x, so does its averaged visible normal
        assert obs.part_normal[0] > 0.9
        np.testing.assert_allclose(obs.direction, [1.0, 0.0, 0.0], atol=1e-12)

    def test_mobility_tracks_motion(self):
        task = make_task(TaskKind.PULL_DRAWER, seed=0)
        q = np.array(task.scene.state(task.cabinet).q)
        q[task._dof_start] = 0.1
        task.scene.set_state(task.cabinet, q=q)
        obs = observe(task, Repr.MOBILITY)
        assert obs.joint_position == pytest.approx(0.1)

    def test_visual_target_mask_nonempty(self):
        task = make_task(TaskKind.PULL_DRAWER, seed=0)
        intr = CameraIntrinsics(width=96, height=96, fx=100.0, fy=100.0,
                                cx=48.0, cy=48.0)
        obs = observe(task, Repr.VISUAL, intrinsics=intr)
        assert obs.frame.depth.shape == (96, 96)
        assert obs.target_mask.any()
        # the mask marks exactly the target part's link id
        lid = task.scene.link_id(task.cabinet, task.truth.part_link)
        assert set(np.unique(obs.frame.segmentation[obs.target_mask])) == {lid}


def test_benchmark_suite_sizes_generate():
    # the reference experiment sizes: 108 drawer instances, 77 door instances
    from mobilisim.asset import CabinetConfig, generate_cabinet, serialize_spec
    from mobilisim.asset.model import JointKind

    seen = set()
    for seed in range(108):
        spec, truths = generate_cabinet(CabinetConfig(n_drawers=1 + seed % 3,
                                                      n_doors=0), seed)
        assert any(t.kind == JointKind.SLIDER for t in truths)
        seen.add(serialize_spec(spec))
    for seed in range(77):
        spec, truths = generate_cabinet(CabinetConfig(n_drawers=0,
                                                      n_doors=1 + seed % 2), seed)
        assert any(t.kind == JointKind.HINGE for t in truths)
        seen.add(serialize_spec(spec))
    assert len(seen) == 108 + 77  # every instance distinct


def test_result_log_format(tmp_path):
    task = make_task(TaskKind.PULL_DRAWER, seed=1, config=FAST)
    result = run_episode(task, policy_for(TaskKind.PULL_DRAWER))
    path = tmp_path / "log.jsonl"
    write_result_log(path, [(1, TaskKind.PULL_DRAWER, result)])
    rows = [json.loads(line) for line in path.read_text().splitlines()]
    assert rows == [{"seed": 1, "kind": "drawer", "outcome": "success",
                     "final_fraction": result.final_fraction,
                     "steps": result.steps_used}]
