import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mobilisim.errors import BatchMismatch, NonUnitAxis, ZeroRange, ZeroVector
from mobilisim.metrics import (DetectionInstance, MotionVector, average_precision,
                               axis_alignment_loss, joint_position_loss,
                               joint_type_loss, mask_iou, motion_metrics,
                               normalize_position, pivot_loss, rle_decode,
                               rle_encode, total_loss)
from oracles import brute_force_ap


class TestAxisAlignment:
    def test_parallel_and_antiparallel_are_zero(self):
        d = np.array([0.0, 0.0, 1.0])
        assert axis_alignment_loss(d, d) == pytest.approx(0.0, abs=1e-15)
        assert axis_alignment_loss(-d, d) == pytest.approx(0.0, abs=1e-15)

    def test_forty_five_degrees(self):
        loss = axis_alignment_loss(np.array([0, 1, 1]) / math.sqrt(2), (0, 0, 1))
        assert loss == pytest.approx(1 - math.cos(math.pi / 4), abs=1e-9)
        assert loss == pytest.approx(0.29289, abs=1e-5)

    def test_matches_dot_product_oracle(self, rng):
        for _ in range(200):
            a, b = rng.normal(size=3), rng.normal(size=3)
            want = 1 - abs(np.dot(a, b)) / (np.linalg.norm(a) * np.linalg.norm(b))
            assert axis_alignment_loss(a, b) == pytest.approx(want, abs=1e-12)

    def test_zero_vector(self):
        with pytest.raises(ZeroVector):
            axis_alignment_loss((0, 0, 0), (0, 0, 1))

    @given(st.floats(min_value=-100, max_value=100).filter(lambda s: abs(s) > 1e-6))
    @settings(max_examples=40, deadline=None)
    def test_scale_and_sign_invariance(self, scale):
        d = np.array([0.3, -0.5, 0.8])
        assert axis_alignment_loss(scale * d, d) == pytest.approx(0.0, abs=1e-9)


class TestPivot:
    def test_z_axis_projects_out(self):
        loss = pivot_loss((3.0, 4.0, 10.0), (0.0, 0.0, 0.0), (0.0, 0.0, 1.0))
        assert loss == pytest.approx(25.0, abs=1e-12)
        assert math.sqrt(loss) == pytest.approx(5.0)

    def test_point_on_axis(self):
        assert pivot_loss((0, 0, 7.0), (0, 0, 0), (0, 0, 1.0)) == pytest.approx(0.0, abs=1e-15)

    def test_matches_line_distance_minimizer(self, rng):
        # the squared distance along the line is exactly quadratic in t, so a
        # three-point parabola fit is an exact numeric minimizer
        def min_sq_dist(p_pred, p_gt, d):
            f = lambda t: float(np.sum((p_pred - (p_gt + t * d)) ** 2))
            f0, f1, fm1 = f(0.0), f(1.0), f(-1.0)
            a = 0.5 * (f1 + fm1) - f0
            b = 0.5 * (f1 - fm1)
            return f0 - b * b / (4.0 * a)

        for _ in range(100):
            p_gt = rng.normal(size=3)
            d = rng.normal(size=3)
            d /= np.linalg.norm(d)
            p_pred = rng.normal(size=3)
            want = min_sq_dist(p_pred, p_gt, d)
            assert pivot_loss(p_pred, p_gt, d) == pytest.approx(want, abs=1e-10)

    def test_invariance_under_joint_translation_and_slide(self, rng):
        p_gt, p_pred = rng.normal(size=3), rng.normal(size=3)
        d = rng.normal(size=3)
        d /= np.linalg.norm(d)
        base = pivot_loss(p_pred, p_gt, d)
        shift = rng.normal(size=3)
        assert pivot_loss(p_pred + shift, p_gt + shift, d) == pytest.approx(base, abs=1e-10)
        assert pivot_loss(p_pred, p_gt + 3.7 * d, d) == pytest.approx(base, abs=1e-10)

    def test_non_unit_axis(self):
        with pytest.raises(NonUnitAxis):
            pivot_loss((1, 0, 0), (0, 0, 0), (0, 0, 2.0))


class TestJointType:
    def test_confident_correct(self):
        assert joint_type_loss(1 - 1e-7, 1.0) == pytest.approx(1e-7, rel=1e-3)

    def test_half_is_ln2(self):
        assert joint_type_loss(0.5, 1.0) == pytest.approx(math.log(2), abs=1e-12)
        assert joint_type_loss(0.5, 0.0) == pytest.approx(0.693147, abs=1e-6)

    def test_clamping_makes_total(self):
        assert math.isfinite(joint_type_loss(0.0, 1.0))
        assert math.isfinite(joint_type_loss(1.0, 0.0))

    def test_matches_log_oracle(self, rng):
        for _ in range(200):
            p = float(rng.uniform(1e-6, 1 - 1e-6))
            t = float(rng.integers(0, 2))
            want = -(t * math.log(p) + (1 - t) * math.log(1 - p))
            assert joint_type_loss(p, t) == pytest.approx(want, abs=1e-12)


class TestJointPosition:
    def test_perfect_zero(self):
        assert joint_position_loss([0.3], [0.3], [True]) == 0.0

    def test_full_error_is_one(self):
        assert joint_position_loss([0.0], [1.0], [True]) == 1.0

    def test_masked_out_contributes_zero(self):
        assert joint_position_loss([0.0, 0.9], [1.0, 0.1], [False, False]) == 0.0

    def test_batch_mismatch(self):
        with pytest.raises(BatchMismatch):
            joint_position_loss([0.0], [1.0, 0.5], [True, True])


def make_gt(hinge: bool, slider: bool, rng) -> MotionVector:
    return MotionVector(t_r=1.0 if hinge else 0.0, t_t=1.0 if slider else 0.0,
                        pivot=rng.normal(size=3),
                        axis_r=_unit(rng), axis_t=_unit(rng),
                        x_door=float(rng.uniform()), x_drawer=float(rng.uniform()))


def _unit(rng):
    v = rng.normal(size=3)
    return v / np.linalg.norm(v)


def perfect_pred(gt: MotionVector) -> MotionVector:
    eps = 1e-7
    return MotionVector(t_r=1 - eps if gt.t_r >= 0.5 else eps,
                        t_t=1 - eps if gt.t_t >= 0.5 else eps,
                        pivot=gt.pivot.copy(), axis_r=gt.axis_r.copy(),
                        axis_t=gt.axis_t.copy(), x_door=gt.x_door,
                        x_drawer=gt.x_drawer)


class TestTotalLoss:
    def test_perfect_predictions_below_tolerance(self, rng):
        gts = [make_gt(bool(i % 2), bool(i % 3 == 0), rng) for i in range(20)]
        preds = [perfect_pred(g) for g in gts]
        total, terms = total_loss(preds, gts)
        assert total < 1e-5
        assert all(v >= 0 for v in terms.values())

    def test_single_pivot_error_isolated(self, rng):
        gt = make_gt(True, False, rng)
        pred = perfect_pred(gt)
        offset = np.cross(gt.axis_r, [1.0, 0.0, 0.0])
        offset = 2.0 * offset / np.linalg.norm(offset)  # distance 2 off the axis
        bad = MotionVector(t_r=pred.t_r, t_t=pred.t_t, pivot=gt.pivot + offset,
                           axis_r=pred.axis_r, axis_t=pred.axis_t,
                           x_door=pred.x_door, x_drawer=pred.x_drawer)
        total, terms = total_loss([bad], [gt])
        assert terms["pivot"] == pytest.approx(4.0, abs=1e-9)
        assert total == pytest.approx(4.0, abs=1e-5)

    def test_masking_per_type(self, rng):
        gt = make_gt(False, True, rng)  # slider only
        pred = perfect_pred(gt)
        wrong_rot = MotionVector(t_r=pred.t_r, t_t=pred.t_t,
                                 pivot=gt.pivot + 5.0, axis_r=-np.roll(gt.axis_r, 1),
                                 axis_t=pred.axis_t, x_door=0.9, x_drawer=pred.x_drawer)
        total, terms = total_loss([wrong_rot], [gt])
        assert terms["pivot"] == 0.0 and terms["axis_r"] == 0.0 and terms["door"] == 0.0
        assert total < 1e-5

    def test_matches_term_by_term_oracle(self, rng):
        gts = [make_gt(bool(rng.integers(0, 2)), bool(rng.integers(0, 2)), rng)
               for _ in range(30)]
        preds = [make_gt(bool(rng.integers(0, 2)), bool(rng.integers(0, 2)), rng)
                 for _ in range(30)]
        preds = [MotionVector(t_r=float(rng.uniform(0.01, 0.99)),
                              t_t=float(rng.uniform(0.01, 0.99)), pivot=p.pivot,
                              axis_r=p.axis_r, axis_t=p.axis_t, x_door=p.x_door,
                              x_drawer=p.x_drawer) for p in preds]
        total, _ = total_loss(preds, gts)
        want = 0.0
        for p, g in zip(preds, gts):
            want += joint_type_loss(p.t_r, g.t_r) + joint_type_loss(p.t_t, g.t_t)
            if g.t_r >= 0.5:
                want += axis_alignment_loss(p.axis_r, g.axis_r)
                want += pivot_loss(p.pivot, g.pivot, g.axis_r)
                want += (p.x_door - g.x_door) ** 2
            if g.t_t >= 0.5:
                want += axis_alignment_loss(p.axis_t, g.axis_t)
                want += (p.x_drawer - g.x_drawer) ** 2
        assert total == pytest.approx(want, abs=1e-10)

    def test_batch_mismatch(self, rng):
        with pytest.raises(BatchMismatch):
            total_loss([], [make_gt(True, False, rng)])

    def test_nonnegative(self, rng):
        for _ in range(20):
            gt = make_gt(bool(rng.integers(0, 2)), bool(rng.integers(0, 2)), rng)
            pred = make_gt(bool(rng.integers(0, 2)), bool(rng.integers(0, 2)), rng)
            total, _ = total_loss([pred], [gt])
            assert total >= 0.0


class TestNormalizePosition:
    def test_hinge_half_turn(self):
        assert normalize_position(math.pi, "hinge") == pytest.approx(0.5)

    def test_slider_with_dataset_range(self):
        assert normalize_position(0.3, "slider", max_slider_range=0.6) == pytest.approx(0.5)

    def test_zero_maps_to_zero(self):
        assert normalize_position(0.0, "hinge") == 0.0
        assert normalize_position(0.0, "slider", max_slider_range=1.0) == 0.0

    def test_zero_range(self):
        with pytest.raises(ZeroRange):
            normalize_position(0.1, "slider")


class TestMotionMetrics:
    def test_perfect_batch(self, rng):
        gts = [make_gt(True, False, rng) for _ in range(10)]
        report = motion_metrics([perfect_pred(g) for g in gts], gts)
        assert report["h_acc"] == 1.0 and report["s_acc"] == 1.0
        for key in ("h_o_err_m", "h_a_err_deg", "s_a_err_deg", "door_err_deg",
                    "drawer_err_m"):
            assert report[key] == pytest.approx(0.0, abs=1e-9)

    def test_single_hinge_forty_five_degrees(self, rng):
        gt = MotionVector(1.0, 0.0, np.zeros(3), np.array([0, 0, 1.0]),
                          np.array([1.0, 0, 0]), 0.0, 0.0)
        pred = MotionVector(0.9, 0.1, np.zeros(3),
                            np.array([0, 1.0, 1.0]) / math.sqrt(2),
                            np.array([1.0, 0, 0]), 0.0, 0.0)
        report = motion_metrics([pred], [gt])
        assert report["h_a_err_deg"] == pytest.approx(45.0, abs=1e-9)

    def test_aggregation_matches_per_instance_oracle(self, rng):
        gts, preds = [], []
        for _ in range(25):
            g = make_gt(bool(rng.integers(0, 2)), bool(rng.integers(0, 2)), rng)
            p = make_gt(bool(rng.integers(0, 2)), bool(rng.integers(0, 2)), rng)
            gts.append(g)
            preds.append(p)
        report = motion_metrics(preds, gts, max_slider_range=0.8)
        h_o = [math.sqrt(pivot_loss(p.pivot, g.pivot, g.axis_r))
               for p, g in zip(preds, gts) if g.t_r >= 0.5]
        door = [abs(p.x_door - g.x_door) * 360.0
                for p, g in zip(preds, gts) if g.t_r >= 0.5]
        drawer = [abs(p.x_drawer - g.x_drawer) * 0.8
                  for p, g in zip(preds, gts) if g.t_t >= 0.5]
        assert report["h_o_err_m"] == pytest.approx(np.mean(h_o) if h_o else 0.0, abs=1e-12)
        assert report["door_err_deg"] == pytest.approx(np.mean(door) if door else 0.0, abs=1e-12)
        assert report["drawer_err_m"] == pytest.approx(np.mean(drawer) if drawer else 0.0, abs=1e-12)


def inst(ids, label, score=1.0, image=0):
    return DetectionInstance(mask=frozenset(ids), label=label, score=score, image_id=image)


class TestAveragePrecision:
    def test_single_match_above_threshold(self):
        gt = [inst(range(10), "door")]
        pred = [inst(range(1, 11), "door", 0.9)]  # IoU = 9/11 ~ 0.82
        out = average_precision(pred, gt, 0.5)
        assert out["ap"]["door"] == 1.0 and out["map"] == 1.0

    def test_single_below_threshold(self):
        gt = [inst(range(10), "door")]
        pred = [inst(range(7, 17), "door", 0.9)]  # IoU = 3/17 < 0.5
        out = average_precision(pred, gt, 0.5)
        assert out["ap"]["door"] == 0.0

    def test_iou_arithmetic(self):
        assert mask_iou(frozenset(range(10)), frozenset(range(5, 15))) == pytest.approx(5 / 15)

    def test_empty_category_excluded_from_map(self):
        gt = [inst(range(10), "door")]
        pred = [inst(range(10), "door", 0.8), inst(range(5), "handle", 0.9)]
        out = average_precision(pred, gt, 0.5)
        assert out["undefined"] == ["handle"]
        assert out["map"] == 1.0

    def test_duplicate_lower_scored_prediction_never_raises_ap(self, rng):
        gt = [inst(range(10), "door")]
        pred = [inst(range(10), "door", 0.9)]
        base = average_precision(pred, gt, 0.5)["ap"]["door"]
        dup = pred + [inst(range(10), "door", 0.5)]
        out = average_precision(dup, gt, 0.5)["ap"]["door"]
        assert out <= base + 1e-12
        assert out == pytest.approx(brute_force_ap(dup, gt, 0.5), abs=1e-12)

    def test_matches_brute_force_on_randomized_cases(self, rng):
        for case in range(50):
            universe = 30
            n_gt = int(rng.integers(1, 4))
            n_pred = int(rng.integers(0, 6))
            gts, preds = [], []
            for g in range(n_gt):
                size = int(rng.integers(3, 12))
                ids = rng.choice(universe, size=size, replace=False)
                gts.append(inst(ids, "part"))
            for p in range(n_pred):
                size = int(rng.integers(3, 12))
                ids = rng.choice(universe, size=size, replace=False)
                preds.append(inst(ids, "part", float(rng.uniform(0.05, 1.0))))
            got = average_precision(preds, gts, 0.5)["ap"].get("part", 0.0)
            want = brute_force_ap(preds, gts, 0.5)
            assert got == pytest.approx(want, abs=1e-12), f"case {case}"

    def test_ap_bounded(self, rng):
        gt = [inst(range(8), "x"), inst(range(10, 20), "x")]
        pred = [inst(range(8), "x", 0.7), inst(range(10, 18), "x", 0.4),
                inst(range(20, 25), "x", 0.9)]
        ap = average_precision(pred, gt, 0.5)["ap"]["x"]
        assert 0.0 <= ap <= 1.0


class TestRle:
    def test_roundtrip(self, rng):
        for _ in range(20):
            size = int(rng.integers(1, 60))
            n = int(rng.integers(0, size + 1))
            ids = frozenset(rng.choice(size, size=n, replace=False).tolist())
            counts = rle_encode(ids, size)
            assert sum(counts) == size
            assert rle_decode(counts) == ids

    def test_leading_background_convention(self):
        assert rle_encode(frozenset({0, 1}), 5) == [0, 2, 3]
        assert rle_encode(frozenset({3}), 5) == [3, 1, 1]
