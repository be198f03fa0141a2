"""Losses and metrics for movable-part motion prediction and detection.

The 13-component motion vector bundles per-part joint-type probabilities,
hinge pivot and axis, slider axis, and normalized door/drawer positions.
Loss terms: cosine-distance axis alignment, squared point-to-line pivot
distance, binary cross-entropy on joint types, and squared error on the
normalized positions, masked per joint type and summed. Detection quality is
per-category average precision with greedy score-descending mask matching at
an IoU threshold.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BatchMismatch, NonUnitAxis, ZeroRange, ZeroVector

PROB_EPS = 1e-7
HINGE_FULL_RANGE = 2.0 * math.pi   # hinge positions normalize over [0, 2*pi]


@dataclass(frozen=True)
class MotionVector:
    """Per-part motion prediction target (13 numbers).

    Ground-truth instances carry hard 0/1 joint-type indicators; predictions
    carry probabilities. Positions are normalized to [0, 1].
    """

    t_r: float                       # rotational-joint probability
    t_t: float                       # translational-joint probability
    pivot: np.ndarray = field(default_factory=lambda: np.zeros(3))
    axis_r: np.ndarray = field(default_factory=lambda: np.zeros(3))
    axis_t: np.ndarray = field(default_factory=lambda: np.zeros(3))
    x_door: float = 0.0
    x_drawer: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "pivot", np.asarray(self.pivot, dtype=float).reshape(3))
        object.__setattr__(self, "axis_r", np.asarray(self.axis_r, dtype=float).reshape(3))
        object.__setattr__(self, "axis_t", np.asarray(self.axis_t, dtype=float).reshape(3))

    def to_dict(self) -> dict:
        return {"t_r": self.t_r, "t_t": self.t_t,
                "pivot": [float(v) for v in self.pivot],
                "axis_r": [float(v) for v in self.axis_r],
                "axis_t": [float(v) for v in self.axis_t],
                "x_door": self.x_door, "x_drawer": self.x_drawer}

    @staticmethod
    def from_dict(d: dict) -> "MotionVector":
        return MotionVector(t_r=d["t_r"], t_t=d["t_t"], pivot=np.array(d["pivot"]),
                            axis_r=np.array(d["axis_r"]), axis_t=np.array(d["axis_t"]),
                            x_door=d["x_door"], x_drawer=d["x_drawer"])


@dataclass(frozen=True)
class DetectionInstance:
    """One mask with a part-category label; predictions carry a score."""

    mask: frozenset
    label: str
    score: float = 1.0
    image_id: int = 0

    def __post_init__(self):
        object.__setattr__(self, "mask", frozenset(self.mask))
        if not self.mask:
            raise BatchMismatch("detection mask may not be empty")


# -- loss terms ---------------------------------------------------------------

def axis_alignment_loss(d_pred, d_gt) -> float:
    """Cosine distance, sign-invariant: 1 - |d.d_hat| / (|d| |d_hat|)."""
    d_pred = np.asarray(d_pred, dtype=float).reshape(3)
    d_gt = np.asarray(d_gt, dtype=float).reshape(3)
    np_pred = np.linalg.norm(d_pred)
    np_gt = np.linalg.norm(d_gt)
    if np_pred < 1e-12 or np_gt < 1e-12:
        raise ZeroVector("axis vectors must be nonzero")
    cos = min(1.0, abs(np.dot(d_pred, d_gt)) / (np_pred * np_gt))
    return float(1.0 - cos)


def pivot_loss(p_pred, p_gt, d_gt) -> float:
    """Squared distance from the predicted pivot to the ground-truth joint
    axis (the line through p_gt along unit d_gt)."""
    p_pred = np.asarray(p_pred, dtype=float).reshape(3)
    p_gt = np.asarray(p_gt, dtype=float).reshape(3)
    d_gt = np.asarray(d_gt, dtype=float).reshape(3)
    if abs(np.linalg.norm(d_gt) - 1.0) > 1e-6:
        raise NonUnitAxis(f"ground-truth axis must be unit, norm {np.linalg.norm(d_gt)}")
    delta = p_pred - p_gt
    perp = delta - np.dot(delta, d_gt) * d_gt
    return float(np.dot(perp, perp))


def joint_type_loss(t_pred: float, t_gt: float) -> float:
    """Binary cross-entropy with the prediction clamped away from {0, 1}."""
    p = min(max(float(t_pred), PROB_EPS), 1.0 - PROB_EPS)
    return float(-(t_gt * math.log(p) + (1.0 - t_gt) * math.log(1.0 - p)))


def joint_position_loss(x_pred, x_gt, valid) -> float:
    """Sum of squared position errors over valid instances only."""
    x_pred = np.asarray(x_pred, dtype=float).reshape(-1)
    x_gt = np.asarray(x_gt, dtype=float).reshape(-1)
    valid = np.asarray(valid, dtype=bool).reshape(-1)
    if not (x_pred.shape == x_gt.shape == valid.shape):
        raise BatchMismatch("position batches must align")
    err = (x_pred - x_gt) ** 2
    return float(err[valid].sum())


def total_loss(preds: list[MotionVector], gts: list[MotionVector]) -> tuple[float, dict]:
    """Seven-term sum over a batch, with rotation terms masked to gt hinges
    and translation terms to gt sliders. Returns (total, per-term breakdown)."""
    if len(preds) != len(gts):
        raise BatchMismatch(f"{len(preds)} predictions vs {len(gts)} ground truths")
    terms = {"axis_r": 0.0, "axis_t": 0.0, "pivot": 0.0, "type_r": 0.0,
             "type_t": 0.0, "door": 0.0, "drawer": 0.0}
    for p, g in zip(preds, gts):
        rot = g.t_r >= 0.5
        trans = g.t_t >= 0.5
        if rot:
            terms["axis_r"] += axis_alignment_loss(p.axis_r, g.axis_r)
            terms["pivot"] += pivot_loss(p.pivot, g.pivot, _unit(g.axis_r))
            terms["door"] += (p.x_door - g.x_door) ** 2
        if trans:
            terms["axis_t"] += axis_alignment_loss(p.axis_t, g.axis_t)
            terms["drawer"] += (p.x_drawer - g.x_drawer) ** 2
        terms["type_r"] += joint_type_loss(p.t_r, g.t_r)
        terms["type_t"] += joint_type_loss(p.t_t, g.t_t)
    return float(sum(terms.values())), terms


def _unit(v: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(v)
    if n < 1e-12:
        raise ZeroVector("ground-truth axis is zero")
    return v / n


def normalize_position(q: float, kind: str, max_slider_range: float | None = None) -> float:
    """Normalize a joint position to [0, 1]: hinges over the [0, 2*pi] range,
    sliders over the dataset's maximum motion range."""
    if kind == "hinge":
        return float(q) / HINGE_FULL_RANGE
    if kind == "slider":
        if not max_slider_range:
            raise ZeroRange("slider normalization needs the dataset max range")
        return float(q) / float(max_slider_range)
    raise ZeroRange(f"unknown joint kind {kind!r}")


# -- evaluation metrics -------------------------------------------------------

def motion_metrics(preds: list[MotionVector], gts: list[MotionVector],
                   max_slider_range: float = 1.0) -> dict:
    """Classification accuracy and mean geometric errors.

    Angles are arccos(|cos|) in degrees; the hinge-origin error is the
    point-to-line distance in meters; door error denormalizes positions by
    the full 360-degree hinge convention, drawer error by the dataset's
    maximum slider range in meters.
    """
    if len(preds) != len(gts):
        raise BatchMismatch(f"{len(preds)} predictions vs {len(gts)} ground truths")
    h_correct = s_correct = 0
    ho, ha, sa, door, drawer = [], [], [], [], []
    for p, g in zip(preds, gts):
        h_correct += int((p.t_r >= 0.5) == (g.t_r >= 0.5))
        s_correct += int((p.t_t >= 0.5) == (g.t_t >= 0.5))
        if g.t_r >= 0.5:
            ho.append(math.sqrt(pivot_loss(p.pivot, g.pivot, _unit(g.axis_r))))
            ha.append(_angle_deg(p.axis_r, g.axis_r))
            door.append(abs(p.x_door - g.x_door) * 360.0)
        if g.t_t >= 0.5:
            sa.append(_angle_deg(p.axis_t, g.axis_t))
            drawer.append(abs(p.x_drawer - g.x_drawer) * max_slider_range)
    n = max(1, len(preds))
    mean = lambda xs: float(np.mean(xs)) if xs else 0.0
    return {
        "h_acc": h_correct / n, "s_acc": s_correct / n,
        "h_o_err_m": mean(ho), "h_a_err_deg": mean(ha), "s_a_err_deg": mean(sa),
        "door_err_deg": mean(door), "drawer_err_m": mean(drawer),
        "count": len(preds),
    }


def _angle_deg(d_pred, d_gt) -> float:
    cos = 1.0 - axis_alignment_loss(d_pred, d_gt)
    return math.degrees(math.acos(min(1.0, max(-1.0, cos))))


def mask_iou(a: frozenset, b: frozenset) -> float:
    inter = len(a & b)
    union = len(a | b)
    return inter / union if union else 0.0


def average_precision(preds: list[DetectionInstance], gts: list[DetectionInstance],
                      iou_threshold: float = 0.5) -> dict:
    """Per-category AP and their mean.

    Predictions match greedily in score-descending order, at most one
    prediction per ground truth, requiring IoU >= threshold within the same
    image. AP integrates the all-point interpolated precision-recall curve.
    Categories with no ground truth have undefined AP and are excluded from
    the mean (listed under "undefined").
    """
    categories = sorted({g.label for g in gts} | {p.label for p in preds})
    ap: dict[str, float] = {}
    undefined: list[str] = []
    for cat in categories:
        cat_gts = [g for g in gts if g.label == cat]
        cat_preds = sorted([p for p in preds if p.label == cat],
                           key=lambda p: (-p.score, sorted(p.mask)[0] if p.mask else 0))
        if not cat_gts:
            undefined.append(cat)
            continue
        matched: set[int] = set()
        tp = np.zeros(len(cat_preds))
        for i, pred in enumerate(cat_preds):
            best_iou, best_j = 0.0, -1
            for j, gt in enumerate(cat_gts):
                if j in matched or gt.image_id != pred.image_id:
                    continue
                iou = mask_iou(pred.mask, gt.mask)
                if iou > best_iou:
                    best_iou, best_j = iou, j
            if best_j >= 0 and best_iou >= iou_threshold:
                matched.add(best_j)
                tp[i] = 1.0
        cum_tp = np.cumsum(tp)
        ranks = np.arange(1, len(cat_preds) + 1)
        precision = cum_tp / ranks if len(cat_preds) else np.zeros(0)
        recall = cum_tp / len(cat_gts) if len(cat_preds) else np.zeros(0)
        ap[cat] = _all_point_ap(precision, recall)
    defined = [v for v in ap.values()]
    return {"ap": ap, "map": float(np.mean(defined)) if defined else 0.0,
            "undefined": undefined}


def _all_point_ap(precision: np.ndarray, recall: np.ndarray) -> float:
    """Area under the precision envelope over recall."""
    if recall.size == 0:
        return 0.0
    r = np.concatenate([[0.0], recall, [recall[-1]]])
    p = np.concatenate([[0.0], precision, [0.0]])
    for i in range(p.size - 2, -1, -1):
        p[i] = max(p[i], p[i + 1])
    area = 0.0
    for i in range(1, r.size):
        area += (r[i] - r[i - 1]) * p[i]
    return float(area)


# -- mask run-length coding and evaluation file formats ------------------------

def rle_encode(mask, size: int) -> list[int]:
    """COCO-style uncompressed counts over a flat universe of `size` elements,
    starting with the leading background run."""
    flags = np.zeros(size, dtype=bool)
    idx = np.fromiter(mask, dtype=int) if mask else np.zeros(0, dtype=int)
    flags[idx] = True
    counts = []
    current, run = False, 0
    for f in flags:
        if f == current:
            run += 1
        else:
            counts.append(run)
            current, run = f, 1
    counts.append(run)
    return counts


def rle_decode(counts: list[int]) -> frozenset:
    out = []
    pos = 0
    fg = False
    for run in counts:
        if fg:
            out.extend(range(pos, pos + run))
        pos += run
        fg = not fg
    return frozenset(out)


def load_motion_eval_file(path) -> tuple[list[MotionVector], list[MotionVector]]:
    """JSON lines of {id, gt: {...}, pred: {...}} pairs."""
    preds, gts = [], []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            doc = json.loads(line)
            gts.append(MotionVector.from_dict(doc["gt"]))
            preds.append(MotionVector.from_dict(doc["pred"]))
    return preds, gts


def load_detection_file(path, with_scores: bool) -> list[DetectionInstance]:
    """JSON lines of {image_id, category, mask_rle, score?}."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            doc = json.loads(line)
            out.append(DetectionInstance(
                mask=rle_decode(doc["mask_rle"]), label=doc["category"],
                score=float(doc.get("score", 1.0)) if with_scores else 1.0,
                image_id=int(doc.get("image_id", 0))))
    return out
