"""Simulated perception over ground-truth scenes.

Detection draws a batch of noisy frames and majority-votes the class per
object; depth comes from ray-cast foreground masking inside the detected
box; the 13 spatial/functional predicates are grounded by geometric rules
over the perceived (reconstructed) geometry, never the ground truth.

Three ablation modes control what the reconstruction may use: FULL keeps
estimated centroids plus true class extents, NO_SHAPE replaces extents with
a nominal cube, NO_DEPTH works purely in pixel space.
"""

from __future__ import annotations

import enum
import math
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .geometry import Box, Camera, Scene, dist, ray_box
from .language import State


class Mode(enum.Enum):
    FULL = "full"
    NO_SHAPE = "no-shape"
    NO_DEPTH = "no-depth"


class UnknownPredicate(Exception):
    pass


class NoForeground(Exception):
    pass


@dataclass(frozen=True)
class DetectorModel:
    """Noise knobs for the simulated detector. All randomness flows through
    generators derived from `seed`; clone one per query, never share."""

    tp_rate: float = 1.0
    confusion: float = 0.0
    px_jitter: float = 0.0
    depth_sigma: float = 0.0
    mask_flip: float = 0.0
    seed: int = 0
    tp_overrides: dict = field(default_factory=dict)  # label -> rate

    def __post_init__(self):
        for r in (self.tp_rate, self.confusion, self.mask_flip):
            if not 0.0 <= r <= 1.0:
                raise ValueError(f"rate {r} outside [0, 1]")

    def tp_for(self, label: str) -> float:
        return self.tp_overrides.get(label, self.tp_rate)

    def rng(self, stream: int = 0) -> np.random.Generator:
        return np.random.default_rng([self.seed, stream])


@dataclass
class Detection:
    label: str
    obj_id: str
    bbox: tuple[float, float, float, float]  # u0, v0, u1, v1 (pixels)
    center_px: tuple[float, float]
    center_depth: float  # noisy forward depth of the centroid
    confidence: float

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError("confidence outside [0, 1]")


@dataclass(frozen=True)
class Thresholds:
    found_conf: float = 0.7
    on_gap: float = 0.02
    on_overlap: float = 0.5
    inside_ratio: float = 0.9
    close_dist: float = 0.8
    at_dist: float = 1.2
    deadband: float = 0.05
    hold_dilate: float = 0.05
    nominal_extent: float = 0.06
    # pixel-space fallbacks for the NO_DEPTH ablation
    px_on_gap: float = 16.0
    px_close: float = 240.0
    px_at: float = 360.0
    px_deadband: float = 14.0
    px_hold_dilate: float = 24.0
    px_area_front: float = 1.2


@dataclass(frozen=True)
class RelationRule:
    pred: str
    kind: str
    sign: float = 1.0


def default_rules() -> dict[str, RelationRule]:
    """The predicate -> geometric-procedure table. Alternative spellings used
    by task corpora (Detected, Holding) share the base procedures."""
    rules = [
        RelationRule("On", "on"),
        RelationRule("Under", "under"),
        RelationRule("Inside", "inside"),
        RelationRule("CloseTo", "close"),
        RelationRule("At", "at"),
        RelationRule("Left", "lateral", -1.0),
        RelationRule("Right", "lateral", 1.0),
        RelationRule("InFront", "depthwise", -1.0),
        RelationRule("Behind", "depthwise", 1.0),
        RelationRule("Hold", "hold"),
        RelationRule("Holding", "hold"),
        RelationRule("Free", "free"),
        RelationRule("Empty", "empty"),
        RelationRule("Clear", "clear"),
        RelationRule("Found", "found"),
        RelationRule("Detected", "found"),
        RelationRule("VisionOn", "vision-on"),
    ]
    return {r.pred: r for r in rules}


@dataclass
class Percept:
    """What one camera query yields: detections by label, plus the geometry
    reconstructed under the active ablation mode."""

    detections: dict[str, Detection]
    boxes3d: dict[str, Box]  # empty in NO_DEPTH mode
    attachments: dict[str, str]  # holder label -> held label
    camera: Camera
    mode: Mode
    vision_on: bool


# --- detection -----------------------------------------------------------------


def detect_batch(
    scene: Scene,
    cam: Camera,
    model: DetectorModel,
    n: int = 10,
    rng: Optional[np.random.Generator] = None,
) -> list[Detection]:
    """Majority vote over n noisy frames per visible object. An object whose
    modal vote is a miss (or a tie) is omitted; confidence is the modal
    frequency. Proprioceptive objects (the robot's own parts) are always
    reported exactly."""
    if n < 1:
        raise ValueError("batch size must be >= 1")
    if rng is None:
        rng = model.rng()
    labels = sorted({o.label for o in scene.objects})
    out: list[Detection] = []
    for obj in scene.objects:
        if obj.proprio:
            pr = cam.project(obj.box.center)
            bbox = cam.project_box(obj.box) or (0.0, 0.0, 0.0, 0.0)
            center = (pr[0], pr[1]) if pr else (0.0, 0.0)
            depth = cam.depth_of(obj.box.center)
            out.append(Detection(obj.label, obj.id, bbox, center, depth, 1.0))
            continue
        if not scene.vision_on or not cam.in_view(obj.box.center):
            continue
        true_bbox = cam.project_box(obj.box)
        pr = cam.project(obj.box.center)
        if true_bbox is None or pr is None:
            continue

        tp = model.tp_for(obj.label)
        others = [l for l in labels if l != obj.label]
        votes: list[str] = []
        jitters: list[tuple[float, float]] = []
        for _ in range(n):
            r = rng.random()
            if r >= tp:
                votes.append("")  # miss
            elif others and rng.random() < model.confusion:
                votes.append(others[int(rng.integers(len(others)))])
            else:
                votes.append(obj.label)
            if model.px_jitter > 0.0:
                jitters.append((rng.normal(0.0, model.px_jitter), rng.normal(0.0, model.px_jitter)))
            else:
                jitters.append((0.0, 0.0))

        counts = Counter(votes)
        ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
        winner, top = ranked[0]
        if winner == "" or (len(ranked) > 1 and ranked[1][1] == top):
            continue  # modal miss or a tie: no detection
        keep = [j for v, j in zip(votes, jitters) if v == winner]
        du = sum(j[0] for j in keep) / len(keep)
        dv = sum(j[1] for j in keep) / len(keep)
        depth = cam.depth_of(obj.box.center)
        if model.depth_sigma > 0.0:
            depth += rng.normal(0.0, model.depth_sigma)
        out.append(
            Detection(
                winner,
                obj.id,
                (true_bbox[0] + du, true_bbox[1] + dv, true_bbox[2] + du, true_bbox[3] + dv),
                (pr[0] + du, pr[1] + dv),
                depth,
                top / n,
            )
        )
    return out


def estimate_depth(
    det: Detection,
    scene: Scene,
    cam: Camera,
    model: DetectorModel,
    rng: Optional[np.random.Generator] = None,
    grid: int = 32,
) -> float:
    """Nearest foreground depth inside the detected box: ray-cast a pixel
    lattice, keep pixels whose foreground probability clears 0.7 (0.95 when
    the nearest hit is the detected object, 0.05 otherwise), return the
    minimum hit depth plus Gaussian noise. Excluding background pixels keeps
    overlapping farther objects out of the estimate."""
    if rng is None:
        rng = model.rng(1)
    u0, v0, u1, v1 = det.bbox
    nx = max(2, min(grid, int(math.ceil(u1 - u0))))
    ny = max(2, min(grid, int(math.ceil(v1 - v0))))
    total = nx * ny
    depths: list[float] = []
    for i in range(nx):
        for j in range(ny):
            u = u0 + (i + 0.5) * (u1 - u0) / nx
            v = v0 + (j + 0.5) * (v1 - v0) / ny
            ray = cam.pixel_ray(u, v)
            best_t, best_id = math.inf, None
            for obj in scene.objects:
                t = ray_box(cam.position, ray, obj.box)
                if t is not None and t < best_t:
                    best_t, best_id = t, obj.id
            if best_id is None:
                continue
            p_fg = 0.95 if best_id == det.obj_id else 0.05
            if model.mask_flip > 0.0 and rng.random() < model.mask_flip:
                p_fg = 1.0 - p_fg
            if p_fg > 0.7:
                hit = tuple(cam.position[k] + best_t * ray[k] for k in range(3))
                depths.append(cam.depth_of(hit))
    if len(depths) < 0.05 * total:
        raise NoForeground(f"{det.label}: {len(depths)}/{total} pixels pass the mask")
    d = min(depths)
    if model.depth_sigma > 0.0:
        d += rng.normal(0.0, model.depth_sigma)
    return d


def perceive(
    scene: Scene,
    cam: Camera,
    model: DetectorModel,
    n: int = 10,
    rng: Optional[np.random.Generator] = None,
    mode: Mode = Mode.FULL,
    thresholds: Optional[Thresholds] = None,
) -> Percept:
    """One detection pass plus geometry reconstruction under `mode`."""
    th = thresholds or Thresholds()
    dets = detect_batch(scene, cam, model, n, rng)
    by_label: dict[str, Detection] = {}
    for d in dets:
        if d.label not in by_label or d.confidence > by_label[d.label].confidence:
            by_label[d.label] = d

    boxes3d: dict[str, Box] = {}
    if mode is not Mode.NO_DEPTH:
        for label, det in by_label.items():
            obj = scene.get(det.obj_id)
            if obj.proprio:
                boxes3d[label] = obj.box
                continue
            center = cam.unproject(det.center_px[0], det.center_px[1], det.center_depth)
            if mode is Mode.FULL:
                size = obj.box.size  # class shape model: true extents
            else:
                size = (th.nominal_extent,) * 3
            boxes3d[label] = Box.from_center(center, size)

    attachments = {
        scene.get(holder).label: scene.get(held).label
        for holder, held in scene.attachments.items()
    }
    return Percept(by_label, boxes3d, attachments, cam, mode, scene.vision_on)


# --- relation grounding ----------------------------------------------------------


def ground_relation(
    pred: str,
    args: tuple[str, ...],
    percept: Percept,
    thresholds: Optional[Thresholds] = None,
    rules: Optional[dict[str, RelationRule]] = None,
) -> bool:
    th = thresholds or Thresholds()
    table = rules or default_rules()
    rule = table.get(pred)
    if rule is None:
        raise UnknownPredicate(pred)
    return _eval(rule, args, percept, th)


def _pixel_center(det: Detection) -> tuple[float, float]:
    return det.center_px


def _pixel_area(det: Detection) -> float:
    u0, v0, u1, v1 = det.bbox
    return max(0.0, u1 - u0) * max(0.0, v1 - v0)


def _on_3d(a: Box, b: Box, th: Thresholds) -> bool:
    return abs(a.lo[2] - b.hi[2]) <= th.on_gap and a.footprint_overlap(b) >= th.on_overlap


def _on_px(a: Detection, b: Detection, th: Thresholds) -> bool:
    au0, _, au1, av1 = a.bbox
    bu0, bv0, bu1, bv1 = b.bbox
    w = min(au1, bu1) - max(au0, bu0)
    if w <= 0.0 or au1 <= au0:
        return False
    if w / (au1 - au0) < th.on_overlap:
        return False
    upper_band = bv0 + 0.5 * (bv1 - bv0)
    return bv0 - th.px_on_gap <= av1 <= upper_band


def _eval(rule: RelationRule, args: tuple[str, ...], p: Percept, th: Thresholds) -> bool:
    kind = rule.kind
    det = p.detections
    pixel_mode = p.mode is Mode.NO_DEPTH

    def have(*names: str) -> bool:
        return all(n in det for n in names)

    if kind == "found":
        (x,) = args
        return x in det and det[x].confidence > th.found_conf

    if kind == "vision-on":
        return p.vision_on

    if kind == "hold":
        h, o = args
        if p.attachments.get(h) == o:
            return True
        if not have(h, o):
            return False
        if pixel_mode:
            u0, v0, u1, v1 = det[h].bbox
            m = th.px_hold_dilate
            cu, cv = _pixel_center(det[o])
            return u0 - m <= cu <= u1 + m and v0 - m <= cv <= v1 + m
        return p.boxes3d[h].dilated(th.hold_dilate).contains(p.boxes3d[o].center)

    if kind == "free":
        (h,) = args
        held = p.attachments.get(h)
        if held is not None:
            return False
        if h not in det:
            return True
        return not any(
            o != h and _eval(RelationRule("Hold", "hold"), (h, o), p, th) for o in sorted(det)
        )

    if kind == "empty":
        (c,) = args
        if c not in det:
            return False
        return not any(
            o != c and _eval(RelationRule("Inside", "inside"), (o, c), p, th) for o in sorted(det)
        )

    if kind == "clear":
        (x,) = args
        if x not in det:
            return False
        return not any(
            o != x and _eval(RelationRule("On", "on"), (o, x), p, th) for o in sorted(det)
        )

    # the remaining kinds are binary geometric relations
    a, b = args
    if not have(a, b):
        return False

    if kind == "on":
        if pixel_mode:
            return _on_px(det[a], det[b], th)
        return _on_3d(p.boxes3d[a], p.boxes3d[b], th)

    if kind == "under":
        # a under b: b rests on a
        if pixel_mode:
            return _on_px(det[b], det[a], th)
        return _on_3d(p.boxes3d[b], p.boxes3d[a], th)

    if kind == "inside":
        if pixel_mode:
            u0, v0, u1, v1 = det[a].bbox
            w0, x0, w1, x1 = det[b].bbox
            iw = min(u1, w1) - max(u0, w0)
            ih = min(v1, x1) - max(v0, x0)
            area = _pixel_area(det[a])
            if iw <= 0.0 or ih <= 0.0 or area <= 0.0:
                return False
            return iw * ih / area >= th.inside_ratio
        va = p.boxes3d[a].volume
        return va > 0.0 and p.boxes3d[a].intersection_volume(p.boxes3d[b]) / va >= th.inside_ratio

    if kind in ("close", "at"):
        if pixel_mode:
            (ua, va_), (ub, vb) = _pixel_center(det[a]), _pixel_center(det[b])
            limit = th.px_close if kind == "close" else th.px_at
            return math.hypot(ua - ub, va_ - vb) <= limit
        limit = th.close_dist if kind == "close" else th.at_dist
        return dist(p.boxes3d[a].center, p.boxes3d[b].center) <= limit

    if kind == "lateral":
        if pixel_mode:
            disp = _pixel_center(det[a])[0] - _pixel_center(det[b])[0]
            return rule.sign * disp > th.px_deadband
        ca, cb = p.boxes3d[a].center, p.boxes3d[b].center
        r = p.camera.right
        disp = sum((ca[k] - cb[k]) * r[k] for k in range(3))
        return rule.sign * disp > th.deadband

    if kind == "depthwise":
        if pixel_mode:
            # no depth: a larger apparent area reads as nearer
            aa, ab = _pixel_area(det[a]), _pixel_area(det[b])
            if rule.sign < 0:
                return aa > th.px_area_front * ab
            return ab > th.px_area_front * aa
        da = p.camera.depth_of(p.boxes3d[a].center)
        db = p.camera.depth_of(p.boxes3d[b].center)
        return rule.sign * (da - db) > th.deadband

    raise UnknownPredicate(f"{rule.pred} (kind {kind})")


# --- the full query --------------------------------------------------------------


def query_vision(
    s: State,
    scene: Scene,
    cam: Camera,
    model: DetectorModel,
    mu: float = 0.7,
    tau: int = 5,
    rng: Optional[np.random.Generator] = None,
    mode: Mode = Mode.FULL,
    n: int = 10,
    thresholds: Optional[Thresholds] = None,
    rules: Optional[dict[str, RelationRule]] = None,
) -> tuple[bool, dict, object]:
    """Verify a conjunction of atoms against the scene. Detect every term in
    s; while any term is missing or under-confident, re-aim at the centroid
    of the terms' scene positions for at most tau steps, so a conjunction
    verifies only when every term fits one view. Terms absent from the scene
    fall back to a blind yaw sweep. On timeout: (False, {}, -1). Otherwise
    ground every atom and report (all-hold, boxes, depths). An empty
    conjunction is vacuously true."""
    th = thresholds or Thresholds()
    if rng is None:
        rng = model.rng()
    terms = sorted({arg for atom in s.atoms for arg in atom.args})
    if not terms:
        return (True, {}, {})

    known = [o for o in scene.objects if o.id in terms]
    aim: Optional[Camera] = None
    if known:
        centroid = tuple(
            sum(o.box.center[i] for o in known) / len(known) for i in range(3)
        )
        aim = cam.aimed_at(centroid)

    current = cam
    percept = perceive(scene, current, model, n, rng, mode, th)
    steps = 0
    phase: Optional[float] = None
    while True:
        missing = [
            t
            for t in terms
            if t not in percept.detections or percept.detections[t].confidence <= mu
        ]
        if not missing:
            break
        if steps >= tau:
            return (False, {}, -1)
        steps += 1
        if aim is not None:
            current = aim
        else:
            # blind sweep: random phase, yaw strides under one FOV so
            # consecutive steps tile the circle
            if phase is None:
                phase = float(rng.uniform(0.0, 2.0 * math.pi))
            yaw = phase + (steps - 1) * cam.hfov * 0.85
            pitch = float(rng.uniform(-0.35, -0.05))
            current = replace(cam, yaw=yaw, pitch=pitch)
        percept = perceive(scene, current, model, n, rng, mode, th)

    ok = all(ground_relation(a.pred, a.args, percept, th, rules) for a in s.drop_times().canonical())
    boxes = {t: percept.detections[t].bbox for t in terms}
    depths: dict[str, float] = {}
    for t in terms:
        det = percept.detections[t]
        try:
            depths[t] = estimate_depth(det, scene, current, model, rng)
        except NoForeground:
            depths[t] = det.center_depth
    return (ok, boxes, depths)
