"""Ground-truth relation oracle: evaluates every predicate directly on the
true scene geometry with plain re-derived math. Perception must agree with
this at zero noise. Visibility gating mirrors the detection contract (an
invisible argument cannot ground a relation)."""

import math
import random

from taskmon.geometry import Box, Camera, Scene, SceneObject
from taskmon.perception import Thresholds


def visible(scene: Scene, cam: Camera, label: str) -> bool:
    o = scene.by_label(label)
    if o is None:
        return False
    if o.proprio:
        return True
    if not scene.vision_on:
        return False
    return cam.in_view(o.box.center) and cam.project_box(o.box) is not None


def _xy_overlap_frac(a: Box, b: Box) -> float:
    w = min(a.hi[0], b.hi[0]) - max(a.lo[0], b.lo[0])
    d = min(a.hi[1], b.hi[1]) - max(a.lo[1], b.lo[1])
    if w <= 0.0 or d <= 0.0:
        return 0.0
    return w * d / ((a.hi[0] - a.lo[0]) * (a.hi[1] - a.lo[1]))


def _inter_vol(a: Box, b: Box) -> float:
    v = 1.0
    for k in range(3):
        span = min(a.hi[k], b.hi[k]) - max(a.lo[k], b.lo[k])
        if span <= 0.0:
            return 0.0
        v *= span
    return v


def _center(b: Box):
    return tuple((b.lo[k] + b.hi[k]) / 2.0 for k in range(3))


def _dist(p, q) -> float:
    return math.sqrt(sum((p[k] - q[k]) ** 2 for k in range(3)))


def _resting_on(a: Box, b: Box, th: Thresholds) -> bool:
    return abs(a.lo[2] - b.hi[2]) <= th.on_gap and _xy_overlap_frac(a, b) >= th.on_overlap


def truth(pred: str, args: tuple, scene: Scene, cam: Camera, th: Thresholds = None) -> bool:
    """What a perfect perceiver should report for pred(args)."""
    th = th or Thresholds()

    def box(label: str) -> Box:
        return scene.by_label(label).box

    def holds_direct(h: str, o: str) -> bool:
        ho, oo = scene.by_label(h), scene.by_label(o)
        att = {scene.get(a).label: scene.get(b).label for a, b in scene.attachments.items()}
        if att.get(h) == o:
            return True
        if not (visible(scene, cam, h) and visible(scene, cam, o)):
            return False
        hb = ho.box.dilated(th.hold_dilate)
        return hb.contains(_center(oo.box))

    vis_labels = sorted(o.label for o in scene.objects if visible(scene, cam, o.label))

    if pred in ("Found", "Detected"):
        return visible(scene, cam, args[0])
    if pred == "VisionOn":
        return scene.vision_on
    if pred in ("Hold", "Holding"):
        return holds_direct(args[0], args[1])
    if pred == "Free":
        h = args[0]
        att = {scene.get(a).label: scene.get(b).label for a, b in scene.attachments.items()}
        if h in att:
            return False
        if not visible(scene, cam, h):
            return True
        return not any(o != h and holds_direct(h, o) for o in vis_labels)
    if pred == "Empty":
        c = args[0]
        if not visible(scene, cam, c):
            return False
        cb = box(c)
        return not any(
            o != c and _inter_vol(box(o), cb) / max(box(o).volume, 1e-12) >= th.inside_ratio
            for o in vis_labels
        )
    if pred == "Clear":
        x = args[0]
        if not visible(scene, cam, x):
            return False
        return not any(o != x and _resting_on(box(o), box(x), th) for o in vis_labels)

    a, b = args
    if not (visible(scene, cam, a) and visible(scene, cam, b)):
        return False
    A, B = box(a), box(b)
    ca, cb = _center(A), _center(B)

    if pred == "On":
        return _resting_on(A, B, th)
    if pred == "Under":
        return _resting_on(B, A, th)
    if pred == "Inside":
        return _inter_vol(A, B) / max(A.volume, 1e-12) >= th.inside_ratio
    if pred == "CloseTo":
        return _dist(ca, cb) <= th.close_dist
    if pred == "At":
        return _dist(ca, cb) <= th.at_dist
    if pred in ("Left", "Right"):
        r = cam.right
        disp = sum((ca[k] - cb[k]) * r[k] for k in range(3))
        return disp < -th.deadband if pred == "Left" else disp > th.deadband
    if pred in ("InFront", "Behind"):
        f = cam.forward
        da = sum((ca[k] - cam.position[k]) * f[k] for k in range(3))
        db = sum((cb[k] - cam.position[k]) * f[k] for k in range(3))
        return (db - da) > th.deadband if pred == "InFront" else (da - db) > th.deadband
    raise KeyError(pred)


# --- scene sampler ----------------------------------------------------------------


def sample_relation_scene(rng: random.Random, overlap_heavy: bool = False) -> Scene:
    """Random desk scene: a work surface, stacked items, a container, and
    free-standing objects at varied depths. overlap_heavy biases toward
    image-overlapping configurations at different depths."""
    cam = Camera(position=(0.0, 0.0, 1.1), yaw=0.0, pitch=-0.15)
    objects = []

    tx = rng.uniform(0.9, 1.3)
    ty = rng.uniform(-0.25, 0.25)
    top = rng.uniform(0.55, 0.8)
    table = Box((tx, ty - 0.45, 0.0), (tx + 0.75, ty + 0.45, top))
    objects.append(SceneObject("table", "table", table))

    def small(cx, cy, cz, s=None):
        s = s or rng.uniform(0.05, 0.14)
        return Box((cx - s / 2, cy - s / 2, cz), (cx + s / 2, cy + s / 2, cz + s))

    n_items = rng.randint(2, 4)
    for i in range(n_items):
        cx = rng.uniform(tx + 0.1, tx + 0.6)
        cy = rng.uniform(ty - 0.35, ty + 0.35)
        mode = rng.random()
        if mode < 0.45:
            gap = 0.0 if rng.random() < 0.7 else rng.uniform(0.0, 0.015)
            b = small(cx, cy, top + gap)
        elif mode < 0.65:
            b = small(cx, cy, top + rng.uniform(0.04, 0.35))
        else:
            depth = rng.uniform(0.6, 2.2) if not overlap_heavy else rng.uniform(0.8, 2.3)
            b = small(depth, rng.uniform(-0.5, 0.5), rng.uniform(0.2, 1.0))
        objects.append(SceneObject(f"item{i}", f"item{i}", b))

    if rng.random() < 0.7:
        cx = rng.uniform(tx + 0.1, tx + 0.55)
        cy = rng.uniform(ty - 0.3, ty + 0.3)
        s = rng.uniform(0.18, 0.3)
        objects.append(
            SceneObject("bin", "bin", Box((cx - s / 2, cy - s / 2, top), (cx + s / 2, cy + s / 2, top + s)))
        )
        if rng.random() < 0.7:
            inner = rng.uniform(0.04, 0.08)
            off = rng.uniform(0.0, (s - inner) / 2 * 0.9)
            objects.append(
                SceneObject(
                    "chip",
                    "chip",
                    Box(
                        (cx - inner / 2 + off, cy - inner / 2, top + 0.01),
                        (cx + inner / 2 + off, cy + inner / 2, top + 0.01 + inner),
                    ),
                )
            )

    if overlap_heavy:
        # two objects sharing a line of sight at different depths
        yaw_off = rng.uniform(-0.25, 0.25)
        d1, d2 = rng.uniform(0.7, 1.2), rng.uniform(1.4, 2.3)
        for j, d in enumerate((d1, d2)):
            cx = d * math.cos(yaw_off)
            cy = d * math.sin(yaw_off) + rng.uniform(-0.04, 0.04)
            cz = 1.1 - 0.15 * d + rng.uniform(-0.05, 0.05)
            s = rng.uniform(0.08, 0.2)
            objects.append(SceneObject(f"los{j}", f"los{j}", small(cx, cy, cz, s)))

    return Scene(objects, cam)
