"""Camera geometry, the batched noisy detector, depth-from-mask, relation
grounding (cross-checked against the direct ground-truth oracle), and the
search-then-verify vision query."""

import math
import random
from itertools import permutations
from math import comb

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from taskmon.geometry import Box, Camera, Scene, SceneObject, load_scene, ray_box, save_scene
from taskmon.language import State, parse_atom
from taskmon.perception import (
    DetectorModel,
    Detection,
    Mode,
    NoForeground,
    Thresholds,
    UnknownPredicate,
    default_rules,
    detect_batch,
    estimate_depth,
    ground_relation,
    perceive,
    query_vision,
)

import georacle


# --- geometry primitives ----------------------------------------------------------


def test_box_rejects_flat_or_inverted_extents():
    with pytest.raises(ValueError):
        Box((0, 0, 0), (1, 0, 1))
    with pytest.raises(ValueError):
        Box((0, 0, 0), (-1, 1, 1))


def test_box_accessors():
    b = Box((0.0, 0.0, 0.0), (2.0, 4.0, 1.0))
    assert b.center == (1.0, 2.0, 0.5)
    assert b.size == (2.0, 4.0, 1.0)
    assert b.volume == pytest.approx(8.0)
    assert b.contains((2.0, 4.0, 1.0))  # faces inclusive
    assert not b.contains((2.0001, 1.0, 0.5))
    d = b.dilated(0.5)
    assert d.lo == (-0.5, -0.5, -0.5) and d.hi == (2.5, 4.5, 1.5)


def test_footprint_overlap_and_intersection():
    base = Box((0, 0, 0), (1, 1, 1))
    half = Box((0.5, 0, 0), (1.5, 1, 1))
    assert base.footprint_overlap(half) == pytest.approx(0.5)
    assert half.footprint_overlap(base) == pytest.approx(0.5)
    assert base.intersection_volume(half) == pytest.approx(0.5)
    apart = Box((5, 5, 5), (6, 6, 6))
    assert base.footprint_overlap(apart) == 0.0
    assert base.intersection_volume(apart) == 0.0
    # ratio is relative to the subject's own footprint, so it is asymmetric
    small = Box((0.25, 0.25, 0), (0.75, 0.75, 1))
    assert small.footprint_overlap(base) == pytest.approx(1.0)
    assert base.footprint_overlap(small) == pytest.approx(0.25)


def test_ray_box_entry_distances():
    b = Box((1.0, -0.5, -0.5), (2.0, 0.5, 0.5))
    assert ray_box((0, 0, 0), (1, 0, 0), b) == pytest.approx(1.0)
    assert ray_box((1.5, 0, 0), (1, 0, 0), b) == 0.0  # starting inside
    assert ray_box((0, 0, 0), (0, 1, 0), b) is None
    assert ray_box((0, 2, 0), (1, 0, 0), b) is None  # parallel slab miss
    assert ray_box((0, 0, 0), (-1, 0, 0), b) is None  # behind


@settings(max_examples=200, deadline=None)
@given(
    x=st.floats(0.2, 5.0),
    y=st.floats(-3.0, 3.0),
    z=st.floats(-1.0, 3.0),
    yaw=st.floats(-3.0, 3.0),
    pitch=st.floats(-0.6, 0.6),
)
def test_project_unproject_roundtrip(x, y, z, yaw, pitch):
    cam = Camera(position=(0.3, -0.2, 1.1), yaw=yaw, pitch=pitch)
    p = (x, y, z)
    pr = cam.project(p)
    if pr is None:
        assert cam.depth_of(p) <= 1e-9
        return
    u, v, d = pr
    assert d == pytest.approx(cam.depth_of(p))
    back = cam.unproject(u, v, d)
    assert all(abs(a - b) < 1e-9 for a, b in zip(back, p))


def test_camera_axes_orthonormal():
    cam = Camera(yaw=0.7, pitch=-0.3)
    f, r, u = cam.forward, cam.right, cam.up
    for vec in (f, r, u):
        assert math.fsum(c * c for c in vec) == pytest.approx(1.0)
    assert sum(a * b for a, b in zip(f, r)) == pytest.approx(0.0, abs=1e-12)
    assert sum(a * b for a, b in zip(f, u)) == pytest.approx(0.0, abs=1e-12)
    assert sum(a * b for a, b in zip(r, u)) == pytest.approx(0.0, abs=1e-12)


def test_in_view_gates_depth_and_cone():
    cam = Camera(position=(0, 0, 1.0), yaw=0.0, pitch=0.0, max_depth=2.5)
    assert cam.in_view((1.0, 0.0, 1.0))
    assert not cam.in_view((2.6, 0.0, 1.0))  # beyond range
    assert not cam.in_view((-1.0, 0.0, 1.0))  # behind
    # just inside / outside the horizontal half-angle at depth 1
    t = math.tan(cam.hfov / 2.0)
    assert cam.in_view((1.0, t - 1e-6, 1.0))
    assert not cam.in_view((1.0, t + 1e-6, 1.0))


def test_project_box_requires_all_corners_in_front():
    cam = Camera(position=(0, 0, 0), yaw=0.0, pitch=0.0)
    assert cam.project_box(Box((1, -0.2, -0.2), (2, 0.2, 0.2))) is not None
    # straddles the image plane
    assert cam.project_box(Box((-0.5, -0.2, -0.2), (0.5, 0.2, 0.2))) is None


def test_aimed_at_centers_target():
    cam = Camera(position=(0, 0, 1.2))
    p = (1.4, -0.9, 0.3)
    aimed = cam.aimed_at(p)
    u, v, _ = aimed.project(p)
    assert u == pytest.approx(cam.width / 2.0)
    assert v == pytest.approx(cam.height / 2.0)
    assert aimed.in_view(p)


def test_scene_validation():
    b = Box((0, 0, 0), (1, 1, 1))
    with pytest.raises(ValueError, match="duplicate"):
        Scene([SceneObject("a", "a", b), SceneObject("a", "b", b)], Camera())
    with pytest.raises(ValueError, match="missing object"):
        Scene([SceneObject("a", "a", b)], Camera(), attachments={"a": "ghost"})
    with pytest.raises(ValueError, match="cycle"):
        Scene(
            [
                SceneObject("a", "a", b, supported_by="b"),
                SceneObject("b", "b", b, supported_by="a"),
            ],
            Camera(),
        )


def test_scene_yaml_roundtrip(tmp_path):
    scene = Scene(
        [
            SceneObject("hand", "hand", Box((0.2, 0, 0.9), (0.3, 0.1, 1.0)), proprio=True),
            SceneObject("brush", "brush", Box((1, 0, 0.7), (1.1, 0.1, 0.8)), supported_by="table"),
            SceneObject("table", "table", Box((0.8, -0.5, 0), (1.6, 0.5, 0.7))),
        ],
        Camera(position=(0, 0, 1.3), yaw=0.2, pitch=-0.1),
        attachments={"hand": "brush"},
        vision_on=False,
        frame=7,
    )
    path = tmp_path / "scene.yaml"
    save_scene(scene, str(path))
    back = load_scene(str(path))
    assert back.camera == scene.camera
    assert back.attachments == {"hand": "brush"}
    assert back.vision_on is False and back.frame == 7
    for orig in scene.objects:
        got = back.get(orig.id)
        assert got.label == orig.label
        assert got.proprio == orig.proprio
        assert got.supported_by == orig.supported_by
        assert got.box.lo == pytest.approx(orig.box.lo)
        assert got.box.hi == pytest.approx(orig.box.hi)


# --- detection ---------------------------------------------------------------------


def desk_scene(vision_on: bool = True) -> Scene:
    cam = Camera(position=(0, 0, 1.1), yaw=0.0, pitch=-0.15)
    table = Box((0.9, -0.45, 0.0), (1.65, 0.45, 0.7))
    return Scene(
        [
            SceneObject("table", "table", table),
            SceneObject("brush", "brush", Box((1.1, -0.1, 0.7), (1.2, 0.0, 0.78))),
            SceneObject("cup", "cup", Box((1.3, 0.15, 0.7), (1.38, 0.23, 0.79))),
            SceneObject("far_crate", "far_crate", Box((4.0, -0.3, 0.0), (4.6, 0.3, 0.6))),
            SceneObject("hind_block", "hind_block", Box((-1.5, -0.2, 0.8), (-1.2, 0.1, 1.1))),
            SceneObject("hand", "hand", Box((0.25, 0.0, 0.85), (0.35, 0.1, 0.95)), proprio=True),
        ],
        cam,
        vision_on=vision_on,
    )


def test_zero_noise_detection_is_exact():
    scene = desk_scene()
    cam = scene.camera
    dets = {d.label: d for d in detect_batch(scene, cam, DetectorModel(), n=5)}
    # far and behind objects are not in view; everything else is
    assert set(dets) == {"table", "brush", "cup", "hand"}
    for label in ("table", "brush", "cup"):
        obj = scene.by_label(label)
        d = dets[label]
        assert d.confidence == 1.0
        assert d.obj_id == obj.id
        assert d.bbox == cam.project_box(obj.box)
        pr = cam.project(obj.box.center)
        assert d.center_px == (pr[0], pr[1])
        assert d.center_depth == cam.depth_of(obj.box.center)


def test_vision_off_reports_only_proprio():
    scene = desk_scene(vision_on=False)
    dets = detect_batch(scene, scene.camera, DetectorModel(), n=3)
    assert [d.label for d in dets] == ["hand"]
    assert dets[0].confidence == 1.0


def test_proprio_reported_even_outside_view():
    cam = Camera(position=(0, 0, 1.1))
    scene = Scene(
        [SceneObject("hand", "hand", Box((-1, -0.1, 0.9), (-0.9, 0.0, 1.0)), proprio=True)],
        cam,
        vision_on=False,
    )
    dets = detect_batch(scene, cam, DetectorModel(), n=1)
    assert len(dets) == 1 and dets[0].label == "hand"


def test_detection_confidence_bounds():
    with pytest.raises(ValueError):
        Detection("x", "x", (0, 0, 1, 1), (0, 0), 1.0, 1.5)


def test_model_rate_validation():
    with pytest.raises(ValueError):
        DetectorModel(tp_rate=1.2)
    with pytest.raises(ValueError):
        DetectorModel(confusion=-0.1)
    m = DetectorModel(tp_rate=0.9, tp_overrides={"brush": 0.2})
    assert m.tp_for("brush") == 0.2
    assert m.tp_for("cup") == 0.9


def test_batch_size_must_be_positive():
    with pytest.raises(ValueError):
        detect_batch(desk_scene(), desk_scene().camera, DetectorModel(), n=0)


def test_always_missed_detector_reports_nothing_visual():
    scene = desk_scene()
    dets = detect_batch(scene, scene.camera, DetectorModel(tp_rate=0.0), n=10)
    assert [d.label for d in dets] == ["hand"]


def _modal_win_prob(n: int, p_true: float, n_distractors: int) -> float:
    """Exact P(true label is the strict modal vote) for per-frame distribution:
    true with p_true, each distractor with (1 - p_true) / n_distractors."""
    pd = (1.0 - p_true) / n_distractors
    total = 0.0

    def rec(remaining: int, slots: int, counts: list):
        nonlocal total
        if slots == 0:
            if remaining == 0:
                k0, rest = counts[0], counts[1:]
                if k0 > (max(rest) if rest else -1):
                    coeff = math.factorial(n)
                    for k in counts:
                        coeff //= math.factorial(k)
                    total += coeff * (p_true ** k0) * (pd ** sum(rest))
            return
        for k in range(remaining + 1):
            rec(remaining - k, slots - 1, counts + [k])

    rec(n, 1 + n_distractors, [])
    return total


def test_confusion_voting_matches_multinomial_oracle():
    # four mutually visible labels: three distractor classes per object
    cam = Camera(position=(0, 0, 1.0), yaw=0.0, pitch=-0.1)
    objs = []
    for i, y in enumerate((-0.3, -0.1, 0.1, 0.3)):
        objs.append(SceneObject(f"o{i}", f"o{i}", Box((1.2, y, 0.6), (1.3, y + 0.08, 0.68))))
    scene = Scene(objs, cam)
    model = DetectorModel(tp_rate=1.0, confusion=0.3, seed=11)

    exact = _modal_win_prob(10, 0.7, 3)
    rng = model.rng()
    trials, wins = 0, 0
    for _ in range(1000):
        dets = detect_batch(scene, cam, model, n=10, rng=rng)
        by_id = {d.obj_id: d for d in dets}
        for o in objs:
            trials += 1
            d = by_id.get(o.id)
            if d is not None and d.label == o.label:
                wins += 1
    emp = wins / trials
    assert abs(emp - exact) < 0.03
    assert emp >= 0.95  # votes over ten frames shrug off 30% confusion here


def test_batch_voting_beats_single_frame_under_noise():
    scene = desk_scene()
    cam = scene.camera
    model = DetectorModel(tp_rate=0.75, confusion=0.2, seed=3)

    def correct_rate(n: int) -> float:
        rng = model.rng()
        good, total = 0, 0
        for _ in range(1000):
            dets = {d.obj_id: d for d in detect_batch(scene, cam, model, n=n, rng=rng)}
            for label in ("table", "brush", "cup"):
                obj = scene.by_label(label)
                total += 1
                d = dets.get(obj.id)
                if d is not None and d.label == label:
                    good += 1
        return good / total

    assert correct_rate(10) > correct_rate(1) + 0.05


def test_detection_determinism_per_seed():
    scene = desk_scene()
    model = DetectorModel(tp_rate=0.8, confusion=0.2, px_jitter=1.5, depth_sigma=0.01, seed=42)
    a = detect_batch(scene, scene.camera, model, n=10, rng=model.rng())
    b = detect_batch(scene, scene.camera, model, n=10, rng=model.rng())
    assert a == b
    c = detect_batch(scene, scene.camera, DetectorModel(tp_rate=0.8, confusion=0.2, seed=43), n=10)
    assert c != a or [d.label for d in c] != [d.label for d in a]


def test_jitter_shifts_bbox_and_center_together():
    scene = desk_scene()
    cam = scene.camera
    dets = {d.label: d for d in detect_batch(scene, cam, DetectorModel(px_jitter=3.0, seed=5), n=10)}
    d = dets["brush"]
    true_bbox = cam.project_box(scene.by_label("brush").box)
    du = d.bbox[0] - true_bbox[0]
    dv = d.bbox[1] - true_bbox[1]
    assert (du, dv) != (0.0, 0.0)
    assert d.bbox[2] - true_bbox[2] == pytest.approx(du)
    assert d.bbox[3] - true_bbox[3] == pytest.approx(dv)
    pr = cam.project(scene.by_label("brush").box.center)
    assert d.center_px[0] - pr[0] == pytest.approx(du)
    assert d.center_px[1] - pr[1] == pytest.approx(dv)


def test_depth_sigma_perturbs_reported_depth():
    scene = desk_scene()
    dets = {d.label: d for d in detect_batch(scene, scene.camera, DetectorModel(depth_sigma=0.05, seed=9), n=5)}
    true_depth = scene.camera.depth_of(scene.by_label("cup").box.center)
    assert dets["cup"].center_depth != true_depth
    assert abs(dets["cup"].center_depth - true_depth) < 0.5


# --- depth from the foreground mask ------------------------------------------------


def test_estimate_depth_exact_on_front_face():
    cam = Camera(position=(0, 0, 1.0), yaw=0.0, pitch=0.0)
    scene = Scene([SceneObject("slab", "slab", Box((1.2, -0.3, 0.7), (1.5, 0.3, 1.3)))], cam)
    det = detect_batch(scene, cam, DetectorModel(), n=1)[0]
    d = estimate_depth(det, scene, cam, DetectorModel())
    # every lattice ray enters through the x = 1.2 face: forward depth 1.2
    assert d == pytest.approx(1.2, abs=1e-9)


def test_estimate_depth_prefers_front_object_under_overlap():
    cam = Camera(position=(0, 0, 1.0), yaw=0.0, pitch=0.0)
    front = SceneObject("front", "front", Box((1.0, -0.10, 0.9), (1.12, 0.10, 1.1)))
    back = SceneObject("back", "back", Box((2.0, -0.5, 0.5), (2.3, 0.5, 1.5)))
    scene = Scene([front, back], cam)
    dets = {d.label: d for d in detect_batch(scene, cam, DetectorModel(), n=1)}
    d_front = estimate_depth(dets["front"], scene, cam, DetectorModel())
    assert d_front == pytest.approx(1.0, abs=1e-9)
    # the back box's detection window is mostly blocked: surviving rays still
    # report the back face depth, never the occluder's
    d_back = estimate_depth(dets["back"], scene, cam, DetectorModel())
    assert d_back == pytest.approx(2.0, abs=1e-9)


def test_estimate_depth_raises_when_fully_occluded():
    cam = Camera(position=(0, 0, 1.0), yaw=0.0, pitch=0.0)
    wall = SceneObject("wall", "wall", Box((0.8, -0.8, 0.2), (0.9, 0.8, 1.8)))
    hidden = SceneObject("hidden", "hidden", Box((1.5, -0.05, 0.95), (1.6, 0.05, 1.05)))
    scene = Scene([wall, hidden], cam)
    dets = {d.label: d for d in detect_batch(scene, cam, DetectorModel(), n=1)}
    assert "hidden" in dets  # the detector has no occlusion model
    with pytest.raises(NoForeground):
        estimate_depth(dets["hidden"], scene, cam, DetectorModel())


# --- reconstruction ----------------------------------------------------------------


def test_full_mode_reconstructs_true_boxes_at_zero_noise():
    scene = desk_scene()
    p = perceive(scene, scene.camera, DetectorModel(), n=1, mode=Mode.FULL)
    for label in ("table", "brush", "cup", "hand"):
        true = scene.by_label(label).box
        got = p.boxes3d[label]
        assert got.lo == pytest.approx(true.lo, abs=1e-9)
        assert got.hi == pytest.approx(true.hi, abs=1e-9)


def test_no_shape_mode_uses_nominal_cubes():
    scene = desk_scene()
    th = Thresholds()
    p = perceive(scene, scene.camera, DetectorModel(), n=1, mode=Mode.NO_SHAPE, thresholds=th)
    for label in ("table", "brush", "cup"):
        assert p.boxes3d[label].size == pytest.approx((th.nominal_extent,) * 3)
        # centroid position is still metric
        assert p.boxes3d[label].center == pytest.approx(scene.by_label(label).box.center, abs=1e-9)
    assert p.boxes3d["hand"].size == pytest.approx(scene.by_label("hand").box.size)  # proprio keeps shape


def test_no_depth_mode_has_no_metric_boxes():
    scene = desk_scene()
    p = perceive(scene, scene.camera, DetectorModel(), n=1, mode=Mode.NO_DEPTH)
    assert p.boxes3d == {}
    assert set(p.detections) == {"table", "brush", "cup", "hand"}


def test_percept_attachments_use_labels():
    scene = desk_scene()
    scene.attachments["hand"] = "brush"
    p = perceive(scene, scene.camera, DetectorModel(), n=1)
    assert p.attachments == {"hand": "brush"}


# --- relation grounding ------------------------------------------------------------


def test_unknown_predicate_raises():
    scene = desk_scene()
    p = perceive(scene, scene.camera, DetectorModel(), n=1)
    with pytest.raises(UnknownPredicate):
        ground_relation("Levitates", ("brush",), p)


def test_found_requires_confident_detection():
    scene = desk_scene()
    p = perceive(scene, scene.camera, DetectorModel(), n=1)
    assert ground_relation("Found", ("brush",), p)
    assert ground_relation("Detected", ("brush",), p)
    assert not ground_relation("Found", ("far_crate",), p)
    # a shaky detector drives confidence under the gate
    shaky = DetectorModel(tp_rate=0.55, seed=1)
    for trial in range(40):
        pp = perceive(scene, scene.camera, shaky, n=9, rng=shaky.rng(trial))
        if "brush" in pp.detections and pp.detections["brush"].confidence <= 0.7:
            assert not ground_relation("Found", ("brush",), pp)
            break
    else:
        pytest.fail("never sampled an under-confident detection")


def test_vision_on_tracks_scene_flag():
    on = perceive(desk_scene(), desk_scene().camera, DetectorModel(), n=1)
    off_scene = desk_scene(vision_on=False)
    off = perceive(off_scene, off_scene.camera, DetectorModel(), n=1)
    assert ground_relation("VisionOn", ("robot",), on)
    assert not ground_relation("VisionOn", ("robot",), off)


def test_hold_via_attachment_and_containment():
    scene = desk_scene()
    p = perceive(scene, scene.camera, DetectorModel(), n=1)
    assert not ground_relation("Hold", ("hand", "brush"), p)
    assert ground_relation("Free", ("hand",), p)

    scene.attachments["hand"] = "brush"
    p2 = perceive(scene, scene.camera, DetectorModel(), n=1)
    assert ground_relation("Hold", ("hand", "brush"), p2)
    assert ground_relation("Holding", ("hand", "brush"), p2)
    assert not ground_relation("Free", ("hand",), p2)

    # containment without an attachment record also reads as holding; the
    # grip pose must sit inside the view cone or the held object goes unseen
    grip = desk_scene()
    hand = grip.by_label("hand")
    hand.box = Box((0.5, 0.0, 0.72), (0.6, 0.1, 0.82))
    brush = grip.by_label("brush")
    brush.box = Box.from_center(hand.box.center, brush.box.size)
    p3 = perceive(grip, grip.camera, DetectorModel(), n=1)
    assert "brush" in p3.detections
    assert ground_relation("Hold", ("hand", "brush"), p3)
    assert not ground_relation("Free", ("hand",), p3)


def test_free_empty_clear_quantifiers():
    cam = Camera(position=(0, 0, 1.1), yaw=0.0, pitch=-0.2)
    bin_box = Box((1.0, -0.15, 0.5), (1.3, 0.15, 0.8))
    chip = Box((1.1, -0.03, 0.52), (1.16, 0.03, 0.58))
    table = Box((0.9, -0.5, 0.0), (1.7, 0.5, 0.5))
    scene = Scene(
        [
            SceneObject("bin", "bin", bin_box),
            SceneObject("chip", "chip", chip),
            SceneObject("table", "table", table),
        ],
        cam,
    )
    p = perceive(scene, cam, DetectorModel(), n=1)
    assert not ground_relation("Empty", ("bin",), p)  # chip sits inside
    assert ground_relation("Empty", ("chip",), p)
    assert not ground_relation("Clear", ("table",), p)  # bin rests on it
    assert ground_relation("Clear", ("bin",), p)
    assert not ground_relation("Empty", ("ghost",), p)  # undetected container
    assert not ground_relation("Clear", ("ghost",), p)
    assert ground_relation("Free", ("ghost",), p)  # nothing says it holds anything


def _relation_atoms(scene: Scene):
    """Every unary and binary grounding over the scene's labels."""
    labels = sorted(o.label for o in scene.objects)
    unary = ("Found", "Detected", "VisionOn", "Free", "Empty", "Clear")
    binary = (
        "On",
        "Under",
        "Inside",
        "CloseTo",
        "At",
        "Left",
        "Right",
        "InFront",
        "Behind",
        "Hold",
        "Holding",
    )
    for pred in unary:
        for x in labels:
            yield pred, (x,)
    for pred in binary:
        for a, b in permutations(labels, 2):
            yield pred, (a, b)


def test_grounding_agrees_with_truth_oracle_at_zero_noise():
    model = DetectorModel()
    checked = 0
    for seed in range(120):
        rnd = random.Random(seed)
        scene = georacle.sample_relation_scene(rnd, overlap_heavy=seed % 3 == 0)
        if seed % 10 == 0:
            scene.vision_on = False
        if seed % 7 == 0:
            scene.objects.append(
                SceneObject("hand", "hand", Box((0.25, 0.0, 0.85), (0.33, 0.08, 0.93)), proprio=True)
            )
            scene = Scene(scene.objects, scene.camera, scene.attachments, scene.vision_on)
        cam = scene.camera
        p = perceive(scene, cam, model, n=1, mode=Mode.FULL)
        for pred, args in _relation_atoms(scene):
            got = ground_relation(pred, args, p)
            want = georacle.truth(pred, args, scene, cam)
            assert got == want, f"seed {seed}: {pred}{args} perception={got} truth={want}"
            checked += 1
    assert checked > 20000


def test_antisymmetric_pairs_exhaustive_all_modes():
    model = DetectorModel()
    for seed in range(40):
        rnd = random.Random(1000 + seed)
        scene = georacle.sample_relation_scene(rnd, overlap_heavy=True)
        cam = scene.camera
        for mode in Mode:
            p = perceive(scene, cam, model, n=1, mode=mode)
            labels = sorted(o.label for o in scene.objects)
            for a, b in permutations(labels, 2):
                assert ground_relation("Left", (a, b), p) == ground_relation("Right", (b, a), p)
                assert ground_relation("InFront", (a, b), p) == ground_relation("Behind", (b, a), p)
                assert ground_relation("On", (a, b), p) == ground_relation("Under", (b, a), p)
                assert ground_relation("Hold", (a, b), p) == ground_relation("Holding", (a, b), p)


def test_ablation_modes_degrade_in_order():
    """FULL is exact at zero noise; nominal shapes lose contact and containment
    relations; pixel-only rules lose depth separation on top of that."""
    model = DetectorModel()
    totals = {mode: 0 for mode in Mode}
    correct = {mode: 0 for mode in Mode}
    for seed in range(150):
        rnd = random.Random(5000 + seed)
        scene = georacle.sample_relation_scene(rnd, overlap_heavy=seed % 2 == 0)
        cam = scene.camera
        percepts = {mode: perceive(scene, cam, model, n=1, mode=mode) for mode in Mode}
        for pred, args in _relation_atoms(scene):
            want = georacle.truth(pred, args, scene, cam)
            for mode in Mode:
                got = ground_relation(pred, args, percepts[mode])
                totals[mode] += 1
                correct[mode] += got == want
    acc = {mode: correct[mode] / totals[mode] for mode in Mode}
    assert acc[Mode.FULL] == 1.0
    assert acc[Mode.FULL] > acc[Mode.NO_SHAPE] > acc[Mode.NO_DEPTH]


# --- query_vision ------------------------------------------------------------------


def test_query_empty_conjunction_is_vacuous():
    scene = desk_scene()
    ok, boxes, depths = query_vision(State(), scene, scene.camera, DetectorModel())
    assert ok is True and boxes == {} and depths == {}


def test_query_conforming_state():
    scene = desk_scene()
    s = State.parse(["On(brush, table)", "Found(cup)", "CloseTo(brush, cup)"])
    ok, boxes, depths = query_vision(s, scene, scene.camera, DetectorModel(seed=2))
    assert ok is True
    assert set(boxes) == {"brush", "table", "cup"}
    assert set(depths) == {"brush", "table", "cup"}
    for d in depths.values():
        assert 0.0 < d < 2.5


def test_query_false_relation_reports_evidence():
    scene = desk_scene()
    s = State.parse(["On(table, brush)"])
    ok, boxes, depths = query_vision(s, scene, scene.camera, DetectorModel(seed=2))
    assert ok is False
    assert set(boxes) == {"brush", "table"}  # terms were all found, claim just fails
    assert depths != -1


def test_query_unknown_term_times_out():
    scene = desk_scene()
    s = State.parse(["Found(ghost)"])
    ok, boxes, depths = query_vision(s, scene, scene.camera, DetectorModel(seed=4), tau=3)
    assert (ok, boxes, depths) == (False, {}, -1)


def test_query_zero_budget_times_out_when_term_unseen():
    scene = desk_scene()
    s = State.parse(["Found(hind_block)"])
    ok, boxes, depths = query_vision(s, scene, scene.camera, DetectorModel(seed=4), tau=0)
    assert (ok, boxes, depths) == (False, {}, -1)


def test_query_sweep_finds_object_behind_camera():
    cam = Camera(position=(0, 0, 1.2), yaw=0.0, pitch=-0.15)
    # target sits directly behind the initial gaze
    target = SceneObject("valve", "valve", Box((-1.2, -0.06, 0.72), (-1.08, 0.06, 0.84)))
    front = SceneObject("table", "table", Box((0.9, -0.45, 0.0), (1.65, 0.45, 0.7)))
    scene = Scene([target, front], cam)
    s = State.parse(["Found(valve)"])
    for seed in range(5):
        ok, boxes, depths = query_vision(s, scene, cam, DetectorModel(seed=seed), tau=8)
        assert ok is True, f"sweep missed the target with seed {seed}"
        assert "valve" in boxes and depths["valve"] > 0.0


def test_query_determinism():
    scene = desk_scene()
    s = State.parse(["On(brush, table)", "Found(cup)"])
    model = DetectorModel(tp_rate=0.9, confusion=0.1, px_jitter=0.5, depth_sigma=0.01, seed=77)
    first = query_vision(s, scene, scene.camera, model)
    second = query_vision(s, scene, scene.camera, model)
    assert first == second


def test_default_rules_cover_exactly_the_shared_vocabulary():
    rules = default_rules()
    spatial = {
        "On",
        "Under",
        "Inside",
        "CloseTo",
        "At",
        "Left",
        "Right",
        "InFront",
        "Behind",
        "Hold",
        "Free",
        "Empty",
        "Clear",
    }
    assert spatial <= set(rules)
    # alias spellings resolve to the same procedures
    assert rules["Holding"].kind == rules["Hold"].kind
    assert rules["Detected"].kind == rules["Found"].kind
