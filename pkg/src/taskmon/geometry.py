"""3D ground truth for the simulated world: boxes, pinhole camera, scenes.

World frame: x forward-ish, z up, meters. The camera yaws around z and
pitches around its right axis. Pixel coordinates are floats; (0, 0) is the
top-left image corner, u grows right, v grows down.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import yaml

Vec = tuple[float, float, float]


def _add(a: Vec, b: Vec) -> Vec:
    return (a[0] + b[0], a[1] + b[1], a[2] + b[2])


def _sub(a: Vec, b: Vec) -> Vec:
    return (a[0] - b[0], a[1] - b[1], a[2] - b[2])


def _scale(a: Vec, k: float) -> Vec:
    return (a[0] * k, a[1] * k, a[2] * k)


def _dot(a: Vec, b: Vec) -> float:
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]


def _norm(a: Vec) -> float:
    return math.sqrt(_dot(a, a))


def _unit(a: Vec) -> Vec:
    n = _norm(a)
    if n == 0.0:
        raise ValueError("zero vector")
    return _scale(a, 1.0 / n)


def dist(a: Vec, b: Vec) -> float:
    return _norm(_sub(a, b))


@dataclass(frozen=True)
class Box:
    """Axis-aligned box; extents strictly positive."""

    lo: Vec
    hi: Vec

    def __post_init__(self):
        if not all(h > l for l, h in zip(self.lo, self.hi)):
            raise ValueError(f"box extents must be positive: {self.lo} .. {self.hi}")

    @property
    def center(self) -> Vec:
        return tuple((l + h) / 2.0 for l, h in zip(self.lo, self.hi))

    @property
    def size(self) -> Vec:
        return tuple(h - l for l, h in zip(self.lo, self.hi))

    @property
    def volume(self) -> float:
        sx, sy, sz = self.size
        return sx * sy * sz

    def contains(self, p: Vec) -> bool:
        return all(l <= c <= h for l, c, h in zip(self.lo, p, self.hi))

    def dilated(self, margin: float) -> "Box":
        return Box(
            tuple(l - margin for l in self.lo),
            tuple(h + margin for h in self.hi),
        )

    def intersection_volume(self, other: "Box") -> float:
        v = 1.0
        for lo1, hi1, lo2, hi2 in zip(self.lo, self.hi, other.lo, other.hi):
            span = min(hi1, hi2) - max(lo1, lo2)
            if span <= 0.0:
                return 0.0
            v *= span
        return v

    def footprint_overlap(self, other: "Box") -> float:
        """Horizontal (xy) overlap area divided by this box's footprint area."""
        w = min(self.hi[0], other.hi[0]) - max(self.lo[0], other.lo[0])
        d = min(self.hi[1], other.hi[1]) - max(self.lo[1], other.lo[1])
        if w <= 0.0 or d <= 0.0:
            return 0.0
        return (w * d) / ((self.hi[0] - self.lo[0]) * (self.hi[1] - self.lo[1]))

    def corners(self) -> list[Vec]:
        (x0, y0, z0), (x1, y1, z1) = self.lo, self.hi
        return [(x, y, z) for x in (x0, x1) for y in (y0, y1) for z in (z0, z1)]

    @staticmethod
    def from_center(center: Vec, size: Vec) -> "Box":
        return Box(
            tuple(c - s / 2.0 for c, s in zip(center, size)),
            tuple(c + s / 2.0 for c, s in zip(center, size)),
        )


def ray_box(origin: Vec, direction: Vec, box: Box) -> Optional[float]:
    """Slab intersection; returns the entry distance along the unit ray, or
    None. A ray starting inside returns 0."""
    t0, t1 = 0.0, math.inf
    for o, d, lo, hi in zip(origin, direction, box.lo, box.hi):
        if abs(d) < 1e-12:
            if o < lo or o > hi:
                return None
            continue
        ta, tb = (lo - o) / d, (hi - o) / d
        if ta > tb:
            ta, tb = tb, ta
        t0, t1 = max(t0, ta), min(t1, tb)
        if t0 > t1:
            return None
    return t0


@dataclass(frozen=True)
class Camera:
    position: Vec = (0.0, 0.0, 1.2)
    yaw: float = 0.0  # radians around +z, 0 looks along +x
    pitch: float = 0.0  # radians, positive up
    hfov: float = math.radians(60.0)
    vfov: float = math.radians(45.0)
    max_depth: float = 2.5
    width: float = 640.0
    height: float = 480.0

    def __post_init__(self):
        if not (0.0 < self.hfov < math.pi and 0.0 < self.vfov < math.pi):
            raise ValueError("field of view must be in (0, pi)")
        if self.max_depth <= 0.0:
            raise ValueError("max depth must be positive")

    @property
    def forward(self) -> Vec:
        cp, sp = math.cos(self.pitch), math.sin(self.pitch)
        return (cp * math.cos(self.yaw), cp * math.sin(self.yaw), sp)

    @property
    def right(self) -> Vec:
        return (math.sin(self.yaw), -math.cos(self.yaw), 0.0)

    @property
    def up(self) -> Vec:
        f, r = self.forward, self.right
        return (
            r[1] * f[2] - r[2] * f[1],
            r[2] * f[0] - r[0] * f[2],
            r[0] * f[1] - r[1] * f[0],
        )

    def depth_of(self, p: Vec) -> float:
        return _dot(_sub(p, self.position), self.forward)

    def project(self, p: Vec) -> Optional[tuple[float, float, float]]:
        """(u, v, forward depth), or None behind the image plane."""
        d = _sub(p, self.position)
        z = _dot(d, self.forward)
        if z <= 1e-9:
            return None
        x = _dot(d, self.right)
        y = _dot(d, self.up)
        u = self.width / 2.0 * (1.0 + x / (z * math.tan(self.hfov / 2.0)))
        v = self.height / 2.0 * (1.0 - y / (z * math.tan(self.vfov / 2.0)))
        return (u, v, z)

    def unproject(self, u: float, v: float, depth: float) -> Vec:
        """Inverse of project at the given forward depth."""
        x = (2.0 * u / self.width - 1.0) * math.tan(self.hfov / 2.0) * depth
        y = (1.0 - 2.0 * v / self.height) * math.tan(self.vfov / 2.0) * depth
        p = _add(self.position, _scale(self.forward, depth))
        p = _add(p, _scale(self.right, x))
        return _add(p, _scale(self.up, y))

    def pixel_ray(self, u: float, v: float) -> Vec:
        return _unit(_sub(self.unproject(u, v, 1.0), self.position))

    def in_view(self, p: Vec) -> bool:
        d = _sub(p, self.position)
        z = _dot(d, self.forward)
        if z <= 0.0 or z > self.max_depth:
            return False
        x = _dot(d, self.right)
        y = _dot(d, self.up)
        return abs(x / z) <= math.tan(self.hfov / 2.0) and abs(y / z) <= math.tan(self.vfov / 2.0)

    def project_box(self, box: Box) -> Optional[tuple[float, float, float, float]]:
        """Pixel AABB over the box corners; None if any corner is behind."""
        us, vs = [], []
        for c in box.corners():
            pr = self.project(c)
            if pr is None:
                return None
            us.append(pr[0])
            vs.append(pr[1])
        return (min(us), min(vs), max(us), max(vs))

    def aimed_at(self, p: Vec) -> "Camera":
        d = _sub(p, self.position)
        yaw = math.atan2(d[1], d[0])
        horiz = math.hypot(d[0], d[1])
        pitch = math.atan2(d[2], horiz)
        return replace(self, yaw=yaw, pitch=pitch)


@dataclass
class SceneObject:
    id: str
    label: str  # vocabulary term this object grounds
    box: Box
    supported_by: Optional[str] = None
    proprio: bool = False  # robot's own parts: always perceivable


@dataclass
class Scene:
    objects: list[SceneObject]
    camera: Camera
    attachments: dict[str, str] = field(default_factory=dict)  # holder id -> held id
    vision_on: bool = True
    frame: int = 0

    def __post_init__(self):
        self._index = {o.id: o for o in self.objects}
        if len(self._index) != len(self.objects):
            raise ValueError("duplicate object ids")
        for holder, held in self.attachments.items():
            if holder not in self._index or held not in self._index:
                raise ValueError(f"attachment {holder}->{held} references a missing object")
        for o in self.objects:
            seen = {o.id}
            cur = o.supported_by
            while cur is not None:
                if cur in seen:
                    raise ValueError(f"support cycle through {cur}")
                seen.add(cur)
                cur = self._index[cur].supported_by

    def get(self, obj_id: str) -> SceneObject:
        return self._index[obj_id]

    def by_label(self, label: str) -> Optional[SceneObject]:
        for o in self.objects:
            if o.label == label:
                return o
        return None

    def copy(self) -> "Scene":
        return Scene(
            [SceneObject(o.id, o.label, o.box, o.supported_by, o.proprio) for o in self.objects],
            self.camera,
            dict(self.attachments),
            self.vision_on,
            self.frame,
        )

    def to_dict(self) -> dict:
        cam = self.camera
        return {
            "camera": {
                "position": list(cam.position),
                "yaw": cam.yaw,
                "pitch": cam.pitch,
                "hfov": cam.hfov,
                "vfov": cam.vfov,
                "max_depth": cam.max_depth,
            },
            "objects": [
                {
                    "id": o.id,
                    "label": o.label,
                    "box": [list(o.box.lo), list(o.box.hi)],
                    **({"supported_by": o.supported_by} if o.supported_by else {}),
                    **({"proprio": True} if o.proprio else {}),
                }
                for o in self.objects
            ],
            "attachments": dict(self.attachments),
            "vision_on": self.vision_on,
            "frame": self.frame,
        }

    @staticmethod
    def from_dict(doc: dict) -> "Scene":
        c = doc.get("camera", {})
        cam = Camera(
            position=tuple(c.get("position", (0.0, 0.0, 1.2))),
            yaw=float(c.get("yaw", 0.0)),
            pitch=float(c.get("pitch", 0.0)),
            hfov=float(c.get("hfov", math.radians(60.0))),
            vfov=float(c.get("vfov", math.radians(45.0))),
            max_depth=float(c.get("max_depth", 2.5)),
        )
        objs = [
            SceneObject(
                o["id"],
                o.get("label", o["id"]),
                Box(tuple(o["box"][0]), tuple(o["box"][1])),
                o.get("supported_by"),
                bool(o.get("proprio", False)),
            )
            for o in doc.get("objects", [])
        ]
        return Scene(
            objs,
            cam,
            dict(doc.get("attachments", {})),
            bool(doc.get("vision_on", True)),
            int(doc.get("frame", 0)),
        )


def load_scene(path: str) -> Scene:
    with open(path) as f:
        return Scene.from_dict(yaml.safe_load(f))


def save_scene(scene: Scene, path: str) -> None:
    with open(path, "w") as f:
        yaml.safe_dump(scene.to_dict(), f, sort_keys=True)
