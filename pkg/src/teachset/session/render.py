"""Tiny ray-cast renderer: a textured cuboid inside a panelled room.

Every render comes with exact ground truth, so each descriptor can be
checked against what a careful human coder would have recorded.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from ..geometry import BBox, CameraPose, DegenerateGeometry, ObjectFrame, Side, classify_side
from ..imaging import box_blur
from ..metrics import PhotoAnnotation

Color = tuple[int, int, int]
SIDE_ORDER = (Side.POS_X, Side.NEG_X, Side.POS_Y, Side.NEG_Y, Side.POS_Z, Side.NEG_Z)
# repeated box passes approximate a defocus kernel
BLUR_PASSES = 3
_WALL_IDS = {"+X": 0, "-X": 1, "+Z": 2, "-Z": 3}


def _color(c: Sequence[int]) -> Color:
    if len(c) != 3 or any(not 0 <= int(v) <= 255 for v in c):
        raise ValueError(f"invalid colour {c!r}")
    return (int(c[0]), int(c[1]), int(c[2]))


@dataclass(frozen=True)
class Cuboid:
    """Box with one colour per face, optionally striped with a second colour."""

    size: tuple[float, float, float] = (0.12, 0.12, 0.12)
    face_colors: tuple[Color, ...] = ((200, 40, 40),) * 6  # SIDE_ORDER
    stripe_color: Optional[Color] = None
    stripes: int = 0

    def __post_init__(self) -> None:
        if len(self.size) != 3 or min(self.size) <= 0:
            raise ValueError("object size must be three positive lengths")
        if len(self.face_colors) != 6:
            raise ValueError("a cuboid needs six face colours")
        object.__setattr__(self, "size", tuple(float(s) for s in self.size))
        object.__setattr__(self, "face_colors", tuple(_color(c) for c in self.face_colors))
        if self.stripe_color is not None:
            object.__setattr__(self, "stripe_color", _color(self.stripe_color))


@dataclass(frozen=True)
class Room:
    """Axis-aligned room centred on the world origin.

    Walls are split into vertical panels of ``panel_width`` metres coloured
    from ``palette``; the panel under the optical axis names the photo's
    background group. ``checker`` adds a light/dark band pattern.
    """

    name: str = "room"
    palette: tuple[Color, ...] = ((120, 120, 125), (135, 128, 118), (112, 122, 112))
    panel_width: float = 0.5
    half_size: float = 2.5
    floor_color: Color = (95, 90, 85)
    checker: bool = False

    def __post_init__(self) -> None:
        if not self.palette:
            raise ValueError("room palette must not be empty")
        if self.panel_width <= 0 or self.half_size <= 0:
            raise ValueError("room dimensions must be positive")
        object.__setattr__(self, "palette", tuple(_color(c) for c in self.palette))
        object.__setattr__(self, "floor_color", _color(self.floor_color))


@dataclass(frozen=True)
class Intrinsics:
    focal: float = 150.0
    width: int = 128
    height: int = 128

    def __post_init__(self) -> None:
        if self.width < 16 or self.height < 16:
            raise ValueError("image size must be at least 16x16")
        if self.focal <= 0:
            raise ValueError("focal length must be positive")


@dataclass(frozen=True)
class HandPatch:
    """Square patch of skin tone; ``center`` is in normalized image coordinates."""

    tone: Color = (224, 172, 105)
    fraction: float = 0.02
    center: tuple[float, float] = (0.15, 0.85)

    def __post_init__(self) -> None:
        if not 0 < self.fraction < 1:
            raise ValueError("hand fraction must lie in (0, 1)")
        object.__setattr__(self, "tone", _color(self.tone))


@dataclass(frozen=True)
class SceneSpec:
    name: str = "object"
    object: Cuboid = field(default_factory=Cuboid)
    frame: ObjectFrame = field(default_factory=ObjectFrame)
    background: Room = field(default_factory=Room)
    camera: Intrinsics = field(default_factory=Intrinsics)
    hand: Optional[HandPatch] = None
    blur_radius: int = 0

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "object": {
                "size": list(self.object.size),
                "face_colors": [list(c) for c in self.object.face_colors],
                "stripe_color": list(self.object.stripe_color) if self.object.stripe_color else None,
                "stripes": self.object.stripes,
            },
            "frame": self.frame.to_json(),
            "background": {
                "name": self.background.name,
                "palette": [list(c) for c in self.background.palette],
                "panel_width": self.background.panel_width,
                "half_size": self.background.half_size,
                "floor_color": list(self.background.floor_color),
                "checker": self.background.checker,
            },
            "camera": {"focal": self.camera.focal, "width": self.camera.width, "height": self.camera.height},
            "hand": None
            if self.hand is None
            else {"tone": list(self.hand.tone), "fraction": self.hand.fraction, "center": list(self.hand.center)},
            "blur_radius": self.blur_radius,
        }

    @classmethod
    def from_json(cls, d: dict) -> "SceneSpec":
        obj = d.get("object", {})
        bg = d.get("background", {})
        cam = d.get("camera", {})
        hand = d.get("hand")
        return cls(
            name=d.get("name", "object"),
            object=Cuboid(
                size=tuple(obj.get("size", (0.12, 0.12, 0.12))),
                face_colors=tuple(tuple(c) for c in obj.get("face_colors", Cuboid().face_colors)),
                stripe_color=tuple(obj["stripe_color"]) if obj.get("stripe_color") else None,
                stripes=int(obj.get("stripes", 0)),
            ),
            frame=ObjectFrame.from_json(d["frame"]) if "frame" in d else ObjectFrame(),
            background=Room(
                name=bg.get("name", "room"),
                palette=tuple(tuple(c) for c in bg.get("palette", Room().palette)),
                panel_width=float(bg.get("panel_width", 0.5)),
                half_size=float(bg.get("half_size", 2.5)),
                floor_color=tuple(bg.get("floor_color", Room().floor_color)),
                checker=bool(bg.get("checker", False)),
            ),
            camera=Intrinsics(float(cam.get("focal", 150.0)), int(cam.get("width", 128)), int(cam.get("height", 128))),
            hand=None
            if hand is None
            else HandPatch(tuple(hand["tone"]), float(hand["fraction"]), tuple(hand.get("center", (0.15, 0.85)))),
            blur_radius=int(d.get("blur_radius", 0)),
        )


def camera_basis(pose: CameraPose) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Forward, right and up unit vectors; world +Y is up unless looking along it."""
    f = np.asarray(pose.view_dir)
    up = np.array([0.0, 1.0, 0.0])
    r = np.cross(f, up)
    if np.linalg.norm(r) < 1e-9:
        r = np.cross(f, np.array([0.0, 0.0, -1.0]))
    r /= np.linalg.norm(r)
    u = np.cross(r, f)
    return f, r, u


def _box_corners(spec: SceneSpec) -> np.ndarray:
    half = np.asarray(spec.object.size) / 2.0
    axes = spec.frame.matrix
    signs = np.array([[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)], dtype=float)
    return np.asarray(spec.frame.center) + (signs * half) @ axes


def _inside_object(spec: SceneSpec, point: np.ndarray) -> bool:
    local = spec.frame.matrix @ (point - np.asarray(spec.frame.center))
    return bool(np.all(np.abs(local) <= np.asarray(spec.object.size) / 2.0))


def projected_extent(spec: SceneSpec, pose: CameraPose) -> tuple[float, float, float, float]:
    """Unclipped normalized extent (x0, y0, x1, y1) of the object's silhouette."""
    p = np.asarray(pose.position)
    if _inside_object(spec, p):
        raise DegenerateGeometry("camera is inside the object")
    f, r, u = camera_basis(pose)
    q = _box_corners(spec) - p
    depth = q @ f
    if np.any(depth <= 1e-6):
        raise DegenerateGeometry("object is not entirely in front of the camera")
    cam = spec.camera
    px = cam.width / 2.0 + cam.focal * (q @ r) / depth
    py = cam.height / 2.0 - cam.focal * (q @ u) / depth
    return (
        float(px.min() / cam.width),
        float(py.min() / cam.height),
        float(px.max() / cam.width),
        float(py.max() / cam.height),
    )


def _wall_lookup(room: Room, origin: np.ndarray, dirs: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """For rays leaving ``origin``: wall id (0..3 walls, 4 floor/ceiling), panel index, band index."""
    R = room.half_size
    if np.any(np.abs(origin) >= R):
        raise DegenerateGeometry("camera is outside the room")
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(dirs > 0, (R - origin) / dirs, np.where(dirs < 0, (-R - origin) / dirs, np.inf))
    axis = np.argmin(t, axis=-1)
    tmin = np.take_along_axis(t, axis[..., None], axis=-1)[..., 0]
    hit = origin + dirs * tmin[..., None]
    sign = np.take_along_axis(dirs, axis[..., None], axis=-1)[..., 0] > 0
    wall = np.where(
        axis == 0, np.where(sign, 0, 1), np.where(axis == 2, np.where(sign, 2, 3), 4)
    )
    along = np.where(axis == 0, hit[..., 2], hit[..., 0])
    panel = np.floor((along + R) / room.panel_width).astype(np.int64)
    band = np.floor((hit[..., 1] + R) / room.panel_width).astype(np.int64)
    return wall, panel, band


def _background_colors(room: Room, wall: np.ndarray, panel: np.ndarray, band: np.ndarray) -> np.ndarray:
    palette = np.asarray(room.palette, dtype=np.float64)
    idx = (wall * 3 + panel) % len(palette)
    out = palette[idx]
    out = np.where((wall == 4)[..., None], np.asarray(room.floor_color, dtype=np.float64), out)
    if room.checker:
        shade = np.where(((panel + band) % 2 == 0)[..., None], 10.0, -10.0)
        out = np.clip(out + shade, 0, 255)
    return out


def background_group(room: Room, pose: CameraPose) -> str:
    wall, panel, _ = _wall_lookup(room, np.asarray(pose.position), np.asarray(pose.view_dir)[None, :])
    w = int(wall[0])
    if w == 4:
        return f"{room.name}:floor"
    name = [k for k, v in _WALL_IDS.items() if v == w][0]
    return f"{room.name}:{name}{int(panel[0])}"


def _object_hits(spec: SceneSpec, origin: np.ndarray, dirs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Hit mask and colour for primary rays against the cuboid (slab test)."""
    axes = spec.frame.matrix
    half = np.asarray(spec.object.size) / 2.0
    o = axes @ (origin - np.asarray(spec.frame.center))
    d = dirs @ axes.T
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = (-half - o) / d
        t2 = (half - o) / d
    lo = np.fmin(t1, t2)
    hi = np.fmax(t1, t2)
    t_near = np.nanmax(lo, axis=-1)
    t_far = np.nanmin(hi, axis=-1)
    hit = (t_near <= t_far) & (t_far > 0) & (t_near > 0)
    axis = np.nanargmax(np.where(np.isnan(lo), -np.inf, lo), axis=-1)
    dir_on_axis = np.take_along_axis(d, axis[..., None], axis=-1)[..., 0]
    positive = dir_on_axis < 0  # ray enters through the face whose normal opposes it
    face = axis * 2 + np.where(positive, 0, 1)  # matches SIDE_ORDER
    colors = np.asarray(spec.object.face_colors, dtype=np.float64)[face]
    if spec.object.stripes > 0 and spec.object.stripe_color is not None:
        local = o + d * np.where(np.isfinite(t_near), t_near, 0.0)[..., None]
        # stripe along the first tangent axis of the hit face
        tangent = np.where(axis == 0, 2, 0)
        coord = np.take_along_axis(local, tangent[..., None], axis=-1)[..., 0]
        span = np.take(2 * half, tangent)
        k = np.floor((coord + span / 2) / span * spec.object.stripes).astype(np.int64)
        colors = np.where((k % 2 == 1)[..., None], np.asarray(spec.object.stripe_color, float), colors)
    return hit, colors


def pixel_rays(cam: Intrinsics, pose: CameraPose) -> np.ndarray:
    f, r, u = camera_basis(pose)
    xs = (np.arange(cam.width) + 0.5 - cam.width / 2.0) / cam.focal
    ys = (np.arange(cam.height) + 0.5 - cam.height / 2.0) / cam.focal
    dirs = f + xs[None, :, None] * r - ys[:, None, None] * u
    return dirs / np.linalg.norm(dirs, axis=-1, keepdims=True)


def hand_box(hand: HandPatch, cam: Intrinsics) -> tuple[int, int, int]:
    """(top row, left col, side) of the patch, kept fully inside the frame."""
    side = max(1, int(round(math.sqrt(hand.fraction * cam.width * cam.height))))
    side = min(side, cam.width, cam.height)
    col = int(round(hand.center[0] * cam.width - side / 2))
    row = int(round(hand.center[1] * cam.height - side / 2))
    col = min(max(col, 0), cam.width - side)
    row = min(max(row, 0), cam.height - side)
    return row, col, side


def annotate(spec: SceneSpec, pose: CameraPose) -> PhotoAnnotation:
    """Ground truth for a render without producing pixels."""
    x0, y0, x1, y1 = projected_extent(spec, pose)
    cx0, cy0, cx1, cy1 = max(x0, 0.0), max(y0, 0.0), min(x1, 1.0), min(y1, 1.0)
    bbox = BBox(cx0, cy0, cx1, cy1) if cx0 < cx1 and cy0 < cy1 else None
    cropped = bbox is not None and (x0 < 0.0 or y0 < 0.0 or x1 > 1.0 or y1 > 1.0)
    hand_fraction = None
    if spec.hand is not None:
        _, _, s = hand_box(spec.hand, spec.camera)
        hand_fraction = s * s / (spec.camera.width * spec.camera.height)
    return PhotoAnnotation(
        cropped=cropped,
        hand=spec.hand is not None,
        blurry=spec.blur_radius > 0,
        bbox=bbox,
        background_group=background_group(spec.background, pose),
        perspective_group=classify_side(pose, spec.frame).value,
        hand_fraction=hand_fraction if hand_fraction is not None else 0.0,
    )


def render_scene(spec: SceneSpec, pose: CameraPose) -> tuple[np.ndarray, PhotoAnnotation]:
    ann = annotate(spec, pose)  # validates the pose first
    origin = np.asarray(pose.position)
    dirs = pixel_rays(spec.camera, pose)
    wall, panel, band = _wall_lookup(spec.background, origin, dirs)
    img = _background_colors(spec.background, wall, panel, band)
    hit, colors = _object_hits(spec, origin, dirs)
    img = np.where(hit[..., None], colors, img)
    if spec.hand is not None:
        row, col, s = hand_box(spec.hand, spec.camera)
        img[row : row + s, col : col + s] = spec.hand.tone
    for _ in range(BLUR_PASSES if spec.blur_radius > 0 else 0):
        img = box_blur(img, spec.blur_radius)
    return np.clip(np.floor(img + 0.5), 0, 255).astype(np.uint8), ann


def with_variation(spec: SceneSpec, **changes) -> SceneSpec:
    return replace(spec, **changes)
