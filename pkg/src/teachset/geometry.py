"""Normalized bounding boxes, camera poses and the object-side classifier."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

import numpy as np

DEFAULT_EDGE_EPS = 0.005


class DegenerateGeometry(ValueError):
    """Raised when a pose or frame configuration has no defined answer."""


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box in normalized image coordinates (origin top-left)."""

    x0: float
    y0: float
    x1: float
    y1: float

    def __post_init__(self) -> None:
        if not (0.0 <= self.x0 < self.x1 <= 1.0 and 0.0 <= self.y0 < self.y1 <= 1.0):
            raise ValueError(f"invalid normalized bbox {self.as_list()}")

    def as_list(self) -> list[float]:
        return [self.x0, self.y0, self.x1, self.y1]

    @classmethod
    def from_list(cls, values: Sequence[float]) -> "BBox":
        if len(values) != 4:
            raise ValueError("bbox needs exactly four values [x0, y0, x1, y1]")
        return cls(*(float(v) for v in values))


def bbox_area_fraction(b: BBox) -> float:
    return (b.x1 - b.x0) * (b.y1 - b.y0)


def bbox_touches_edge(b: BBox, eps: float = DEFAULT_EDGE_EPS) -> bool:
    if eps < 0:
        raise ValueError("eps must be non-negative")
    return b.x0 <= eps or b.y0 <= eps or b.x1 >= 1.0 - eps or b.y1 >= 1.0 - eps


def _snap(x: float) -> float:
    # quarter turns must give exact 0/±1 so face-on renders stay exact
    r = round(float(x))
    return float(r) if abs(x - r) < 1e-12 else float(x)


def _vec3(values: Sequence[float], name: str) -> tuple[float, float, float]:
    arr = np.asarray(values, dtype=np.float64)
    if arr.shape != (3,) or not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be a finite 3-vector")
    return (float(arr[0]), float(arr[1]), float(arr[2]))


@dataclass(frozen=True)
class CameraPose:
    position: tuple[float, float, float]
    view_dir: tuple[float, float, float]

    def __post_init__(self) -> None:
        object.__setattr__(self, "position", _vec3(self.position, "position"))
        object.__setattr__(self, "view_dir", _vec3(self.view_dir, "view_dir"))
        norm = float(np.linalg.norm(self.view_dir))
        if abs(norm - 1.0) > 1e-6:
            raise ValueError(f"view_dir must be a unit vector (norm {norm:.9f})")

    @classmethod
    def looking(cls, position: Sequence[float], direction: Sequence[float]) -> "CameraPose":
        """Build a pose from a non-normalized viewing direction."""
        d = np.asarray(direction, dtype=np.float64)
        n = float(np.linalg.norm(d))
        if n == 0.0:
            raise DegenerateGeometry("viewing direction has zero length")
        return cls(tuple(position), tuple(d / n))

    @classmethod
    def look_at(cls, position: Sequence[float], target: Sequence[float]) -> "CameraPose":
        return cls.looking(position, np.asarray(target, float) - np.asarray(position, float))

    def to_json(self) -> dict:
        return {"position": list(self.position), "view_dir": list(self.view_dir)}

    @classmethod
    def from_json(cls, data: dict) -> "CameraPose":
        return cls(tuple(data["position"]), tuple(data["view_dir"]))


@dataclass(frozen=True)
class ObjectFrame:
    """Object center plus its local X/Y/Z axes (rows of ``axes``) in world frame."""

    center: tuple[float, float, float] = (0.0, 0.0, 0.0)
    axes: tuple[
        tuple[float, float, float], tuple[float, float, float], tuple[float, float, float]
    ] = ((1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0))

    def __post_init__(self) -> None:
        object.__setattr__(self, "center", _vec3(self.center, "center"))
        rows = tuple(_vec3(a, "axis") for a in self.axes)
        if len(rows) != 3:
            raise ValueError("object frame needs three axes")
        m = np.asarray(rows)
        if not np.allclose(m @ m.T, np.eye(3), atol=1e-6):
            raise ValueError("object axes must be orthonormal")
        object.__setattr__(self, "axes", rows)

    @property
    def matrix(self) -> np.ndarray:
        return np.asarray(self.axes, dtype=np.float64)

    @classmethod
    def rotated_about_y(cls, angle: float, center: Sequence[float] = (0.0, 0.0, 0.0)) -> "ObjectFrame":
        c, s = _snap(np.cos(angle)), _snap(np.sin(angle))
        return cls(tuple(center), ((c, 0.0, -s), (0.0, 1.0, 0.0), (s, 0.0, c)))

    def to_json(self) -> dict:
        return {"center": list(self.center), "axes": [list(a) for a in self.axes]}

    @classmethod
    def from_json(cls, data: dict) -> "ObjectFrame":
        return cls(tuple(data.get("center", (0.0, 0.0, 0.0))), tuple(tuple(a) for a in data["axes"]))


class Side(str, enum.Enum):
    POS_X = "+X"
    NEG_X = "-X"
    POS_Y = "+Y"
    NEG_Y = "-Y"
    POS_Z = "+Z"
    NEG_Z = "-Z"

    @property
    def axis(self) -> int:
        return "XYZ".index(self.value[1])

    @property
    def sign(self) -> float:
        return 1.0 if self.value[0] == "+" else -1.0

    @classmethod
    def from_axis(cls, axis: int, positive: bool) -> "Side":
        return cls(("+" if positive else "-") + "XYZ"[axis])


def classify_side(pose: CameraPose, frame: ObjectFrame) -> Side:
    """Face of the object's enclosing box that faces the camera most directly.

    Dominant component of the camera offset in object coordinates; ties go to
    the earlier axis (X, Y, Z).
    """
    v = np.subtract(pose.position, frame.center)
    if not np.any(v):
        raise DegenerateGeometry("camera position coincides with the object center")
    local = frame.matrix @ v
    axis = int(np.argmax(np.abs(local)))
    return Side.from_axis(axis, bool(local[axis] >= 0))
