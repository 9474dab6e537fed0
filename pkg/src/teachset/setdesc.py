"""Set-level descriptors: variation in size, perspective and background.

Location spread is the root-mean-square distance of camera positions from
their centroid. Orientation spread is the root-mean-square cosine distance
of view directions from the normalized mean direction. Both are divided by
``sd_max`` and shown as a percentage.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .geometry import CameraPose, DegenerateGeometry, Side
from .photodesc import WIRE_FLAGS, PhotoDescriptors


@dataclass(frozen=True)
class SetDescConfig:
    sd_max: float = 0.15
    side_scale: float = 15.0
    clamp_at_100: bool = True

    def __post_init__(self) -> None:
        if self.sd_max <= 0:
            raise ValueError("sd_max must be positive")

    def to_json(self) -> dict:
        return asdict(self)


def _pct(sd: float, cfg: SetDescConfig) -> float:
    value = sd / cfg.sd_max * 100.0
    if cfg.clamp_at_100:
        value = min(max(value, 0.0), 100.0)
    return value


def location_spread(positions: Sequence[Sequence[float]]) -> float:
    pts = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
    if len(pts) == 0:
        raise ValueError("location spread needs at least one position")
    # centring on the first point first makes identical positions give exactly 0
    shifted = pts - pts[0]
    dev = shifted - shifted.mean(axis=0)
    return float(np.sqrt(np.mean(np.sum(dev * dev, axis=1))))


def orientation_spread(view_dirs: Sequence[Sequence[float]]) -> float:
    dirs = np.asarray(view_dirs, dtype=np.float64).reshape(-1, 3)
    if len(dirs) == 0:
        raise ValueError("orientation spread needs at least one direction")
    dirs = dirs / np.linalg.norm(dirs, axis=1, keepdims=True)
    if np.all(dirs == dirs[0]):
        return 0.0
    mean = dirs.mean(axis=0)
    norm = float(np.linalg.norm(mean))
    if norm < 1e-9:
        raise DegenerateGeometry("view directions cancel out; mean orientation is undefined")
    cos_dist = 1.0 - np.clip(dirs @ (mean / norm), -1.0, 1.0)
    return float(np.sqrt(np.mean(cos_dist * cos_dist)))


def variation_in_size(positions: Sequence[Sequence[float]], cfg: SetDescConfig = SetDescConfig()) -> float:
    return _pct(location_spread(positions), cfg)


def variation_in_perspective(sides: Sequence[Optional[Side]], cfg: SetDescConfig = SetDescConfig()) -> float:
    """``n * side_scale`` where n is the number of distinct resolved sides."""
    n = len({s for s in sides if s is not None})
    return n * cfg.side_scale


def variation_in_background(poses: Sequence[CameraPose], cfg: SetDescConfig = SetDescConfig()) -> float:
    if len(poses) == 0:
        raise ValueError("background variation needs at least one pose")
    loc = location_spread([p.position for p in poses])
    orient = orientation_spread([p.view_dir for p in poses])
    return _pct(max(loc, orient), cfg)


def aggregate_flags(ds: Sequence[PhotoDescriptors]) -> dict[str, float]:
    """Percentage of photos for which each flag is true."""
    if len(ds) == 0:
        raise ValueError("cannot aggregate flags of an empty set")
    return {name: 100.0 * sum(d.flag(name) for d in ds) / len(ds) for name in WIRE_FLAGS}


@dataclass(frozen=True)
class SetDescriptors:
    """Set summary. ``None`` in a variation field means it could not be computed."""

    var_size_pct: Optional[float]
    var_perspective_pct: Optional[float]
    var_background_pct: Optional[float]
    flag_percentages: dict[str, float]
    photo_count: int
    raw: dict[str, Optional[float]] = field(default_factory=dict)

    @property
    def unavailable(self) -> list[str]:
        return [
            k
            for k in ("var_size_pct", "var_perspective_pct", "var_background_pct")
            if getattr(self, k) is None
        ]

    def to_json(self) -> dict:
        return {
            "version": 1,
            "var_size_pct": self.var_size_pct,
            "var_perspective_pct": self.var_perspective_pct,
            "var_background_pct": self.var_background_pct,
            "flags": dict(self.flag_percentages),
            "photo_count": self.photo_count,
            "unavailable": self.unavailable,
            "raw": dict(self.raw),
        }

    @classmethod
    def from_json(cls, d: dict) -> "SetDescriptors":
        return cls(
            var_size_pct=d.get("var_size_pct"),
            var_perspective_pct=d.get("var_perspective_pct"),
            var_background_pct=d.get("var_background_pct"),
            flag_percentages=dict(d["flags"]),
            photo_count=int(d["photo_count"]),
            raw=dict(d.get("raw", {})),
        )


def set_summary(
    descriptors: Sequence[PhotoDescriptors],
    poses: Optional[Sequence[Optional[CameraPose]]] = None,
    sides: Optional[Sequence[Optional[Side]]] = None,
    cfg: SetDescConfig = SetDescConfig(),
) -> SetDescriptors:
    """Bundle every set-level descriptor for one training set.

    Pose-based variations are ``None`` unless every photo has a pose; the
    perspective variation is ``None`` when no side information is given.
    """
    if len(descriptors) == 0:
        raise ValueError("cannot summarize an empty set")
    n = len(descriptors)
    if poses is not None and len(poses) != n:
        raise ValueError(f"{len(poses)} poses for {n} photos")
    if sides is not None and len(sides) != n:
        raise ValueError(f"{len(sides)} sides for {n} photos")

    raw: dict[str, Optional[float]] = {"sd_loc": None, "sd_orient": None, "sides": None}
    var_size = var_bg = None
    if poses is not None and all(p is not None for p in poses):
        sd_loc = location_spread([p.position for p in poses])
        sd_orient = orientation_spread([p.view_dir for p in poses])
        raw.update(
            sd_loc=sd_loc,
            sd_orient=sd_orient,
            var_size_unclamped=sd_loc / cfg.sd_max * 100.0,
            var_background_unclamped=max(sd_loc, sd_orient) / cfg.sd_max * 100.0,
        )
        var_size = _pct(sd_loc, cfg)
        var_bg = _pct(max(sd_loc, sd_orient), cfg)
    var_persp = None
    if sides is not None:
        var_persp = variation_in_perspective(sides, cfg)
        raw["sides"] = len({s for s in sides if s is not None})
    return SetDescriptors(
        var_size_pct=var_size,
        var_perspective_pct=var_persp,
        var_background_pct=var_bg,
        flag_percentages=aggregate_flags(descriptors),
        photo_count=n,
        raw=raw,
    )
