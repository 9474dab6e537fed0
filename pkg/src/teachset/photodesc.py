"""Per-photo descriptors: small object, cropped object, blurry photo, hand in photo."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .detect import DetectorBackend, SegmenterBackend
from .geometry import DEFAULT_EDGE_EPS, bbox_area_fraction, bbox_touches_edge
from .imaging import DEFAULT_BLUR_THRESHOLD, blur_score

# order in which true flags are announced
FLAG_NAMES = ("small", "cropped", "blurry", "hand")
# wire names, same order, plus missingness
WIRE_FLAGS = ("small_object", "cropped_object", "blurry_photo", "hand_in_photo", "object_missing")


@dataclass(frozen=True)
class PhotoDescConfig:
    small_fraction: float = 0.125
    blur_threshold: float = DEFAULT_BLUR_THRESHOLD
    hand_threshold: float = 0.003
    edge_eps: float = DEFAULT_EDGE_EPS

    def __post_init__(self) -> None:
        for name in ("small_fraction", "blur_threshold", "hand_threshold", "edge_eps"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.small_fraction > 1:
            raise ValueError("small_fraction must be at most 1")

    def to_json(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class PhotoDescriptors:
    small: bool
    cropped: bool
    blurry: bool
    hand: bool
    object_missing: bool
    area_fraction: Optional[float]
    blur_variance: float
    hand_fraction: float
    bbox: Optional[list] = None
    detection_confidence: float = 0.0

    def flag(self, wire_name: str) -> bool:
        return {
            "small_object": self.small,
            "cropped_object": self.cropped,
            "blurry_photo": self.blurry,
            "hand_in_photo": self.hand,
            "object_missing": self.object_missing,
        }[wire_name]

    def to_json(self) -> dict:
        return {
            "small_object": self.small,
            "cropped_object": self.cropped,
            "blurry_photo": self.blurry,
            "hand_in_photo": self.hand,
            "object_missing": self.object_missing,
            "area_fraction": self.area_fraction,
            "blur_variance": self.blur_variance,
            "hand_fraction": self.hand_fraction,
            "bbox": self.bbox,
            "detection_confidence": self.detection_confidence,
        }

    @classmethod
    def from_json(cls, d: dict) -> "PhotoDescriptors":
        return cls(
            small=d["small_object"],
            cropped=d["cropped_object"],
            blurry=d["blurry_photo"],
            hand=d["hand_in_photo"],
            object_missing=d["object_missing"],
            area_fraction=d.get("area_fraction"),
            blur_variance=d["blur_variance"],
            hand_fraction=d["hand_fraction"],
            bbox=d.get("bbox"),
            detection_confidence=d.get("detection_confidence", 0.0),
        )


class DescriptorError(RuntimeError):
    """A backend failed while describing a specific photo."""

    def __init__(self, photo: str, cause: BaseException):
        super().__init__(f"{photo}: {cause}")
        self.photo = photo


def describe_photo(
    img: np.ndarray,
    detector: DetectorBackend,
    segmenter: SegmenterBackend,
    cfg: PhotoDescConfig = PhotoDescConfig(),
    photo: str = "<image>",
) -> PhotoDescriptors:
    try:
        det = detector.detect(img)
        hand_fraction = float(segmenter.hand_fraction(img))
    except Exception as exc:
        raise DescriptorError(photo, exc) from exc

    score = blur_score(img)
    if det.bbox is None:
        area, small, cropped, box = None, False, False, None
    else:
        area = bbox_area_fraction(det.bbox)
        small = area < cfg.small_fraction
        cropped = bbox_touches_edge(det.bbox, cfg.edge_eps)
        box = det.bbox.as_list()
    return PhotoDescriptors(
        small=small,
        cropped=cropped,
        blurry=score < cfg.blur_threshold,
        hand=hand_fraction > cfg.hand_threshold,
        object_missing=det.bbox is None,
        area_fraction=area,
        blur_variance=score,
        hand_fraction=hand_fraction,
        bbox=box,
        detection_confidence=det.confidence,
    )


def spoken_flags(d: PhotoDescriptors) -> list[str]:
    """Names of the flags that are true, in announcement order."""
    return [name for name in FLAG_NAMES if getattr(d, name)]
