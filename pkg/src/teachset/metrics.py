"""Ground-truth annotations, diversity statistics and estimate/annotation correlation."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import asdict, dataclass
from typing import Hashable, Iterable, Optional, Sequence

import numpy as np

from .geometry import BBox, bbox_area_fraction

ANNOTATED_SMALL_FRACTION = 0.125


@dataclass(frozen=True)
class PhotoAnnotation:
    """What a human coder records for one training photo.

    ``hand_fraction`` is optional extra ground truth (known exactly for
    rendered photos) that lets an oracle segmenter return a measure rather
    than only a flag.
    """

    cropped: bool = False
    hand: bool = False
    blurry: bool = False
    bbox: Optional[BBox] = None
    background_group: str = ""
    perspective_group: str = ""
    hand_fraction: Optional[float] = None

    def to_json(self) -> dict:
        d = asdict(self)
        d["bbox"] = self.bbox.as_list() if self.bbox is not None else None
        if self.hand_fraction is None:
            del d["hand_fraction"]
        return d

    @classmethod
    def from_json(cls, data: dict) -> "PhotoAnnotation":
        bbox = data.get("bbox")
        hf = data.get("hand_fraction")
        return cls(
            cropped=bool(data.get("cropped", False)),
            hand=bool(data.get("hand", False)),
            blurry=bool(data.get("blurry", False)),
            bbox=BBox.from_list(bbox) if bbox is not None else None,
            background_group=str(data.get("background_group", "")),
            perspective_group=str(data.get("perspective_group", "")),
            hand_fraction=float(hf) if hf is not None else None,
        )


@dataclass(frozen=True)
class SetAnnotationSummary:
    size_variation: float
    background_diversity: float
    perspective_diversity: float
    cropped_count: int
    hand_count: int
    blurry_count: int
    small_count: int
    photo_count: int

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, data: dict) -> "SetAnnotationSummary":
        return cls(**{k: data[k] for k in cls.__dataclass_fields__})


def shannon_wiener(groups: Sequence[Hashable]) -> float:
    """Shannon-Wiener diversity H = -sum p ln p over group proportions."""
    if len(groups) == 0:
        raise ValueError("diversity of an empty set is undefined")
    n = len(groups)
    h = 0.0
    for count in Counter(groups).values():
        p = count / n
        h -= p * math.log(p)
    return h + 0.0  # normalise -0.0


def annotated_size_variation(bboxes: Sequence[Optional[BBox]]) -> float:
    """Population SD of box area fractions; a missing box counts as 0.0."""
    if len(bboxes) == 0:
        raise ValueError("size variation of an empty set is undefined")
    fractions = np.array([bbox_area_fraction(b) if b is not None else 0.0 for b in bboxes])
    # shifting by the first value keeps identical boxes at exactly 0
    return float(np.std(fractions - fractions[0]))


def annotated_small(bbox: Optional[BBox]) -> bool:
    return bbox is not None and bbox_area_fraction(bbox) < ANNOTATED_SMALL_FRACTION


def summarize_annotations(annotations: Sequence[PhotoAnnotation]) -> SetAnnotationSummary:
    if len(annotations) == 0:
        raise ValueError("cannot summarize an empty annotation set")
    return SetAnnotationSummary(
        size_variation=annotated_size_variation([a.bbox for a in annotations]),
        background_diversity=shannon_wiener([a.background_group for a in annotations]),
        perspective_diversity=shannon_wiener([a.perspective_group for a in annotations]),
        cropped_count=sum(a.cropped for a in annotations),
        hand_count=sum(a.hand for a in annotations),
        blurry_count=sum(a.blurry for a in annotations),
        small_count=sum(annotated_small(a.bbox) for a in annotations),
        photo_count=len(annotations),
    )


def pearson(xs: Sequence[float], ys: Sequence[float]) -> Optional[float]:
    """Pearson r, or ``None`` when either series has zero variance."""
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError(f"series lengths differ ({x.size} vs {y.size})")
    if x.size < 2:
        raise ValueError("correlation needs at least two points")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    # relative test so float noise in a constant series is not read as signal
    if sxx <= 1e-24 * max(1.0, float(x @ x)) or syy <= 1e-24 * max(1.0, float(y @ y)):
        return None
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r))


@dataclass(frozen=True)
class CorrelationResult:
    descriptor: str
    r: Optional[float]
    n: int
    xs: tuple[float, ...] = ()
    ys: tuple[float, ...] = ()

    @property
    def defined(self) -> bool:
        return self.r is not None


# estimated SetDescriptors attribute -> annotated summary attribute
DESCRIPTOR_PAIRINGS: dict[str, tuple[str, str]] = {
    "variation_in_size": ("var_size_pct", "size_variation"),
    "variation_in_background": ("var_background_pct", "background_diversity"),
    "variation_in_perspective": ("var_perspective_pct", "perspective_diversity"),
    "cropped_object": ("flag:cropped_object", "cropped_count"),
    "hand_in_photo": ("flag:hand_in_photo", "hand_count"),
    "blurry_photo": ("flag:blurry_photo", "blurry_count"),
    "small_object": ("flag:small_object", "small_count"),
}


def _estimate(summary, key: str) -> Optional[float]:
    if key.startswith("flag:"):
        return summary.flag_percentages[key[5:]]
    return getattr(summary, key)


def correlate_descriptors(pairs: Iterable[tuple[object, SetAnnotationSummary]]) -> dict[str, CorrelationResult]:
    """Per-descriptor Pearson r between set estimates and annotation summaries.

    Annotations are on the x-axis, estimates on the y-axis. Sets whose
    estimate is unavailable are left out of that descriptor's pairing.
    """
    pairs = list(pairs)
    if len(pairs) < 2:
        raise ValueError("correlation needs at least two (summary, annotation) pairs")
    out: dict[str, CorrelationResult] = {}
    for name, (est_key, ann_key) in DESCRIPTOR_PAIRINGS.items():
        xs: list[float] = []
        ys: list[float] = []
        for summary, ann in pairs:
            est = _estimate(summary, est_key)
            if est is None:
                continue
            xs.append(float(getattr(ann, ann_key)))
            ys.append(float(est))
        r = pearson(xs, ys) if len(xs) >= 2 else None
        out[name] = CorrelationResult(name, r, len(xs), tuple(xs), tuple(ys))
    return out
