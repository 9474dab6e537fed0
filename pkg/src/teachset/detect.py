"""Object detector and hand segmenter backends.

Two detector families are provided: an oracle that replays ground-truth
annotations and a classical background-subtraction heuristic that needs no
model weights. Backends are plain objects with ``detect`` or
``hand_fraction`` methods and hold no mutable state after construction.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional, Protocol, Sequence

import numpy as np
from scipy import ndimage

from .geometry import BBox
from .imaging import check_rgb
from .metrics import PhotoAnnotation


@dataclass(frozen=True)
class Detection:
    bbox: Optional[BBox] = None
    confidence: float = 0.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError("confidence must lie in [0, 1]")
        if self.bbox is None and self.confidence != 0.0:
            raise ValueError("a missing detection must have confidence 0")

    @property
    def found(self) -> bool:
        return self.bbox is not None


NO_DETECTION = Detection()


class DetectorBackend(Protocol):
    def detect(self, img: np.ndarray) -> Detection: ...


class SegmenterBackend(Protocol):
    def hand_fraction(self, img: np.ndarray) -> float: ...


class MissingAnnotation(KeyError):
    """An oracle backend was queried with a photo it has no record for."""

    def __str__(self) -> str:
        return f"no annotation for photo {self.args[0]}"


def image_key(img: np.ndarray) -> str:
    """Content digest used to look photos up in annotation stores."""
    arr = check_rgb(img)
    h = hashlib.sha256()
    h.update(f"{arr.shape[0]}x{arr.shape[1]}:".encode())
    h.update(np.ascontiguousarray(arr).tobytes())
    return h.hexdigest()[:16]


class AnnotationStore:
    """Read-only mapping from image digest to ``(photo name, annotation)``."""

    def __init__(self, records: Iterable[tuple[str, np.ndarray, PhotoAnnotation]] = ()):
        self._by_key: dict[str, tuple[str, PhotoAnnotation]] = {}
        for name, img, ann in records:
            self._by_key[image_key(img)] = (name, ann)

    @classmethod
    def from_keys(cls, mapping: Mapping[str, PhotoAnnotation]) -> "AnnotationStore":
        store = cls()
        store._by_key = {k: (k, a) for k, a in mapping.items()}
        return store

    def lookup(self, img: np.ndarray) -> PhotoAnnotation:
        key = image_key(img)
        try:
            return self._by_key[key][1]
        except KeyError:
            raise MissingAnnotation(key) from None

    def __len__(self) -> int:
        return len(self._by_key)


class OracleDetector:
    name = "oracle"

    def __init__(self, store: AnnotationStore):
        self.store = store

    def detect(self, img: np.ndarray) -> Detection:
        ann = self.store.lookup(img)
        if ann.bbox is None:
            return NO_DETECTION
        return Detection(ann.bbox, 1.0)


class OracleSegmenter:
    """Returns the annotated hand fraction (or 1.0/0.0 from the hand flag)."""

    name = "oracle"

    def __init__(self, store: AnnotationStore):
        self.store = store

    def hand_fraction(self, img: np.ndarray) -> float:
        ann = self.store.lookup(img)
        if ann.hand_fraction is not None:
            return ann.hand_fraction
        return 1.0 if ann.hand else 0.0


def oracle_detector(annotations: AnnotationStore) -> OracleDetector:
    return OracleDetector(annotations)


def border_median(img: np.ndarray) -> np.ndarray:
    """Per-channel median of the 1-pixel image border."""
    rgb = check_rgb(img)
    border = np.concatenate(
        [rgb[0, :], rgb[-1, :], rgb[1:-1, 0], rgb[1:-1, -1]], axis=0
    ).astype(np.float64)
    return np.median(border, axis=0)


@dataclass(frozen=True)
class HeuristicDetector:
    """Largest 4-connected blob that differs from the border colour."""

    color_distance: float = 60.0
    min_area_fraction: float = 0.001
    name = "heuristic"

    def foreground_mask(self, img: np.ndarray) -> np.ndarray:
        rgb = check_rgb(img).astype(np.float64)
        dist = np.linalg.norm(rgb - border_median(rgb.astype(np.uint8)), axis=2)
        return dist > self.color_distance

    def detect(self, img: np.ndarray) -> Detection:
        mask = self.foreground_mask(img)
        h, w = mask.shape
        labels, count = ndimage.label(mask)  # default structure is 4-connected
        if count == 0:
            return NO_DETECTION
        areas = np.bincount(labels.ravel())[1:]
        best = int(np.argmax(areas))
        area = int(areas[best])
        if area < self.min_area_fraction * h * w:
            return NO_DETECTION
        rows, cols = ndimage.find_objects(labels)[best]
        bbox = BBox(cols.start / w, rows.start / h, cols.stop / w, rows.stop / h)
        box_px = (rows.stop - rows.start) * (cols.stop - cols.start)
        return Detection(bbox, area / box_px)


def heuristic_detector(color_distance: float = 60.0, min_area_fraction: float = 0.001) -> HeuristicDetector:
    return HeuristicDetector(color_distance, min_area_fraction)


DEFAULT_HAND_TONES: tuple[tuple[int, int, int], ...] = (
    (224, 172, 105),
    (198, 134, 66),
    (141, 85, 36),
    (241, 194, 125),
)


@dataclass(frozen=True)
class ChromaSegmenter:
    """Fraction of pixels within ``distance`` of any reference hand tone."""

    tones: tuple[tuple[int, int, int], ...] = DEFAULT_HAND_TONES
    distance: float = 30.0
    name = "chroma"

    def __post_init__(self) -> None:
        if len(self.tones) == 0:
            raise ValueError("chroma segmenter needs at least one reference tone")
        object.__setattr__(self, "tones", tuple(tuple(int(c) for c in t) for t in self.tones))

    def mask(self, img: np.ndarray) -> np.ndarray:
        rgb = check_rgb(img).astype(np.float64)
        tones = np.asarray(self.tones, dtype=np.float64)
        d = np.linalg.norm(rgb[:, :, None, :] - tones[None, None, :, :], axis=3)
        return (d <= self.distance).any(axis=2)

    def hand_fraction(self, img: np.ndarray) -> float:
        m = self.mask(img)
        return float(m.sum()) / m.size


def chroma_segmenter(tones: Sequence[Sequence[int]] = DEFAULT_HAND_TONES, distance: float = 30.0) -> ChromaSegmenter:
    return ChromaSegmenter(tuple(tuple(t) for t in tones), distance)
