"""Factorial corpus of training sets for checking estimated against annotated descriptors.

Twelve sets cross two levels of camera motion, two levels of viewed sides and
three doses of hand and blur photos. Every factor is held exactly constant
within its level, so with oracle backends and exact poses each estimated
descriptor is an increasing function of its annotated counterpart and the
Pearson correlation is 1. Tracking noise plus the pixel-based backends give
the noisy condition.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from ..geometry import CameraPose, ObjectFrame, classify_side
from ..metrics import PhotoAnnotation, SetAnnotationSummary, summarize_annotations
from ..photodesc import PhotoDescConfig, PhotoDescriptors, describe_photo
from ..setdesc import SetDescConfig, SetDescriptors, set_summary
from .render import HandPatch, SceneSpec, render_scene
from .simulate import SessionConfig, backends_for, default_objects

PHOTOS_PER_SET = 30
BASE_DISTANCE = 0.38
CLUSTER_OFFSET = (0.04, 0.0, 0.06)  # half the displacement between the two camera clusters
CROP_SHIFT = 0.13  # vertical object-centre shift that pushes the cube past the frame edge from every pose
CROP_SLOTS = (1, 6, 11, 16, 21, 26)
DOSES = (0, 1, 2)
DOSE_STEP = 3  # hand photos and blurry photos per dose unit


@dataclass
class CorpusPhoto:
    image: np.ndarray
    annotation: PhotoAnnotation
    frame: ObjectFrame
    true_pose: CameraPose
    tracked_pose: CameraPose


@dataclass
class CorpusSet:
    name: str
    motion: int
    perspective: int
    dose: int
    photos: list[CorpusPhoto]


def _base_spec() -> SceneSpec:
    # the blue/white object: its colours sit far from every default skin tone
    return default_objects()[1]


def _slots(count: int, start: int) -> set[int]:
    """``count`` photo indices spread over the set, avoiding the crop slots."""
    free = [i for i in range(PHOTOS_PER_SET) if i not in CROP_SLOTS]
    return {free[(start + 4 * k) % len(free)] for k in range(count)}


def build_set(
    motion: int,
    perspective: int,
    dose: int,
    tracking_noise: float = 0.0,
    rng: Optional[np.random.Generator] = None,
    spec: Optional[SceneSpec] = None,
) -> CorpusSet:
    spec = spec or _base_spec()
    hands = _slots(DOSE_STEP * dose, 0)
    blurs = _slots(DOSE_STEP * dose, 2)
    photos = []
    for i in range(PHOTOS_PER_SET):
        offset = np.zeros(3)
        if motion:
            offset = np.asarray(CLUSTER_OFFSET) * (-1.0 if i % 2 == 0 else 1.0)
        position = np.array([0.0, 0.0, BASE_DISTANCE]) + offset
        pose = CameraPose(tuple(position), (0.0, 0.0, -1.0))
        center = (0.0, CROP_SHIFT, 0.0) if motion and i in CROP_SLOTS else (0.0, 0.0, 0.0)
        rotated = perspective and i >= PHOTOS_PER_SET // 2
        frame = ObjectFrame.rotated_about_y(-math.pi / 2 if rotated else 0.0, center)
        hand = HandPatch(fraction=0.02, center=(0.12, 0.88)) if i in hands else None
        variant = replace(spec, frame=frame, hand=hand, blur_radius=4 if i in blurs else 0)
        img, ann = render_scene(variant, pose)
        tracked = pose
        if tracking_noise > 0:
            if rng is None:
                raise ValueError("tracking noise needs a random generator")
            noisy = position + rng.normal(0.0, tracking_noise, 3)
            d = np.asarray(pose.view_dir) + rng.normal(0.0, tracking_noise, 3)
            tracked = CameraPose.looking(noisy, d / np.linalg.norm(d))
        photos.append(CorpusPhoto(img, ann, frame, pose, tracked))
    return CorpusSet(f"m{motion}_p{perspective}_d{dose}", motion, perspective, dose, photos)


def build_corpus(tracking_noise: float = 0.0, seed: int = 0) -> list[CorpusSet]:
    rng = np.random.default_rng(seed)
    return [
        build_set(m, p, d, tracking_noise, rng)
        for m in (0, 1)
        for p in (0, 1)
        for d in DOSES
    ]


def describe_set(
    s: CorpusSet,
    detector: str = "oracle",
    segmenter: str = "oracle",
    photo_cfg: PhotoDescConfig = PhotoDescConfig(),
    set_cfg: SetDescConfig = SetDescConfig(),
) -> tuple[list[PhotoDescriptors], SetDescriptors]:
    cfg = SessionConfig(photo=photo_cfg, set=set_cfg, detector=detector, segmenter=segmenter)
    descs = []
    for k, p in enumerate(s.photos):
        name = f"{s.name}_{k:02d}"
        det, seg = backends_for(cfg, p.image, p.annotation, name)
        descs.append(describe_photo(p.image, det, seg, photo_cfg, photo=name))
    poses = [p.tracked_pose for p in s.photos]
    sides = [classify_side(p.tracked_pose, p.frame) for p in s.photos]
    return descs, set_summary(descs, poses=poses, sides=sides, cfg=set_cfg)


def corpus_pairs(
    corpus: Sequence[CorpusSet], detector: str = "oracle", segmenter: str = "oracle"
) -> list[tuple[SetDescriptors, SetAnnotationSummary]]:
    """(estimated summary, annotated summary) per set, ready for correlation."""
    out = []
    for s in corpus:
        _, summary = describe_set(s, detector, segmenter)
        out.append((summary, summarize_annotations([p.annotation for p in s.photos])))
    return out
