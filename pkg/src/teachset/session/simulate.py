"""Scripted teaching sessions: scripted photo-takers replaying the full teaching flow."""

from __future__ import annotations

import csv
import json
import operator
import time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from ..detect import AnnotationStore, ChromaSegmenter, HeuristicDetector, OracleDetector, OracleSegmenter
from ..geometry import CameraPose, DegenerateGeometry, ObjectFrame, Side, classify_side
from ..metrics import PhotoAnnotation
from ..photodesc import PhotoDescConfig, PhotoDescriptors, describe_photo, spoken_flags
from ..recognizer import (
    Model,
    PooledExtractor,
    RejectionConfig,
    TrainConfig,
    decide,
    is_correct,
    predict_confidences,
    train,
)
from ..setdesc import SetDescConfig, SetDescriptors, set_summary
from . import flow
from .render import Cuboid, HandPatch, Room, SceneSpec, annotate, camera_basis, render_scene

LOG_FORMAT = "teachset-session"
LOG_VERSION = 1

_OPS: dict[str, Callable[[float, float], bool]] = {
    ">": operator.gt,
    ">=": operator.ge,
    "<": operator.lt,
    "<=": operator.le,
}


@dataclass(frozen=True)
class RetrainRule:
    """``metric op value`` over a set summary, e.g. ``cropped_object > 30``.

    ``metric`` is a flag wire name or one of the ``var_*_pct`` fields.
    """

    metric: str
    op: str
    value: float

    def __post_init__(self) -> None:
        if self.op not in _OPS:
            raise ValueError(f"unknown comparison {self.op!r}")

    def __call__(self, summary: SetDescriptors) -> bool:
        if self.metric in summary.flag_percentages:
            v = summary.flag_percentages[self.metric]
        else:
            v = getattr(summary, self.metric)
        return v is not None and _OPS[self.op](v, self.value)

    @classmethod
    def parse(cls, text: str) -> "RetrainRule":
        parts = text.split()
        if len(parts) != 3:
            raise ValueError(f"retrain rule must look like 'metric > value', got {text!r}")
        return cls(parts[0], parts[1], float(parts[2]))

    def __str__(self) -> str:
        return f"{self.metric} {self.op} {self.value:g}"


@dataclass(frozen=True)
class TeachingPolicy:
    position_jitter: float = 0.02
    orientation_jitter: float = 0.03
    crop_probability: float = 0.1
    hand_probability: float = 0.1
    blur_probability: float = 0.1
    sides: tuple[Side, ...] = (Side.POS_Z,)
    photos_per_object: int = 30
    objects: int = 3
    test_photos_per_object: int = 15
    distance: float = 0.35
    hand_fraction: tuple[float, float] = (0.01, 0.03)
    blur_radius: int = 4
    tracking_noise: float = 0.0
    retrain_rules: tuple[RetrainRule, ...] = ()
    max_retrains: int = 1
    # field overrides applied for every capture after a retrain
    retrain_profile: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        for name in ("crop_probability", "hand_probability", "blur_probability"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.photos_per_object < 1 or self.objects < 1:
            raise ValueError("photos_per_object and objects must be at least 1")
        if not self.sides:
            raise ValueError("policy needs at least one side to visit")
        object.__setattr__(self, "sides", tuple(Side(s) for s in self.sides))
        object.__setattr__(
            self,
            "retrain_rules",
            tuple(r if isinstance(r, RetrainRule) else RetrainRule.parse(r) for r in self.retrain_rules),
        )
        object.__setattr__(self, "hand_fraction", tuple(float(v) for v in self.hand_fraction))

    def after_retrain(self) -> "TeachingPolicy":
        return replace(self, **self.retrain_profile) if self.retrain_profile else self

    def to_json(self) -> dict:
        d = asdict(self)
        d["sides"] = [s.value for s in self.sides]
        d["retrain_rules"] = [str(r) for r in self.retrain_rules]
        d["hand_fraction"] = list(self.hand_fraction)
        return d

    @classmethod
    def from_json(cls, d: dict) -> "TeachingPolicy":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown policy fields: {sorted(unknown)}")
        kw = dict(d)
        if "sides" in kw:
            kw["sides"] = tuple(kw["sides"])
        if "hand_fraction" in kw:
            kw["hand_fraction"] = tuple(kw["hand_fraction"])
        if "retrain_rules" in kw:
            kw["retrain_rules"] = tuple(kw["retrain_rules"])
        return cls(**kw)


@dataclass(frozen=True)
class SessionConfig:
    photo: PhotoDescConfig = PhotoDescConfig()
    set: SetDescConfig = SetDescConfig()
    train: TrainConfig = TrainConfig()
    rejection: RejectionConfig = RejectionConfig()
    detector: str = "oracle"  # or "heuristic"
    segmenter: str = "oracle"  # or "chroma"

    def to_json(self) -> dict:
        return {
            "photo": asdict(self.photo),
            "set": asdict(self.set),
            "train": asdict(self.train),
            "rejection": asdict(self.rejection),
            "detector": self.detector,
            "segmenter": self.segmenter,
        }

    @classmethod
    def from_json(cls, d: dict) -> "SessionConfig":
        return cls(
            photo=PhotoDescConfig(**d.get("photo", {})),
            set=SetDescConfig(**d.get("set", {})),
            train=TrainConfig(**d.get("train", {})),
            rejection=RejectionConfig(**d.get("rejection", {})),
            detector=d.get("detector", "oracle"),
            segmenter=d.get("segmenter", "oracle"),
        )


def backends_for(cfg: SessionConfig, img: np.ndarray, ann: PhotoAnnotation, name: str):
    """Detector and segmenter for one rendered photo."""
    store = None
    if cfg.detector == "oracle" or cfg.segmenter == "oracle":
        store = AnnotationStore([(name, img, ann)])
    if cfg.detector == "oracle":
        det = OracleDetector(store)
    elif cfg.detector == "heuristic":
        det = HeuristicDetector()
    else:
        raise ValueError(f"unknown detector backend {cfg.detector!r}")
    if cfg.segmenter == "oracle":
        seg = OracleSegmenter(store)
    elif cfg.segmenter == "chroma":
        seg = ChromaSegmenter()
    else:
        raise ValueError(f"unknown segmenter backend {cfg.segmenter!r}")
    return det, seg


SNACK_COLORS = (
    ((205, 35, 30), (230, 200, 40)),
    ((30, 70, 200), (235, 235, 235)),
    ((40, 160, 60), (120, 40, 140)),
)


def default_objects(room: Optional[Room] = None) -> list[SceneSpec]:
    """Three snack-box-like objects with distinct colours, sharing one room."""
    room = room or Room()
    specs = []
    for i, (main, accent) in enumerate(SNACK_COLORS):
        faces = tuple(main if k % 2 == 0 else accent for k in range(6))
        specs.append(
            SceneSpec(
                name=f"object{i + 1}",
                object=Cuboid(size=(0.12, 0.12, 0.12), face_colors=faces, stripe_color=accent, stripes=3),
                background=room,
            )
        )
    return specs


@dataclass
class PhotoRecord:
    """One rendered photo with its pose, truth and descriptors."""

    name: str
    image: np.ndarray
    spec: SceneSpec
    true_pose: CameraPose
    pose: CameraPose  # what the tracker reports
    annotation: PhotoAnnotation
    side: Optional[Side] = None
    descriptors: Optional[PhotoDescriptors] = None
    elapsed: float = 0.0


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)


def _perturb(direction: np.ndarray, sd: float, rng: np.random.Generator) -> np.ndarray:
    if sd <= 0:
        return _unit(direction)
    return _unit(_unit(direction) + rng.normal(0.0, sd, 3))


def sample_capture(
    policy: TeachingPolicy,
    spec: SceneSpec,
    rng: np.random.Generator,
    eps: float = 0.005,
    max_tries: int = 200,
) -> tuple[SceneSpec, CameraPose, CameraPose]:
    """Draw one photo's scene variant, true pose and tracked pose.

    Crop, hand and blur are decided first; the pose is then resampled until
    the geometry matches the decision, staying clear of the ambiguous band
    next to the frame edge.
    """
    side = policy.sides[int(rng.integers(len(policy.sides)))]
    want_crop = rng.random() < policy.crop_probability
    want_hand = rng.random() < policy.hand_probability
    want_blur = rng.random() < policy.blur_probability
    hand = None
    if want_hand:
        lo, hi = policy.hand_fraction
        corner = (float(rng.choice([0.12, 0.88])), float(rng.choice([0.12, 0.88])))
        hand = HandPatch(fraction=float(rng.uniform(lo, hi)), center=corner)
    variant = replace(spec, hand=hand, blur_radius=policy.blur_radius if want_blur else 0)

    center = np.asarray(spec.frame.center)
    axis = spec.frame.matrix[side.axis] * side.sign
    base = center + axis * policy.distance
    margin = 2 * eps
    for _ in range(max_tries):
        pos = base + rng.normal(0.0, policy.position_jitter, 3)
        direction = _perturb(center - pos, policy.orientation_jitter, rng)
        if want_crop:
            pose0 = CameraPose.looking(pos, direction)
            _, r, u = camera_basis(pose0)
            pan = (r, -r, u, -u)[int(rng.integers(4))]
            direction = _unit(direction + pan * float(rng.uniform(0.3, 0.5)))
        try:
            pose = CameraPose.looking(pos, direction)
            ann = annotate(variant, pose)
        except DegenerateGeometry:
            continue
        if ann.bbox is None:
            continue
        b = ann.bbox
        if want_crop:
            if ann.cropped and (b.x1 - b.x0) * (b.y1 - b.y0) > 0.03:
                break
        elif min(b.x0, b.y0, 1 - b.x1, 1 - b.y1) > margin:
            break
    else:
        raise RuntimeError(f"could not place a {'cropped' if want_crop else 'framed'} photo of {spec.name}")

    tracked = pose
    if policy.tracking_noise > 0:
        noisy_pos = np.asarray(pose.position) + rng.normal(0.0, policy.tracking_noise, 3)
        tracked = CameraPose.looking(noisy_pos, _perturb(np.asarray(pose.view_dir), policy.tracking_noise, rng))
    return variant, pose, tracked


def capture_photo(
    name: str,
    variant: SceneSpec,
    pose: CameraPose,
    tracked: CameraPose,
    cfg: SessionConfig,
) -> PhotoRecord:
    t0 = time.perf_counter()
    img, ann = render_scene(variant, pose)
    det, seg = backends_for(cfg, img, ann, name)
    desc = describe_photo(img, det, seg, cfg.photo, photo=name)
    try:
        side = classify_side(tracked, variant.frame)
    except DegenerateGeometry:
        side = None
    return PhotoRecord(name, img, variant, pose, tracked, ann, side, desc, time.perf_counter() - t0)


@dataclass
class SetRecord:
    object: str
    attempt: int
    photos: list[PhotoRecord]
    summary: SetDescriptors
    decision: str  # "ok" or "retrain"
    fired_rules: list[str] = field(default_factory=list)


@dataclass
class SessionLog:
    seed: int
    policy: TeachingPolicy
    config: SessionConfig
    specs: list[SceneSpec]
    sets: list[SetRecord] = field(default_factory=list)
    tests: list[PhotoRecord] = field(default_factory=list)
    test_outcomes: list[dict] = field(default_factory=list)
    model: Optional[Model] = None
    accuracy: Optional[float] = None
    transitions: list[str] = field(default_factory=list)
    timings: dict = field(default_factory=dict)

    @property
    def final_sets(self) -> list[SetRecord]:
        return [s for s in self.sets if s.decision == "ok"]

    def training_samples(self) -> list[tuple[np.ndarray, str]]:
        return [(c.image, s.object) for s in self.final_sets for c in s.photos]

    def test_samples(self) -> list[tuple[np.ndarray, str]]:
        return [(c.image, c.spec.name) for c in self.tests]

    def to_json(self) -> dict:
        """Deterministic manifest (no timings, image data by reference)."""
        return {
            "format": LOG_FORMAT,
            "version": LOG_VERSION,
            "seed": self.seed,
            "policy": self.policy.to_json(),
            "config": self.config.to_json(),
            "scenes": [s.to_json() for s in self.specs],
            "sets": [
                {
                    "object": s.object,
                    "attempt": s.attempt,
                    "decision": s.decision,
                    "fired_rules": s.fired_rules,
                    "summary": s.summary.to_json(),
                    "photos": [_capture_json(c) for c in s.photos],
                }
                for s in self.sets
            ],
            "model": self.model.to_json() if self.model else None,
            "evaluation": {
                "accuracy": self.accuracy,
                "photos": [dict(_capture_json(c), **o) for c, o in zip(self.tests, self.test_outcomes)],
            },
            "transitions": self.transitions,
        }

    def save(self, out_dir) -> Path:
        from ..interface.io import save_png  # local import avoids a package cycle

        out = Path(out_dir)
        (out / "photos").mkdir(parents=True, exist_ok=True)
        for s in self.sets:
            for c in s.photos:
                save_png(c.image, out / image_ref(c))
        for c in self.tests:
            save_png(c.image, out / image_ref(c))
        with open(out / "log.json", "w") as fh:
            json.dump(self.to_json(), fh, indent=1, sort_keys=True)
            fh.write("\n")
        with open(out / "timings.json", "w") as fh:
            json.dump(self.timings, fh, indent=1, sort_keys=True)
        if self.model is not None:
            self.model.save(out / "model.json")
        self._write_summary_csv(out / "summary.csv")
        self._write_manifests(out / "sets")
        return out

    def _write_summary_csv(self, path: Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(
                ["object", "attempt", "decision", "photos", "var_size_pct", "var_perspective_pct",
                 "var_background_pct", "small_object", "cropped_object", "blurry_photo",
                 "hand_in_photo", "object_missing"]
            )
            for s in self.sets:
                f = s.summary.flag_percentages
                w.writerow(
                    [s.object, s.attempt, s.decision, s.summary.photo_count, s.summary.var_size_pct,
                     s.summary.var_perspective_pct, s.summary.var_background_pct, f["small_object"],
                     f["cropped_object"], f["blurry_photo"], f["hand_in_photo"], f["object_missing"]]
                )

    def _write_manifests(self, out: Path) -> None:
        out.mkdir(parents=True, exist_ok=True)
        groups = [(f"train_{s.object}", s.object, s.photos) for s in self.final_sets]
        for spec in self.specs:
            groups.append((f"test_{spec.name}", spec.name, [c for c in self.tests if c.spec.name == spec.name]))
        for fname, label, captures in groups:
            manifest = {
                "label": label,
                "object_frame": captures[0].spec.frame.to_json() if captures else None,
                "photos": [
                    {
                        "path": f"../{image_ref(c)}",
                        "pose": c.pose.to_json(),
                        "annotation": c.annotation.to_json(),
                    }
                    for c in captures
                ],
            }
            with open(out / f"{fname}.json", "w") as fh:
                json.dump(manifest, fh, indent=1)


def image_ref(c: PhotoRecord) -> str:
    return f"photos/{c.name}.png"


def _capture_json(c: PhotoRecord) -> dict:
    return {
        "name": c.name,
        "image": image_ref(c),
        "pose": c.pose.to_json(),
        "true_pose": c.true_pose.to_json(),
        "object_frame": c.spec.frame.to_json(),
        "side": c.side.value if c.side else None,
        "hand": c.spec.hand is not None,
        "blur_radius": c.spec.blur_radius,
        "annotation": c.annotation.to_json(),
        "descriptors": c.descriptors.to_json() if c.descriptors else None,
        "spoken": spoken_flags(c.descriptors) if c.descriptors else [],
    }


class SessionError(RuntimeError):
    pass


def capture_set(
    policy: TeachingPolicy,
    spec: SceneSpec,
    rng: np.random.Generator,
    cfg: SessionConfig,
    prefix: str,
    count: int,
) -> list[PhotoRecord]:
    out = []
    for k in range(count):
        name = f"{prefix}_{k:02d}"
        try:
            variant, pose, tracked = sample_capture(policy, spec, rng, cfg.photo.edge_eps)
            out.append(capture_photo(name, variant, pose, tracked, cfg))
        except Exception as exc:
            raise SessionError(f"{name}: {exc}") from exc
    return out


def summarize_captures(captures: Sequence[PhotoRecord], cfg: SessionConfig) -> SetDescriptors:
    return set_summary(
        [c.descriptors for c in captures],
        poses=[c.pose for c in captures],
        sides=[c.side for c in captures],
        cfg=cfg.set,
    )


def _timings(photo_times: list[float], train_time: float) -> dict:
    return {
        "per_photo_seconds": photo_times,
        "mean_photo_seconds": float(np.mean(photo_times)) if photo_times else 0.0,
        "training_seconds": train_time,
    }


def run_session(
    policy: TeachingPolicy,
    specs: Optional[Sequence[SceneSpec]] = None,
    seed: int = 0,
    config: SessionConfig = SessionConfig(),
) -> SessionLog:
    """Replay one full teaching session; identical inputs give an identical log."""
    specs = list(specs) if specs is not None else default_objects()[: policy.objects]
    if len(specs) != policy.objects:
        raise ValueError(f"policy expects {policy.objects} objects, got {len(specs)} scenes")
    if len({s.name for s in specs}) != len(specs):
        raise ValueError("scene names must be distinct (they become labels)")
    rng = np.random.default_rng(seed)
    log = SessionLog(seed, policy, config, specs)
    fsm = flow.TeachingFlow(policy.photos_per_object)
    photo_times: list[float] = []

    def do(event, payload=None):
        fsm.handle(event, payload)
        log.transitions.append(f"{type(event).__name__} -> {fsm.state}")

    profiles = {}
    for spec in specs:
        current = policy
        attempt = 0
        do(flow.Teach(spec.name))
        while True:
            captures = []
            for k in range(policy.photos_per_object):
                name = f"{spec.name}_a{attempt}_{k:02d}"
                try:
                    variant, pose, tracked = sample_capture(current, spec, rng, config.photo.edge_eps)
                    cap = capture_photo(name, variant, pose, tracked, config)
                except Exception as exc:
                    raise SessionError(f"{name}: {exc}") from exc
                captures.append(cap)
                photo_times.append(cap.elapsed)
                do(flow.Capture(), cap)
            summary = summarize_captures(captures, config)
            fired = [str(r) for r in current.retrain_rules if r(summary)]
            if fired and attempt < policy.max_retrains:
                log.sets.append(SetRecord(spec.name, attempt, captures, summary, "retrain", fired))
                do(flow.Retrain())
                attempt += 1
                current = current.after_retrain()
                continue
            log.sets.append(SetRecord(spec.name, attempt, captures, summary, "ok", fired))
            do(flow.Ok())
            do(flow.Name(spec.name))
            profiles[spec.name] = current
            break

    train_time = 0.0
    if len(specs) < 2:
        # a single taught object cannot be told apart from anything: no model
        log.timings = _timings(photo_times, train_time)
        return log

    do(flow.StartTraining())
    extractor = PooledExtractor()
    t0 = time.perf_counter()
    samples = [(extractor(img), lbl) for img, lbl in log.training_samples()]
    log.model = train(samples, config.train, extractor.spec(), labels=[s.name for s in specs])
    train_time = time.perf_counter() - t0
    do(flow.TrainingDone())

    for spec in specs:
        log.tests.extend(
            capture_set(profiles[spec.name], spec, rng, config, f"{spec.name}_test", policy.test_photos_per_object)
        )
    correct = 0
    for cap in log.tests:
        do(flow.Recognize())
        pred = decide(predict_confidences(log.model, extractor(cap.image)), config.rejection, log.model.labels)
        ok = is_correct(log.model, cap.spec.name, pred.outcome)
        correct += ok
        log.test_outcomes.append({"label": cap.spec.name, "correct": ok, **pred.to_json()})
    log.accuracy = correct / len(log.tests) if log.tests else None
    log.timings = _timings(photo_times, train_time)
    return log


def replay_descriptors(log_dir) -> list[tuple[str, dict, dict]]:
    """Recompute descriptors from a saved session; returns (name, logged, recomputed)."""
    from ..interface.io import load_image

    root = Path(log_dir)
    with open(root / "log.json") as fh:
        data = json.load(fh)
    cfg = SessionConfig.from_json(data["config"])
    out = []
    photos = [p for s in data["sets"] for p in s["photos"]] + data["evaluation"]["photos"]
    for p in photos:
        img = load_image(root / p["image"])
        ann = PhotoAnnotation.from_json(p["annotation"])
        det, seg = backends_for(cfg, img, ann, p["name"])
        desc = describe_photo(img, det, seg, cfg.photo, photo=p["name"])
        out.append((p["name"], p["descriptors"], desc.to_json()))
    return out
