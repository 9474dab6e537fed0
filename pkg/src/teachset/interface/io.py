"""Image loaders, set manifests, toolkit configuration and JSON helpers."""

from __future__ import annotations

import io
import json
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Optional, Union

import numpy as np
from PIL import Image, UnidentifiedImageError

from ..detect import DEFAULT_HAND_TONES, ChromaSegmenter, HeuristicDetector
from ..geometry import CameraPose, ObjectFrame
from ..metrics import PhotoAnnotation
from ..photodesc import PhotoDescConfig
from ..recognizer import RejectionConfig, TrainConfig
from ..setdesc import SetDescConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

PathLike = Union[str, Path]
IMAGE_FORMATS = ["PNG", "PPM"]


class ImageLoadError(ValueError):
    def __init__(self, source: str, reason: str):
        super().__init__(f"cannot read image {source}: {reason}")
        self.source = source


def decode_image(data: bytes, source: str = "<upload>") -> np.ndarray:
    try:
        with Image.open(io.BytesIO(data), formats=IMAGE_FORMATS) as im:
            return np.asarray(im.convert("RGB"), dtype=np.uint8).copy()
    except (UnidentifiedImageError, OSError, ValueError, SyntaxError) as exc:
        raise ImageLoadError(source, str(exc) or type(exc).__name__) from exc


def load_image(path: PathLike) -> np.ndarray:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise ImageLoadError(str(path), exc.strerror or str(exc)) from exc
    return decode_image(data, str(path))


def encode_png(img: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(np.asarray(img, dtype=np.uint8), "RGB").save(buf, format="PNG")
    return buf.getvalue()


def save_png(img: np.ndarray, path: PathLike) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_bytes(encode_png(img))


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def read_json(path: PathLike) -> Any:
    with open(path) as fh:
        return json.load(fh)


def write_json(obj: Any, path: PathLike) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True)
        fh.write("\n")


class ManifestError(ValueError):
    pass


@dataclass
class ManifestPhoto:
    path: Path
    ref: str  # the path string as written in the manifest
    pose: Optional[CameraPose] = None
    annotation: Optional[PhotoAnnotation] = None
    object_frame: Optional[ObjectFrame] = None
    label: Optional[str] = None


@dataclass
class SetManifest:
    label: str
    photos: list[ManifestPhoto]
    object_frame: Optional[ObjectFrame] = None
    source: Optional[Path] = None

    def frame_for(self, photo: ManifestPhoto) -> Optional[ObjectFrame]:
        return photo.object_frame or self.object_frame

    def label_for(self, photo: ManifestPhoto) -> str:
        return photo.label or self.label


def _pose(data: dict, where: str) -> CameraPose:
    try:
        return CameraPose(tuple(data["position"]), tuple(data["view_dir"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise ManifestError(f"{where}: malformed pose ({exc})") from exc


def parse_manifest(data: dict, base: Path = Path("."), source: Optional[Path] = None) -> SetManifest:
    if not isinstance(data, dict) or "photos" not in data:
        raise ManifestError("manifest must be an object with a 'photos' list")
    frame = ObjectFrame.from_json(data["object_frame"]) if data.get("object_frame") else None
    photos = []
    for i, p in enumerate(data["photos"]):
        if isinstance(p, str):
            p = {"path": p}
        if "path" not in p:
            raise ManifestError(f"photo {i} has no path")
        where = f"photo {p['path']}"
        photos.append(
            ManifestPhoto(
                path=(base / p["path"]).resolve(),
                ref=p["path"],
                pose=_pose(p["pose"], where) if p.get("pose") else None,
                annotation=PhotoAnnotation.from_json(p["annotation"]) if p.get("annotation") else None,
                object_frame=ObjectFrame.from_json(p["object_frame"]) if p.get("object_frame") else None,
                label=p.get("label"),
            )
        )
    return SetManifest(str(data.get("label", "")), photos, frame, source)


def load_manifest(path: PathLike) -> SetManifest:
    path = Path(path)
    try:
        data = read_json(path)
    except (OSError, json.JSONDecodeError) as exc:
        raise ManifestError(f"cannot read manifest {path}: {exc}") from exc
    return parse_manifest(data, path.parent, path)


@dataclass
class BackendConfig:
    detector: str = "heuristic"  # "heuristic" or "oracle"
    color_distance: float = 60.0
    min_area_fraction: float = 0.001
    segmenter: str = "chroma"  # "chroma" or "oracle"
    tones: list = field(default_factory=lambda: [list(t) for t in DEFAULT_HAND_TONES])
    tone_distance: float = 30.0

    def detector_backend(self) -> HeuristicDetector:
        return HeuristicDetector(self.color_distance, self.min_area_fraction)

    def segmenter_backend(self) -> ChromaSegmenter:
        return ChromaSegmenter(tuple(tuple(t) for t in self.tones), self.tone_distance)


@dataclass
class ServiceConfig:
    on_busy: str = "reject"  # or "queue"
    model_dir: Optional[str] = None


@dataclass
class ToolkitConfig:
    photo: PhotoDescConfig = field(default_factory=PhotoDescConfig)
    set: SetDescConfig = field(default_factory=SetDescConfig)
    rejection: RejectionConfig = field(default_factory=RejectionConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    backends: BackendConfig = field(default_factory=BackendConfig)
    service: ServiceConfig = field(default_factory=ServiceConfig)
    features: dict = field(default_factory=lambda: {"id": "pool", "grid": 8})

    @classmethod
    def from_dict(cls, d: dict) -> "ToolkitConfig":
        sections = {
            "photo": PhotoDescConfig,
            "set": SetDescConfig,
            "rejection": RejectionConfig,
            "train": TrainConfig,
            "backends": BackendConfig,
            "service": ServiceConfig,
        }
        unknown = set(d) - set(sections) - {"features"}
        if unknown:
            raise ValueError(f"unknown config sections: {sorted(unknown)}")
        kw = {}
        for name, klass in sections.items():
            try:
                kw[name] = klass(**d.get(name, {}))
            except TypeError as exc:
                raise ValueError(f"bad [{name}] section: {exc}") from exc
        if "features" in d:
            kw["features"] = dict(d["features"])
        return cls(**kw)

    def to_dict(self) -> dict:
        return {
            "photo": asdict(self.photo),
            "set": asdict(self.set),
            "rejection": asdict(self.rejection),
            "train": asdict(self.train),
            "backends": asdict(self.backends),
            "service": asdict(self.service),
            "features": dict(self.features),
        }


def load_config(path: Optional[PathLike] = None, overrides: Optional[dict] = None) -> ToolkitConfig:
    """Read a TOML or JSON config; ``overrides`` maps section -> {key: value}."""
    data: dict = {}
    if path is not None:
        path = Path(path)
        text = path.read_bytes()
        if path.suffix.lower() == ".toml":
            data = tomllib.loads(text.decode())
        else:
            data = json.loads(text)
    for section, values in (overrides or {}).items():
        data.setdefault(section, {}).update(values)
    return ToolkitConfig.from_dict(data)
