"""The single describe/recognize code path shared by the CLI and the HTTP service."""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from ..detect import AnnotationStore, OracleDetector, OracleSegmenter
from ..geometry import CameraPose, DegenerateGeometry, ObjectFrame, Side, classify_side
from ..metrics import PhotoAnnotation
from ..photodesc import PhotoDescriptors, describe_photo
from ..recognizer import Model, Prediction, decide, extractor_from_spec, predict_confidences
from ..setdesc import SetDescriptors, set_summary
from .io import SetManifest, ToolkitConfig, load_image


class Engine:
    def __init__(self, config: Optional[ToolkitConfig] = None):
        self.config = config or ToolkitConfig()
        b = self.config.backends
        self._detector = b.detector_backend() if b.detector != "oracle" else None
        self._segmenter = b.segmenter_backend() if b.segmenter != "oracle" else None
        if b.detector not in ("oracle", "heuristic") or b.segmenter not in ("oracle", "chroma"):
            raise ValueError(f"unknown backend selection {b.detector!r}/{b.segmenter!r}")

    def _backends(self, img: np.ndarray, photo: str, annotation: Optional[PhotoAnnotation]):
        det, seg = self._detector, self._segmenter
        if det is None or seg is None:
            if annotation is None:
                raise ValueError(f"oracle backend needs an annotation for photo {photo}")
            store = AnnotationStore([(photo, img, annotation)])
            det = det or OracleDetector(store)
            seg = seg or OracleSegmenter(store)
        return det, seg

    def describe(
        self, img: np.ndarray, photo: str = "<image>", annotation: Optional[PhotoAnnotation] = None
    ) -> PhotoDescriptors:
        det, seg = self._backends(img, photo, annotation)
        return describe_photo(img, det, seg, self.config.photo, photo=photo)

    @staticmethod
    def record(photo: str, d: PhotoDescriptors) -> dict:
        return {"photo": photo, **d.to_json()}

    def summarize(
        self,
        descriptors: Sequence[PhotoDescriptors],
        poses: Sequence[Optional[CameraPose]],
        frames: Sequence[Optional[ObjectFrame]],
    ) -> SetDescriptors:
        have_poses = len(poses) > 0 and all(p is not None for p in poses)
        sides: Optional[list[Optional[Side]]] = None
        if have_poses and any(f is not None for f in frames):
            sides = []
            for pose, frame in zip(poses, frames):
                try:
                    sides.append(classify_side(pose, frame) if frame is not None else None)
                except DegenerateGeometry:
                    sides.append(None)
        return set_summary(
            descriptors, poses=list(poses) if have_poses else None, sides=sides, cfg=self.config.set
        )

    def describe_manifest(self, manifest: SetManifest) -> tuple[list[dict], SetDescriptors]:
        records, descs, poses, frames = [], [], [], []
        for p in manifest.photos:
            img = load_image(p.path)
            d = self.describe(img, p.ref, p.annotation)
            records.append(self.record(p.ref, d))
            descs.append(d)
            poses.append(p.pose)
            frames.append(manifest.frame_for(p))
        return records, self.summarize(descs, poses, frames)

    def recognize(self, model: Model, img: np.ndarray) -> Prediction:
        extractor = extractor_from_spec(model.extractor)
        return decide(predict_confidences(model, extractor(img)), self.config.rejection, model.labels)
