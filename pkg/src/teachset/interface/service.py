"""HTTP service: the server half of the phone/server split.

Photos are described as they arrive and accumulated per set; training runs
as a background job that is polled; recognition is refused while a job runs.
"""

from __future__ import annotations

import base64
import binascii
import json
import queue
import threading
import uuid
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from ..geometry import CameraPose, ObjectFrame
from ..photodesc import PhotoDescriptors
from ..recognizer import Model, train
from .engine import Engine
from .io import ImageLoadError, ToolkitConfig, decode_image

API_VERSION = 1
CURRENT_MODEL = "current.json"


class ApiError(Exception):
    def __init__(self, status: int, message: str):
        super().__init__(message)
        self.status = status
        self.message = message


@dataclass
class StoredPhoto:
    name: str
    image: np.ndarray
    pose: Optional[CameraPose]
    frame: Optional[ObjectFrame]
    descriptors: PhotoDescriptors


@dataclass
class Job:
    job_id: str
    sets: list[str]
    labels: dict[str, str]
    state: str = "Pending"
    model: Optional[str] = None
    error: Optional[str] = None

    def to_json(self) -> dict:
        return {
            "job_id": self.job_id,
            "state": self.state,
            "model": self.model,
            "error": self.error,
            "sets": self.sets,
            "labels": self.labels,
        }


class ServiceState:
    """Set accumulation, job registry and the single-writer model registry."""

    def __init__(
        self,
        config: ToolkitConfig,
        model_dir: Optional[Path] = None,
        train_fn: Callable = train,
    ):
        self.config = config
        self.engine = Engine(config)
        self.model_dir = Path(model_dir) if model_dir else None
        self.train_fn = train_fn
        self.lock = threading.RLock()
        self.sets: dict[str, list[StoredPhoto]] = {}
        self.jobs: dict[str, Job] = {}
        self.model: Optional[Model] = None
        self._queue: "queue.Queue[Job]" = queue.Queue()
        self._worker = threading.Thread(target=self._work, daemon=True)
        self._worker.start()
        if self.model_dir is not None:
            self.model_dir.mkdir(parents=True, exist_ok=True)
            current = self.model_dir / CURRENT_MODEL
            if current.exists():
                self.model = Model.load(current)

    @property
    def busy(self) -> bool:
        with self.lock:
            return any(j.state in ("Pending", "Running") for j in self.jobs.values())

    @property
    def running(self) -> bool:
        with self.lock:
            return any(j.state == "Running" for j in self.jobs.values())

    def add_photo(self, set_id: str, photo: StoredPhoto) -> None:
        with self.lock:
            self.sets.setdefault(set_id, []).append(photo)

    def photos(self, set_id: str) -> list[StoredPhoto]:
        with self.lock:
            if set_id not in self.sets:
                raise ApiError(404, f"unknown set {set_id!r}")
            return list(self.sets[set_id])

    def submit(self, sets: list[str], labels: dict[str, str]) -> Job:
        with self.lock:
            for s in sets:
                if s not in self.sets:
                    raise ApiError(404, f"unknown set {s!r}")
            if len({labels.get(s, s) for s in sets}) < 2:
                raise ApiError(400, "training needs at least two distinct labels")
            if self.busy and self.config.service.on_busy != "queue":
                raise ApiError(409, "a training job is already in progress")
            job = Job(uuid.uuid4().hex[:12], list(sets), {s: labels.get(s, s) for s in sets})
            self.jobs[job.job_id] = job
        self._queue.put(job)
        return job

    def job(self, job_id: str) -> Job:
        with self.lock:
            if job_id not in self.jobs:
                raise ApiError(404, f"unknown job {job_id!r}")
            return self.jobs[job_id]

    def _work(self) -> None:
        while True:
            job = self._queue.get()
            with self.lock:
                job.state = "Running"
                snapshot = {s: list(self.sets[s]) for s in job.sets}
            try:
                model = self._train(job, snapshot)
            except Exception as exc:  # reported through the job record
                with self.lock:
                    job.state, job.error = "Failed", str(exc)
                continue
            ref = f"model-{job.job_id}.json"
            if self.model_dir is not None:
                model.save(self.model_dir / ref)
                model.save(self.model_dir / CURRENT_MODEL)
            with self.lock:
                self.model = model
                job.state, job.model = "Done", ref

    def _train(self, job: Job, snapshot: dict[str, list[StoredPhoto]]) -> Model:
        from ..recognizer import extractor_from_spec

        extractor = extractor_from_spec(self.config.features)
        samples = [(extractor(p.image), job.labels[s]) for s in job.sets for p in snapshot[s]]
        labels = list(dict.fromkeys(job.labels[s] for s in job.sets))
        return self.train_fn(samples, self.config.train, extractor.spec(), labels=labels)


def _error(status: int, message: str) -> JSONResponse:
    return JSONResponse({"error": message}, status_code=status)


async def _read_image_request(request: Request) -> tuple[np.ndarray, str, Optional[dict]]:
    """Image plus optional pose JSON from a multipart or base64-JSON body."""
    ctype = request.headers.get("content-type", "")
    if ctype.startswith("multipart/form-data"):
        form = await request.form()
        upload = form.get("image")
        if upload is None or isinstance(upload, str):
            raise ApiError(400, "multipart body needs an 'image' file field")
        name = upload.filename or "upload"
        data = await upload.read()
        pose_text = form.get("pose")
        pose = None
        if pose_text:
            try:
                pose = json.loads(pose_text if isinstance(pose_text, str) else (await pose_text.read()))
            except json.JSONDecodeError as exc:
                raise ApiError(400, f"pose is not valid JSON: {exc}") from None
        if form.get("name"):
            name = str(form.get("name"))
    elif ctype.startswith("application/json"):
        try:
            body = await request.json()
            data = base64.b64decode(body["image_base64"], validate=True)
        except (json.JSONDecodeError, KeyError, TypeError, binascii.Error) as exc:
            raise ApiError(400, f"JSON body needs a base64 'image_base64' field ({exc})") from None
        name = str(body.get("name", "upload"))
        pose = body.get("pose")
    else:
        raise ApiError(400, f"unsupported content type {ctype!r}")
    try:
        img = decode_image(data, name)
    except ImageLoadError as exc:
        raise ApiError(400, str(exc)) from None
    return img, name, pose


def _parse_pose(pose: Optional[dict]) -> tuple[Optional[CameraPose], Optional[ObjectFrame]]:
    if pose is None:
        return None, None
    try:
        cam = CameraPose(tuple(pose["position"]), tuple(pose["view_dir"]))
        frame = ObjectFrame.from_json(pose["object_frame"]) if pose.get("object_frame") else None
    except (KeyError, TypeError, ValueError) as exc:
        raise ApiError(400, f"malformed pose: {exc}") from None
    return cam, frame


def create_app(
    config: Optional[ToolkitConfig] = None,
    model_dir: Optional[str] = None,
    train_fn: Callable = train,
) -> FastAPI:
    config = config or ToolkitConfig()
    state = ServiceState(config, model_dir or config.service.model_dir, train_fn)
    app = FastAPI(title="teachset", version=str(API_VERSION))
    app.state.service = state

    @app.exception_handler(ApiError)
    async def _api_error(request: Request, exc: ApiError):
        return _error(exc.status, exc.message)

    @app.get("/v1/healthz")
    def healthz():
        return {"status": "ok", "version": API_VERSION}

    @app.post("/v1/sets/{set_id}/photos")
    async def add_photo(set_id: str, request: Request):
        img, name, pose_json = await _read_image_request(request)
        pose, frame = _parse_pose(pose_json)
        try:
            d = state.engine.describe(img, name)
        except ValueError as exc:
            raise ApiError(400, str(exc)) from None
        state.add_photo(set_id, StoredPhoto(name, img, pose, frame, d))
        return state.engine.record(name, d)

    @app.get("/v1/sets/{set_id}/summary")
    def summary(set_id: str):
        photos = state.photos(set_id)
        s = state.engine.summarize(
            [p.descriptors for p in photos], [p.pose for p in photos], [p.frame for p in photos]
        )
        return {"set": set_id, **s.to_json()}

    @app.post("/v1/train", status_code=202)
    async def start_training(request: Request):
        try:
            body = await request.json()
        except json.JSONDecodeError:
            raise ApiError(400, "body must be JSON") from None
        if not isinstance(body, dict) or not isinstance(body.get("sets"), list):
            raise ApiError(400, "body needs a 'sets' list")
        labels = body.get("labels") or {}
        if not isinstance(labels, dict):
            raise ApiError(400, "'labels' must map set ids to labels")
        job = state.submit([str(s) for s in body["sets"]], {str(k): str(v) for k, v in labels.items()})
        return JSONResponse({"job_id": job.job_id, "state": job.state}, status_code=202)

    @app.get("/v1/jobs/{job_id}")
    def job_status(job_id: str):
        return state.job(job_id).to_json()

    @app.post("/v1/recognize")
    async def recognize(request: Request):
        if state.running:
            raise ApiError(409, "training in progress")
        img, _, _ = await _read_image_request(request)
        with state.lock:
            model = state.model
        if model is None:
            raise ApiError(409, "no model")
        try:
            pred = state.engine.recognize(model, img)
        except (ValueError, KeyError) as exc:
            raise ApiError(400, str(exc)) from None
        return pred.to_json()

    return app


def serve(config: ToolkitConfig, host: str = "127.0.0.1", port: int = 8000, model_dir: Optional[str] = None) -> None:
    import uvicorn

    uvicorn.run(create_app(config, model_dir), host=host, port=port)
