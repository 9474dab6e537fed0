"""Teach -> summarize -> (OK | Retrain) -> name -> train -> recognize flow."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

DEFAULT_PHOTOS_PER_OBJECT = 30


@dataclass(frozen=True)
class Idle:
    pass


@dataclass(frozen=True)
class Capturing:
    object_id: str
    count: int = 0


@dataclass(frozen=True)
class Summarizing:
    object_id: str


@dataclass(frozen=True)
class Naming:
    object_id: str


@dataclass(frozen=True)
class Training:
    pass


@dataclass(frozen=True)
class Ready:
    pass


SessionState = Union[Idle, Capturing, Summarizing, Naming, Training, Ready]


@dataclass(frozen=True)
class Teach:
    object_id: str


@dataclass(frozen=True)
class Capture:
    pass


@dataclass(frozen=True)
class Ok:
    pass


@dataclass(frozen=True)
class Retrain:
    pass


@dataclass(frozen=True)
class Name:
    label: str


@dataclass(frozen=True)
class StartTraining:
    pass


@dataclass(frozen=True)
class TrainingDone:
    succeeded: bool = True


@dataclass(frozen=True)
class Recognize:
    pass


Event = Union[Teach, Capture, Ok, Retrain, Name, StartTraining, TrainingDone, Recognize]


class IllegalTransition(ValueError):
    def __init__(self, state: SessionState, event: Event, reason: str):
        super().__init__(f"{type(event).__name__} not allowed in {state}: {reason}")
        self.state = state
        self.event = event


def step(
    state: SessionState,
    event: Event,
    *,
    photos_per_object: int = DEFAULT_PHOTOS_PER_OBJECT,
    model_available: bool = False,
) -> SessionState:
    """Pure transition function. Raises ``IllegalTransition`` for rejected events.

    ``model_available`` says whether a finished model exists, which gates
    recognition from the Idle state.
    """
    if photos_per_object < 1:
        raise ValueError("photos_per_object must be at least 1")

    def reject(reason: str):
        raise IllegalTransition(state, event, reason)

    if isinstance(state, Training):
        if isinstance(event, TrainingDone):
            return Ready() if event.succeeded else Idle()
        reject("scan and teach are inactive while training")

    if isinstance(event, Recognize):
        if isinstance(state, Ready) or (isinstance(state, Idle) and model_available):
            return state
        reject("no trained model")

    if isinstance(event, Teach):
        if isinstance(state, (Idle, Ready)):
            return Capturing(event.object_id, 0)
        reject("finish the current object first")

    if isinstance(event, Capture):
        if isinstance(state, Capturing):
            if state.count + 1 >= photos_per_object:
                return Summarizing(state.object_id)
            return Capturing(state.object_id, state.count + 1)
        reject("not capturing")

    if isinstance(event, (Ok, Retrain)):
        if isinstance(state, Summarizing):
            if isinstance(event, Ok):
                return Naming(state.object_id)
            return Capturing(state.object_id, 0)
        reject("no set under review")

    if isinstance(event, Name):
        if isinstance(state, Naming):
            if not event.label.strip():
                reject("empty label")
            return Ready() if model_available else Idle()
        reject("nothing to name")

    if isinstance(event, StartTraining):
        if isinstance(state, (Idle, Ready)):
            return Training()
        reject("training can only start from the home screen")

    if isinstance(event, TrainingDone):
        reject("no training job running")

    reject("unknown event")


class TeachingFlow:
    """Stateful wrapper around ``step`` that also keeps the current set's photos.

    Rejected events leave everything unchanged and are recorded in
    ``diagnostics``.
    """

    def __init__(self, photos_per_object: int = DEFAULT_PHOTOS_PER_OBJECT):
        self.photos_per_object = photos_per_object
        self.state: SessionState = Idle()
        self.model_available = False
        self.current_photos: list = []
        self.named: dict[str, str] = {}
        self.diagnostics: list[str] = []

    def handle(self, event: Event, payload=None) -> SessionState:
        try:
            new = step(
                self.state,
                event,
                photos_per_object=self.photos_per_object,
                model_available=self.model_available,
            )
        except IllegalTransition as exc:
            self.diagnostics.append(str(exc))
            raise
        if isinstance(event, Teach) or isinstance(event, Retrain):
            self.current_photos = []
        elif isinstance(event, Capture):
            self.current_photos.append(payload)
        elif isinstance(event, Name):
            self.named[self.state.object_id] = event.label
        elif isinstance(event, TrainingDone):
            self.model_available = self.model_available or event.succeeded
        self.state = new
        return new

    def offer(self, event: Event, payload=None) -> bool:
        """Like ``handle`` but returns False instead of raising on rejection."""
        try:
            self.handle(event, payload)
        except IllegalTransition:
            return False
        return True
