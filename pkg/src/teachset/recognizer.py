"""Teachable classifier: features, softmax last-layer training, rejection, evaluation."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Mapping, Optional, Protocol, Sequence

import numpy as np

from .detect import image_key
from .imaging import check_rgb

DONT_KNOW = "dont_know"
MODEL_FORMAT = "teachset-model"
MODEL_VERSION = 1


class FeatureExtractor(Protocol):
    dim: int

    def __call__(self, img: np.ndarray) -> np.ndarray: ...

    def spec(self) -> dict: ...


@dataclass(frozen=True)
class PooledExtractor:
    """Mean-pool each channel onto a ``grid x grid`` lattice, scaled to [0, 1]."""

    grid: int = 8

    @property
    def dim(self) -> int:
        return self.grid * self.grid * 3

    def __call__(self, img: np.ndarray) -> np.ndarray:
        rgb = check_rgb(img).astype(np.float64) / 255.0
        h, w, _ = rgb.shape
        rows = np.minimum((np.arange(h) * self.grid) // h, self.grid - 1)
        cols = np.minimum((np.arange(w) * self.grid) // w, self.grid - 1)
        cell = (rows[:, None] * self.grid + cols[None, :]).ravel()
        counts = np.bincount(cell, minlength=self.grid * self.grid).astype(np.float64)
        counts[counts == 0] = 1.0  # image smaller than the grid
        flat = rgb.reshape(-1, 3)
        pooled = np.stack(
            [np.bincount(cell, weights=flat[:, c], minlength=self.grid**2) / counts for c in range(3)]
        )
        # channel-major: all R cells, then G, then B
        return pooled.reshape(-1)

    def spec(self) -> dict:
        return {"id": "pool", "grid": self.grid}


class FileExtractor:
    """Looks up precomputed embeddings by image digest."""

    def __init__(self, table: Mapping[str, Sequence[float]], path: str = ""):
        self.table = {k: np.asarray(v, dtype=np.float64) for k, v in table.items()}
        dims = {v.shape for v in self.table.values()}
        if len(dims) != 1:
            raise ValueError("embedding table must be non-empty with one dimension")
        (shape,) = dims
        self.dim = int(shape[0])
        self.path = path

    @classmethod
    def load(cls, path: str) -> "FileExtractor":
        with open(path) as fh:
            return cls(json.load(fh), path)

    def __call__(self, img: np.ndarray) -> np.ndarray:
        key = image_key(img)
        try:
            return self.table[key]
        except KeyError:
            raise KeyError(f"no precomputed features for image {key}") from None

    def spec(self) -> dict:
        return {"id": "file", "path": self.path}


def extractor_from_spec(spec: Mapping) -> FeatureExtractor:
    kind = spec.get("id", "pool")
    if kind == "pool":
        return PooledExtractor(int(spec.get("grid", 8)))
    if kind == "file":
        return FileExtractor.load(spec["path"])
    raise ValueError(f"unknown feature extractor {kind!r}")


def extract_features(img: np.ndarray) -> np.ndarray:
    return PooledExtractor()(img)


@dataclass(frozen=True)
class TrainConfig:
    iterations: int = 500
    learning_rate: float = 0.01

    def __post_init__(self) -> None:
        if self.iterations < 1:
            raise ValueError("iterations must be at least 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")


@dataclass(frozen=True)
class RejectionConfig:
    entropy_threshold: float = 2.0
    confidence_threshold: float = 0.4
    log_base: str = "natural"

    def __post_init__(self) -> None:
        if self.entropy_threshold < 0 or self.confidence_threshold < 0:
            raise ValueError("rejection thresholds must be non-negative")
        if self.log_base not in ("natural", "base-2"):
            raise ValueError("log_base must be 'natural' or 'base-2'")


@dataclass
class Model:
    labels: list[str]
    weights: np.ndarray  # classes x (dim + 1), bias in the last column
    extractor: dict = field(default_factory=lambda: PooledExtractor().spec())
    train_config: Optional[TrainConfig] = None
    loss_history: list[float] = field(default_factory=list, repr=False)

    def __post_init__(self) -> None:
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if len(self.labels) < 2 or len(set(self.labels)) != len(self.labels):
            raise ValueError("a model needs at least two distinct labels")
        if self.weights.ndim != 2 or self.weights.shape[0] != len(self.labels):
            raise ValueError("weight matrix must have one row per label")
        if not np.all(np.isfinite(self.weights)):
            raise ValueError("weights must be finite")

    @property
    def dim(self) -> int:
        return self.weights.shape[1] - 1

    def feature_extractor(self) -> FeatureExtractor:
        return extractor_from_spec(self.extractor)

    def to_json(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "labels": list(self.labels),
            "dim": self.dim,
            "extractor": dict(self.extractor),
            "weights": self.weights.tolist(),
            "train_config": asdict(self.train_config) if self.train_config else None,
        }

    @classmethod
    def from_json(cls, d: dict) -> "Model":
        if d.get("format") != MODEL_FORMAT:
            raise ValueError("not a model file")
        if d.get("version") != MODEL_VERSION:
            raise ValueError(f"unsupported model version {d.get('version')}")
        m = cls(
            labels=list(d["labels"]),
            weights=np.asarray(d["weights"], dtype=np.float64),
            extractor=dict(d.get("extractor") or PooledExtractor().spec()),
            train_config=TrainConfig(**d["train_config"]) if d.get("train_config") else None,
        )
        if m.dim != d["dim"]:
            raise ValueError("model dim does not match weight matrix")
        return m

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh)

    @classmethod
    def load(cls, path) -> "Model":
        with open(path) as fh:
            return cls.from_json(json.load(fh))


def _augment(x: np.ndarray) -> np.ndarray:
    return np.hstack([x, np.ones((x.shape[0], 1))])


def softmax_rows(scores: np.ndarray) -> np.ndarray:
    z = scores - scores.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def loss_and_gradient(weights: np.ndarray, xa: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean cross-entropy and its gradient for augmented features ``xa``.

    ``y`` holds integer class indices.
    """
    n = xa.shape[0]
    scores = xa @ weights.T
    z = scores - scores.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=1))
    loss = float(np.mean(log_norm - z[np.arange(n), y]))
    probs = np.exp(z - log_norm[:, None])
    probs[np.arange(n), y] -= 1.0
    grad = probs.T @ xa / n
    return loss, grad


def train(
    samples: Sequence[tuple[np.ndarray, str]],
    cfg: TrainConfig = TrainConfig(),
    extractor: Optional[dict] = None,
    labels: Optional[Sequence[str]] = None,
) -> Model:
    """Full-batch gradient descent from zero weights on mean cross-entropy.

    Label order is the order of first appearance unless ``labels`` is given.
    """
    if len(samples) == 0:
        raise ValueError("no training samples")
    if labels is None:
        labels = list(dict.fromkeys(lbl for _, lbl in samples))
    labels = list(labels)
    if len(set(labels)) < 2:
        raise ValueError("training needs at least two distinct labels")
    index = {lbl: i for i, lbl in enumerate(labels)}
    missing = set(labels) - {lbl for _, lbl in samples}
    if missing:
        raise ValueError(f"labels without samples: {sorted(missing)}")
    feats = [np.asarray(f, dtype=np.float64).ravel() for f, _ in samples]
    dims = {f.shape[0] for f in feats}
    if len(dims) != 1:
        raise ValueError(f"inconsistent feature dimensions {sorted(dims)}")
    try:
        y = np.array([index[lbl] for _, lbl in samples])
    except KeyError as exc:
        raise ValueError(f"sample label {exc.args[0]!r} not in label list") from None

    xa = _augment(np.vstack(feats))
    w = np.zeros((len(labels), xa.shape[1]))
    history = []
    for _ in range(cfg.iterations):
        loss, grad = loss_and_gradient(w, xa, y)
        history.append(loss)
        w -= cfg.learning_rate * grad
    history.append(loss_and_gradient(w, xa, y)[0])
    return Model(
        labels=labels,
        weights=w,
        extractor=dict(extractor) if extractor else PooledExtractor().spec(),
        train_config=cfg,
        loss_history=history,
    )


def predict_confidences(m: Model, f: np.ndarray) -> np.ndarray:
    x = np.asarray(f, dtype=np.float64).ravel()
    if x.shape[0] != m.dim:
        raise ValueError(f"feature dim {x.shape[0]} does not match model dim {m.dim}")
    return softmax_rows((m.weights @ np.append(x, 1.0))[None, :])[0]


def entropy(c: Sequence[float], base: str = "natural") -> float:
    p = np.asarray(c, dtype=np.float64)
    p = p[p > 0]
    h = float(-(p * np.log(p)).sum())
    if base == "base-2":
        h /= math.log(2.0)
    return h + 0.0


@dataclass(frozen=True)
class Prediction:
    outcome: str  # a label or DONT_KNOW
    confidences: tuple[float, ...]
    entropy: float
    labels: tuple[str, ...] = ()

    @property
    def rejected(self) -> bool:
        return self.outcome == DONT_KNOW

    def to_json(self) -> dict:
        return {
            "outcome": self.outcome,
            "confidences": dict(zip(self.labels, self.confidences)) if self.labels else list(self.confidences),
            "entropy": self.entropy,
        }


def decide(
    c: Sequence[float],
    cfg: RejectionConfig = RejectionConfig(),
    labels: Optional[Sequence[str]] = None,
) -> Prediction:
    """Argmax label, or DONT_KNOW if entropy is too high or confidence too low."""
    conf = tuple(float(v) for v in c)
    labels = tuple(labels) if labels is not None else tuple(str(i) for i in range(len(conf)))
    h = entropy(conf, cfg.log_base)
    best = int(np.argmax(conf))  # first maximum wins ties
    if h > cfg.entropy_threshold or conf[best] < cfg.confidence_threshold:
        outcome = DONT_KNOW
    else:
        outcome = labels[best]
    return Prediction(outcome, conf, h, labels)


def predict(m: Model, img: np.ndarray, rej: RejectionConfig = RejectionConfig(), extractor=None) -> Prediction:
    extractor = extractor or m.feature_extractor()
    return decide(predict_confidences(m, extractor(img)), rej, m.labels)


@dataclass
class Evaluation:
    accuracy: float
    outcomes: list[tuple[str, str, bool]]  # (true label, outcome, correct)

    @property
    def total(self) -> int:
        return len(self.outcomes)


def is_correct(m: Model, true_label: str, outcome: str) -> bool:
    # abstaining is only right for objects the model was never taught
    if outcome == DONT_KNOW:
        return true_label not in m.labels
    return outcome == true_label


def evaluate(
    m: Model,
    test: Sequence[tuple[np.ndarray, str]],
    rej: RejectionConfig = RejectionConfig(),
    extractor=None,
) -> Evaluation:
    if len(test) == 0:
        raise ValueError("empty test set")
    extractor = extractor or m.feature_extractor()
    outcomes = []
    for img, label in test:
        pred = decide(predict_confidences(m, extractor(img)), rej, m.labels)
        outcomes.append((label, pred.outcome, is_correct(m, label, pred.outcome)))
    correct = sum(ok for _, _, ok in outcomes)
    return Evaluation(correct / len(outcomes), outcomes)


def cross_evaluate(
    models: Sequence[Model],
    testsets: Mapping[str, Sequence[tuple[np.ndarray, str]]],
    rej: RejectionConfig = RejectionConfig(),
) -> list[list[float]]:
    """Accuracy of every model (rows) on every named test set (columns)."""
    if not models:
        return []
    vocab = set(models[0].labels)
    if any(set(m.labels) != vocab for m in models):
        raise ValueError("models do not share a label vocabulary")
    return [[evaluate(m, ts, rej).accuracy for ts in testsets.values()] for m in models]
