"""Linear SVM: Pegasos-style hinge-loss training, prediction, metrics, and
the GSVM model file format."""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "LinearSvmModel", "TrainConfig", "Metrics",
    "SvmError", "DimensionError", "SingleClassError",
    "ModelFormatError", "BadMagicError", "VersionError", "LengthError",
    "fit_standardizer", "objective", "train", "predict", "predict_batch",
    "evaluate", "metrics_from_counts", "save_model", "load_model",
]

MIN_SCALE = 1e-12
MAGIC = b"GSVM"
VERSION = 1


class SvmError(ValueError):
    pass


class DimensionError(SvmError):
    pass


class SingleClassError(SvmError):
    pass


class ModelFormatError(ValueError):
    pass


class BadMagicError(ModelFormatError):
    pass


class VersionError(ModelFormatError):
    pass


class LengthError(ModelFormatError):
    pass


@dataclass(frozen=True, eq=False)
class LinearSvmModel:
    """Decision function z = w . ((x - mean) / scale) + b; +1 is traffic."""

    weights: np.ndarray
    bias: float
    feature_mean: np.ndarray
    feature_scale: np.ndarray

    def __post_init__(self):
        for name in ("weights", "feature_mean", "feature_scale"):
            arr = np.array(getattr(self, name), dtype=np.float64, copy=True).ravel()
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "bias", float(self.bias))
        d = self.weights.shape[0]
        if self.feature_mean.shape[0] != d or self.feature_scale.shape[0] != d:
            raise DimensionError("weights, mean and scale must share one dimension")
        if np.any(~(self.feature_scale >= MIN_SCALE)):
            raise SvmError(f"feature_scale entries must be >= {MIN_SCALE}")

    @property
    def dim(self) -> int:
        return self.weights.shape[0]

    @classmethod
    def constant(cls, dim: int, bias: float) -> "LinearSvmModel":
        """A model that ignores its input and always returns ``bias``."""
        return cls(np.zeros(dim), bias, np.zeros(dim), np.ones(dim))

    def __eq__(self, other):
        if not isinstance(other, LinearSvmModel):
            return NotImplemented
        return save_model(self) == save_model(other)

    def __hash__(self):
        return hash(save_model(self))


@dataclass(frozen=True)
class TrainConfig:
    lam: float = 1e-4
    epochs: int = 50
    seed: int = 0
    mode: str = "stochastic"

    def __post_init__(self):
        if not self.lam > 0:
            raise SvmError("lambda must be > 0")
        if self.epochs < 1:
            raise SvmError("epochs must be >= 1")
        if self.mode not in ("stochastic", "full-batch"):
            raise SvmError(f"mode must be 'stochastic' or 'full-batch', got {self.mode!r}")


@dataclass(frozen=True)
class Metrics:
    tp: int
    tn: int
    fp: int
    fn: int
    accuracy: float
    precision: float
    recall: float
    f1: float
    degenerate: frozenset = field(default_factory=frozenset)

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn

    def as_dict(self) -> dict:
        return {
            "tp": self.tp, "tn": self.tn, "fp": self.fp, "fn": self.fn,
            "accuracy": self.accuracy, "precision": self.precision,
            "recall": self.recall, "f1": self.f1,
            "degenerate": sorted(self.degenerate),
        }


def fit_standardizer(features) -> tuple[np.ndarray, np.ndarray]:
    """Per-column mean and population std; near-constant columns get scale 1."""
    X = np.asarray(features, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise SvmError("standardizer needs at least 2 samples")
    mean = X.mean(axis=0)
    std = np.sqrt(((X - mean) ** 2).mean(axis=0))
    scale = np.where(std < MIN_SCALE, 1.0, std)
    return mean, scale


def objective(w, b, Z, y, lam) -> float:
    """(lam/2)|w|^2 + mean hinge loss on already standardized rows Z."""
    margins = y * (Z @ w + b)
    return 0.5 * lam * float(w @ w) + float(np.maximum(0.0, 1.0 - margins).mean())


def _check_xy(features, labels):
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64).ravel()
    if X.ndim != 2:
        raise DimensionError("features must be a 2-D matrix")
    if X.shape[0] != y.shape[0]:
        raise DimensionError(f"{X.shape[0]} feature rows but {y.shape[0]} labels")
    if not np.all((y == 1.0) | (y == -1.0)):
        raise SvmError("labels must be +1 or -1")
    return X, y


def _pegasos(Z, y, cfg):
    n, d = Z.shape
    rng = np.random.default_rng(cfg.seed)
    lam = cfg.lam
    radius = 1.0 / math.sqrt(lam)
    # w is held as scale * v so the shrink step is O(1)
    v = np.zeros(d)
    scale = 1.0
    b = 0.0
    t = 0
    for _ in range(cfg.epochs):
        for i in rng.permutation(n):
            t += 1
            eta = 1.0 / (lam * t)
            zi = Z[i]
            yi = y[i]
            margin = yi * (scale * float(v @ zi) + b)
            shrink = 1.0 - eta * lam
            if shrink == 0.0:
                v[:] = 0.0
                scale = 1.0
            else:
                scale *= shrink
            if margin < 1.0:
                v += (eta * yi / scale) * zi
                b += eta * yi
                norm = scale * math.sqrt(float(v @ v))
                if norm > radius:
                    scale *= radius / norm
            if scale < 1e-9:
                v *= scale
                scale = 1.0
    return scale * v, b


def _full_batch(Z, y, cfg):
    n, d = Z.shape
    lam = cfg.lam
    radius = 1.0 / math.sqrt(lam)
    w = np.zeros(d)
    b = 0.0
    best = (objective(w, b, Z, y, lam), w.copy(), b)
    for t in range(1, cfg.epochs + 1):
        eta = 1.0 / (lam * t)
        active = y * (Z @ w + b) < 1.0
        gw = lam * w - (y[active] @ Z[active]) / n
        gb = -y[active].sum() / n
        w = w - eta * gw
        b = b - eta * gb
        norm = math.sqrt(float(w @ w))
        if norm > radius:
            w *= radius / norm
        j = objective(w, b, Z, y, lam)
        if j < best[0]:
            best = (j, w.copy(), b)
    # subgradient steps are not monotone; keep the best iterate seen
    return best[1], best[2]


def train(features, labels, config: TrainConfig = TrainConfig()) -> LinearSvmModel:
    X, y = _check_xy(features, labels)
    if X.shape[0] < 2:
        raise SvmError("training needs at least 2 samples")
    if not (np.any(y > 0) and np.any(y < 0)):
        raise SingleClassError("training data must contain both classes")
    mean, scale = fit_standardizer(X)
    Z = (X - mean) / scale
    if config.mode == "stochastic":
        w, b = _pegasos(Z, y, config)
    else:
        w, b = _full_batch(Z, y, config)
    return LinearSvmModel(w, b, mean, scale)


def decision_values(model: LinearSvmModel, features) -> np.ndarray:
    X = np.asarray(features, dtype=np.float64)
    if X.ndim == 1:
        X = X[None]
    if X.shape[1] != model.dim:
        raise DimensionError(f"feature dimension {X.shape[1]} != model dimension {model.dim}")
    return ((X - model.feature_mean) / model.feature_scale) @ model.weights + model.bias


def predict_batch(model: LinearSvmModel, features) -> tuple[np.ndarray, np.ndarray]:
    z = decision_values(model, features)
    return np.where(z >= 0.0, 1, -1), z


def predict(model: LinearSvmModel, feature) -> tuple[int, float]:
    x = np.asarray(feature, dtype=np.float64)
    if x.ndim != 1:
        raise DimensionError("predict takes a single feature vector")
    z = float(decision_values(model, x)[0])
    return (1 if z >= 0.0 else -1), z


def metrics_from_counts(tp: int, tn: int, fp: int, fn: int) -> Metrics:
    total = tp + tn + fp + fn
    if total == 0:
        raise SvmError("no examples to evaluate")
    degenerate = set()
    precision = tp / (tp + fp) if tp + fp > 0 else 0.0
    if tp + fp == 0:
        degenerate.add("precision")
    recall = tp / (tp + fn) if tp + fn > 0 else 0.0
    if tp + fn == 0:
        degenerate.add("recall")
    if precision + recall > 0:
        # equals 2pr/(p+r); the count form avoids rounding on exact ratios
        f1 = 2 * tp / (2 * tp + fp + fn)
    else:
        f1 = 0.0
        degenerate.add("f1")
    return Metrics(tp, tn, fp, fn, (tp + tn) / total, precision, recall, f1, frozenset(degenerate))


def evaluate(model: LinearSvmModel, features, labels) -> Metrics:
    X, y = _check_xy(features, labels)
    if X.shape[0] == 0:
        raise SvmError("cannot evaluate on an empty set")
    pred, _ = predict_batch(model, X)
    pos = y > 0
    tp = int(np.sum(pos & (pred > 0)))
    fn = int(np.sum(pos & (pred < 0)))
    fp = int(np.sum(~pos & (pred > 0)))
    tn = int(np.sum(~pos & (pred < 0)))
    return metrics_from_counts(tp, tn, fp, fn)


# --- GSVM format: magic, u32 version, u64 dim, f64 w[dim], f64 b, f64 mean[dim], f64 scale[dim]

_HEAD = struct.Struct("<4sIQ")


def save_model(model: LinearSvmModel) -> bytes:
    return b"".join([
        _HEAD.pack(MAGIC, VERSION, model.dim),
        model.weights.astype("<f8").tobytes(),
        struct.pack("<d", model.bias),
        model.feature_mean.astype("<f8").tobytes(),
        model.feature_scale.astype("<f8").tobytes(),
    ])


def load_model(data: bytes) -> LinearSvmModel:
    data = bytes(data)
    if data[:4] != MAGIC:
        raise BadMagicError(f"bad magic {data[:4]!r}, expected {MAGIC!r}")
    if len(data) < _HEAD.size:
        raise LengthError("model header truncated")
    _, version, dim = _HEAD.unpack_from(data)
    if version != VERSION:
        raise VersionError(f"unsupported model version {version}")
    expected = _HEAD.size + 8 * (3 * dim + 1)
    if len(data) != expected:
        raise LengthError(f"model body is {len(data)} bytes, expected {expected}")
    body = np.frombuffer(data, dtype="<f8", offset=_HEAD.size)
    w = body[:dim]
    b = float(body[dim])
    mean = body[dim + 1:2 * dim + 1]
    scale = body[2 * dim + 1:]
    return LinearSvmModel(w, b, mean, scale)
