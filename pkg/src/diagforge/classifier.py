"""Binary defect classifier: small convolutional backbone, BCE training.

Scores stay strictly inside (0,1) via a +-16 logit clamp. Training is
seed-deterministic; the final-epoch parameters are returned (no early
stopping).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import torch
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import checkpoint as ckpt
from .core import ImageGrid, derive_torch_seed
from .exceptions import ConfigurationError, TrainingError, ValidationError

logger = logging.getLogger(__name__)

SCORE_EPS = 1e-7
LOGIT_CLAMP = 16.0

TRAIN_SETS = ("neg+aug", "neg+pos+aug")


@dataclass(frozen=True)
class TrainConfig:
    """Classifier training hyperparameters (adaptive-moment descent)."""

    epochs: int = 50
    learning_rate: float = 1e-4
    batch_size: int = 32
    seed: int = 0
    dtype: str = "float32"

    def __post_init__(self):
        if self.epochs < 1:
            raise ValidationError(f"epochs must be >= 1, got {self.epochs}")
        if self.learning_rate <= 0:
            raise ValidationError(f"learning_rate must be > 0, got {self.learning_rate}")


@dataclass(frozen=True)
class Prediction:
    """Defect probability for one sample."""

    score: float
    sample_id: str = ""

    def __post_init__(self):
        if not 0.0 < self.score < 1.0:
            raise ValidationError(f"score must lie strictly inside (0,1), got {self.score}")


def bce_loss(y, yhat) -> float:
    """Mean binary cross-entropy over the batch.

    Scores at exactly 0 or 1 are clamped to [1e-7, 1-1e-7] and logged,
    so the loss stays finite.
    """
    y = np.asarray(y, dtype=np.float64)
    yhat = np.asarray(yhat, dtype=np.float64)
    if y.shape != yhat.shape:
        raise ValidationError(f"labels shape {y.shape} != scores shape {yhat.shape}")
    if np.any((yhat <= 0) | (yhat >= 1)):
        logger.warning("bce_loss clamped %d scores to (0,1)", int(np.sum((yhat <= 0) | (yhat >= 1))))
    yhat = np.clip(yhat, SCORE_EPS, 1.0 - SCORE_EPS)
    return float(-np.mean(y * np.log(yhat) + (1.0 - y) * np.log(1.0 - yhat)))


class ConvBackbone(torch.nn.Module):
    """Three conv/pool stages, global average pool, logistic head."""

    def __init__(self, width: int = 16):
        super().__init__()
        self.width = width
        self.features = torch.nn.Sequential(
            torch.nn.Conv2d(1, width, 3, padding=1),
            torch.nn.SiLU(),
            torch.nn.MaxPool2d(2),
            torch.nn.Conv2d(width, width * 2, 3, padding=1),
            torch.nn.SiLU(),
            torch.nn.MaxPool2d(2),
            torch.nn.Conv2d(width * 2, width * 4, 3, padding=1),
            torch.nn.SiLU(),
            torch.nn.MaxPool2d(2),
        )
        self.head = torch.nn.Linear(width * 4, 1)

    def signature(self) -> dict:
        return {"arch": "conv_backbone_v1", "width": self.width}

    def logits(self, x: torch.Tensor) -> torch.Tensor:
        h = self.features(x * 2.0 - 1.0)
        h = h.mean(dim=(2, 3))
        return self.head(h)[:, 0].clamp(-LOGIT_CLAMP, LOGIT_CLAMP)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return torch.sigmoid(self.logits(x))


def init_backbone(width: int = 16, seed: int = 0, dtype="float32") -> ConvBackbone:
    model = ConvBackbone(width=width)
    model = model.to(torch.float64 if str(dtype) == "float64" else torch.float32)
    g = torch.Generator().manual_seed(int(seed))
    with torch.no_grad():
        for p in model.parameters():
            if p.ndim >= 2:
                fan_in = p.shape[1] * (p[0, 0].numel() if p.ndim > 2 else 1)
                p.normal_(0.0, np.sqrt(2.0 / max(fan_in, 1)), generator=g)
            else:
                p.zero_()
    return model


def _as_pixel_batch(images, dtype) -> torch.Tensor:
    rows = []
    for img in images:
        arr = img.plane() if isinstance(img, ImageGrid) else np.asarray(img, dtype=np.float64)
        rows.append(arr)
    dt = torch.float64 if str(dtype) == "float64" else torch.float32
    return torch.as_tensor(np.stack(rows)[:, None, :, :], dtype=dt)


class DefectClassifier(BaseEstimator):
    """sklearn-style binary classifier over [0,1] grayscale rasters."""

    def __init__(
        self,
        width: int = 16,
        epochs: int = 50,
        learning_rate: float = 1e-4,
        batch_size: int = 32,
        seed: int = 0,
        dtype: str = "float32",
    ):
        self.width = width
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.seed = seed
        self.dtype = dtype

    def fit(self, X, y):
        torch.set_num_threads(1)
        xb = _as_pixel_batch(X, self.dtype)
        yb = torch.as_tensor(np.asarray(y, dtype=np.float64), dtype=xb.dtype)
        if xb.shape[0] != yb.shape[0]:
            raise ValidationError(f"got {xb.shape[0]} images but {yb.shape[0]} labels")
        classes = set(np.unique(np.asarray(y)).tolist())
        if classes - {0, 1} or len(classes) < 2:
            raise ConfigurationError(f"training set must contain both classes, got labels {sorted(classes)}")
        self.resolution_ = tuple(xb.shape[2:])
        model = init_backbone(self.width, seed=self.seed, dtype=self.dtype)
        g = torch.Generator().manual_seed(derive_torch_seed(self.seed, 1))
        opt = torch.optim.Adam(model.parameters(), lr=self.learning_rate)
        n = xb.shape[0]
        history = []
        step = 0
        for _ in range(self.epochs):
            perm = torch.randperm(n, generator=g)
            losses = []
            for lo in range(0, n, self.batch_size):
                idx = perm[lo : lo + self.batch_size]
                scores = model(xb[idx]).clamp(SCORE_EPS, 1.0 - SCORE_EPS)
                loss = -(
                    yb[idx] * torch.log(scores) + (1.0 - yb[idx]) * torch.log(1.0 - scores)
                ).mean()
                if not torch.isfinite(loss):
                    raise TrainingError(f"non-finite loss at step {step}", step=step)
                opt.zero_grad()
                loss.backward()
                opt.step()
                losses.append(float(loss.detach()))
                step += 1
            history.append(float(np.mean(losses)))
        self.model_ = model
        self.history_ = history
        return self

    def predict_scores(self, X) -> np.ndarray:
        check_is_fitted(self, "model_")
        xb = _as_pixel_batch(X, self.dtype)
        if tuple(xb.shape[2:]) != self.resolution_:
            raise ValidationError(
                f"images are {tuple(xb.shape[2:])} but the model expects {self.resolution_}"
            )
        with torch.no_grad():
            out = []
            for lo in range(0, xb.shape[0], 256):
                out.append(self.model_(xb[lo : lo + 256]).numpy())
        return np.concatenate(out).astype(np.float64)

    def predict_proba(self, X) -> np.ndarray:
        p1 = self.predict_scores(X)
        return np.stack([1.0 - p1, p1], axis=1)

    def predict(self, X, threshold: float = 0.5) -> np.ndarray:
        return (self.predict_scores(X) >= threshold).astype(int)

    def save(self, path) -> None:
        check_is_fitted(self, "model_")
        meta = {
            "kind": "classifier",
            "signature": self.model_.signature(),
            "resolution": list(self.resolution_),
            "params": self.get_params(),
        }
        arrays = {
            f"param/{k}": v.detach().numpy().astype(np.float64)
            for k, v in self.model_.state_dict().items()
        }
        ckpt.save_checkpoint(path, meta, arrays)

    @classmethod
    def load(cls, path) -> "DefectClassifier":
        meta, arrays = ckpt.load_checkpoint(path, expected_kind="classifier")
        est = cls(**meta["params"])
        model = ConvBackbone(width=meta["signature"]["width"])
        dt = torch.float64 if est.dtype == "float64" else torch.float32
        state = {
            k[len("param/"):]: torch.as_tensor(v, dtype=dt)
            for k, v in arrays.items()
            if k.startswith("param/")
        }
        model = model.to(dt)
        model.load_state_dict(state)
        est.model_ = model
        est.resolution_ = tuple(meta["resolution"])
        est.history_ = []
        return est


def train(bundle, which: str, config: TrainConfig = TrainConfig(), width: int = 16) -> DefectClassifier:
    """Train on a bundle's effective train set.

    which='neg+aug' uses I_n and I_a only (zero-shot); 'neg+pos+aug'
    adds the real positives I_p (full-shot).
    """
    if which not in TRAIN_SETS:
        raise ConfigurationError(f"which must be one of {TRAIN_SETS}, got {which!r}")
    samples = list(bundle.negatives_train) + list(bundle.augmented)
    if which == "neg+pos+aug":
        samples += list(bundle.positives_train)
    images = [s.image for s in samples]
    labels = [s.label for s in samples]
    clf = DefectClassifier(
        width=width,
        epochs=config.epochs,
        learning_rate=config.learning_rate,
        batch_size=config.batch_size,
        seed=config.seed,
        dtype=config.dtype,
    )
    return clf.fit(images, labels)


def predict(clf: DefectClassifier, samples) -> list[Prediction]:
    """Score LabeledSamples (or raw images) into Prediction records."""
    images, ids = [], []
    for i, s in enumerate(samples):
        if hasattr(s, "image"):
            images.append(s.image)
            ids.append(s.sample_id or f"sample-{i}")
        else:
            images.append(s)
            ids.append(f"sample-{i}")
    scores = clf.predict_scores(images)
    return [Prediction(score=float(v), sample_id=sid) for v, sid in zip(scores, ids)]
