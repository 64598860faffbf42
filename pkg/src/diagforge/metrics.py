"""Evaluation suite: AP/precision/recall and Fréchet distance on deep features.

The feature extractor is a fixed-seed untrained conv stack with pooling
taps at 64 and 192 channels; random features keep the metric's ordering
behavior at desk scale while the tap dimensions match the full-scale
pooling-layer policy. The sample-count rule (n must exceed the feature
dimension) is enforced at the fid entry point.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .core import ImageGrid
from .exceptions import MetricError, ValidationError

TAP_DIMS = {"pool64": 64, "pool192": 192}


@dataclass(frozen=True)
class PRPoint:
    threshold: float
    precision: float
    recall: float


@dataclass(frozen=True)
class FeatureTap:
    layer: str
    dimension: int

    def __post_init__(self):
        if self.layer not in TAP_DIMS:
            raise ValidationError(f"unknown tap {self.layer!r}, expected one of {sorted(TAP_DIMS)}")
        if self.dimension != TAP_DIMS[self.layer]:
            raise ValidationError(
                f"tap {self.layer} has dimension {TAP_DIMS[self.layer]}, got {self.dimension}"
            )


def as_tap(tap) -> FeatureTap:
    if isinstance(tap, FeatureTap):
        return tap
    return FeatureTap(layer=str(tap), dimension=TAP_DIMS.get(str(tap), -1))


@dataclass(frozen=True)
class FeatureGaussian:
    """Moments (m, C) of a feature cloud."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        m = np.atleast_1d(np.asarray(self.mean, dtype=np.float64))
        c = np.asarray(self.cov, dtype=np.float64)
        if c.ndim == 0:
            c = c.reshape(1, 1)
        if c.shape != (m.shape[0], m.shape[0]):
            raise ValidationError(f"cov shape {c.shape} does not match mean length {m.shape[0]}")
        scale = max(1.0, float(np.abs(c).max()))
        if np.abs(c - c.T).max() > 1e-12 * scale:
            raise ValidationError("covariance must be symmetric to 1e-12")
        w = np.linalg.eigvalsh((c + c.T) / 2.0)
        if w.min() < -1e-10 * scale:
            raise ValidationError(f"covariance must be PSD up to noise, min eigenvalue {w.min():.3e}")
        object.__setattr__(self, "mean", m)
        object.__setattr__(self, "cov", c)


def _check_scores_labels(scores, labels):
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValidationError(f"scores {scores.shape} and labels {labels.shape} must be equal 1-D")
    if not np.all(np.isin(labels, (0, 1))):
        raise ValidationError("labels must be 0/1")
    if labels.sum() == 0:
        raise MetricError("metric undefined without positive labels")
    return scores, labels.astype(np.int64)


def precision_recall(scores, labels, threshold: float) -> tuple[float, float]:
    """Precision and recall predicting positive iff score >= threshold.

    Precision is 0 by convention when nothing is predicted positive.
    """
    scores, labels = _check_scores_labels(scores, labels)
    pred = scores >= threshold
    tp = int(np.sum(pred & (labels == 1)))
    fp = int(np.sum(pred & (labels == 0)))
    fn = int(np.sum(~pred & (labels == 1)))
    precision = tp / (tp + fp) if (tp + fp) > 0 else 0.0
    recall = tp / (tp + fn)
    return float(precision), float(recall)


def pr_curve(scores, labels) -> list[PRPoint]:
    """PR points at every distinct score threshold, descending.

    Tied scores enter as a single threshold step (threshold semantics,
    not permutation semantics).
    """
    scores, labels = _check_scores_labels(scores, labels)
    order = np.argsort(-scores, kind="stable")
    s, l = scores[order], labels[order]
    npos = int(l.sum())
    cum_tp = np.cumsum(l)
    cum_fp = np.cumsum(1 - l)
    boundary = np.append(s[1:] != s[:-1], True)
    pts = []
    for i in np.flatnonzero(boundary):
        tp, fp = int(cum_tp[i]), int(cum_fp[i])
        pts.append(PRPoint(threshold=float(s[i]), precision=tp / (tp + fp), recall=tp / npos))
    return pts


def average_precision(scores, labels) -> float:
    """Step-sum AP over descending distinct-score thresholds:
    sum (R_k - R_{k-1}) * P_k."""
    pts = pr_curve(scores, labels)
    ap = 0.0
    prev_r = 0.0
    for p in pts:
        ap += (p.recall - prev_r) * p.precision
        prev_r = p.recall
    return float(ap)


class _PoolStack(torch.nn.Module):
    """Untrained tanh conv stack; taps after the second and third pools."""

    def __init__(self):
        super().__init__()
        self.c1 = torch.nn.Conv2d(1, 32, 3, padding=1)
        self.c2 = torch.nn.Conv2d(32, 64, 3, padding=1)
        self.c3 = torch.nn.Conv2d(64, 96, 3, padding=1)
        self.c4 = torch.nn.Conv2d(96, 192, 3, padding=1)
        self.pool = torch.nn.MaxPool2d(2)

    def forward(self, x: torch.Tensor) -> dict:
        h = self.pool(torch.tanh(self.c1(x * 2.0 - 1.0)))
        h = self.pool(torch.tanh(self.c2(h)))
        tap64 = h.mean(dim=(2, 3))
        h = self.pool(torch.tanh(self.c4(torch.tanh(self.c3(h)))))
        tap192 = h.mean(dim=(2, 3))
        return {"pool64": tap64, "pool192": tap192}


_EXTRACTOR_SEED = 20240901
_extractor_cache: _PoolStack | None = None


def _extractor() -> _PoolStack:
    global _extractor_cache
    if _extractor_cache is None:
        model = _PoolStack().to(torch.float64)
        g = torch.Generator().manual_seed(_EXTRACTOR_SEED)
        with torch.no_grad():
            for p in model.parameters():
                if p.ndim >= 2:
                    fan_in = p.shape[1] * p[0, 0].numel()
                    p.normal_(0.0, np.sqrt(1.0 / fan_in), generator=g)
                else:
                    p.zero_()
        model.eval()
        _extractor_cache = model
    return _extractor_cache


def extract_features(images, tap) -> np.ndarray:
    """Deterministic (n, d) feature matrix; row i belongs to image i."""
    tap = as_tap(tap)
    rows = []
    for img in images:
        arr = img.plane() if isinstance(img, ImageGrid) else np.asarray(img, dtype=np.float64)
        rows.append(arr)
    if not rows:
        raise MetricError("need at least one image")
    x = torch.as_tensor(np.stack(rows)[:, None, :, :], dtype=torch.float64)
    model = _extractor()
    outs = []
    with torch.no_grad():
        for lo in range(0, x.shape[0], 64):
            outs.append(model(x[lo : lo + 64])[tap.layer].numpy())
    return np.concatenate(outs)


def fit_gaussian(features) -> FeatureGaussian:
    """Sample mean and unbiased covariance, with a trace-scaled ridge
    when the smallest eigenvalue is below 1e-10."""
    f = np.asarray(features, dtype=np.float64)
    if f.ndim == 1:
        f = f[:, None]
    n, d = f.shape
    if n < 2:
        raise MetricError(f"need at least 2 samples to fit a Gaussian, got {n}")
    mean = f.mean(axis=0)
    cov = np.cov(f, rowvar=False, ddof=1).reshape(d, d)
    cov = (cov + cov.T) / 2.0
    w = np.linalg.eigvalsh(cov)
    if w.min() < 1e-10:
        cov = cov + (1e-6 * np.trace(cov) / d) * np.eye(d)
    return FeatureGaussian(mean=mean, cov=cov)


def sqrtm_spd(a: np.ndarray) -> np.ndarray:
    """Symmetric PSD square root via eigendecomposition.

    Eigenvalues in [-1e-8, 0) are clipped to 0; larger asymmetry or
    negativity is an error.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise MetricError(f"expected a square matrix, got shape {a.shape}")
    scale = max(1.0, float(np.abs(a).max()))
    if np.abs(a - a.T).max() > 1e-8 * scale:
        raise MetricError("matrix is not symmetric within 1e-8")
    w, v = np.linalg.eigh((a + a.T) / 2.0)
    if w.min() < -1e-8 * scale:
        raise MetricError(f"matrix is not PSD: min eigenvalue {w.min():.3e}")
    s = (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T
    return (s + s.T) / 2.0


def frechet_distance(ga: FeatureGaussian, gb: FeatureGaussian) -> float:
    """d = ||m-m_w||^2 + Tr(C + C_w - 2 (C C_w)^(1/2)), cross term via
    the stable form Tr sqrtm(C^(1/2) C_w C^(1/2))."""
    if ga.mean.shape != gb.mean.shape:
        raise MetricError("feature dimensions differ between the two Gaussians")
    diff = ga.mean - gb.mean
    sa = sqrtm_spd(ga.cov)
    cross = sa @ gb.cov @ sa
    tr_cross = float(np.trace(sqrtm_spd((cross + cross.T) / 2.0)))
    d = float(diff @ diff + np.trace(ga.cov) + np.trace(gb.cov) - 2.0 * tr_cross)
    if d < -1e-6:
        raise MetricError(f"Fréchet distance came out {d:.3e}, below numerical tolerance")
    return max(d, 0.0)


def fid_from_features(feat_a, feat_b) -> float:
    """Fréchet distance between Gaussians fitted to raw feature rows
    (the extractor-bypassing test surface)."""
    return frechet_distance(fit_gaussian(feat_a), fit_gaussian(feat_b))


def fid(set_a, set_b, tap) -> float:
    """FID between two image sets at the given tap.

    Both sets must contain more samples than the tap dimension; too few
    samples make the covariance rank-deficient, so the error suggests
    the smaller tap.
    """
    tap = as_tap(tap)
    na, nb = len(set_a), len(set_b)
    if na <= tap.dimension or nb <= tap.dimension:
        raise MetricError(
            f"FID at {tap.layer} needs more than {tap.dimension} samples per set "
            f"(got {na} and {nb}); use a smaller tap or more samples"
        )
    return fid_from_features(extract_features(set_a, tap), extract_features(set_b, tap))


def write_metrics_report(path, payload: dict) -> Path:
    """Persist a metrics report as pretty JSON."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=1, sort_keys=True))
    return path
