"""Procedural KSDD2-like corpus: textured surfaces with injectable defects.

Negatives are smooth textured plates (base level + bilinear-upsampled
Gaussian grain + low-frequency streaks). Positives add a scratch or spot
whose ground-truth mask comes analytically from the geometry (pixels
within thickness/2 of the curve, before edge softening), so masks carry
no thresholding ambiguity. Everything is a pure function of (spec, seed).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import BinaryMask, DatasetBundle, ImageGrid, LabeledSample, derive_rng, quantize8, resize_raster
from .exceptions import ValidationError

DEFECT_KINDS = ("scratch", "spot")

# split codes keep per-sample seed streams disjoint across corpus splits
_SPLIT_NEG_TRAIN = 0
_SPLIT_POS_TRAIN = 1
_SPLIT_TEST_POS = 2
_SPLIT_TEST_NEG = 3
_SPLIT_BANK = 7


@dataclass(frozen=True)
class TextureParams:
    """Appearance of the defect-free surface."""

    base_level: float = 0.5
    grain_amplitude: float = 0.12
    grain_scale: int = 4
    streak_amplitude: float = 0.04

    def __post_init__(self):
        if not 0.0 <= self.base_level <= 1.0:
            raise ValidationError(f"base_level must be in [0,1], got {self.base_level}")
        if not 0.0 <= self.grain_amplitude <= 0.5:
            raise ValidationError(f"grain_amplitude must be in [0,0.5], got {self.grain_amplitude}")
        if not 0.0 <= self.streak_amplitude <= 0.5:
            raise ValidationError(f"streak_amplitude must be in [0,0.5], got {self.streak_amplitude}")
        if self.grain_scale < 1:
            raise ValidationError(f"grain_scale must be >= 1, got {self.grain_scale}")


@dataclass(frozen=True)
class ScratchGeometry:
    """Open polyline with a stroke thickness, coordinates as (y, x)."""

    points: tuple[tuple[float, float], ...]
    thickness: float

    def __post_init__(self):
        object.__setattr__(self, "points", tuple((float(y), float(x)) for y, x in self.points))
        if len(self.points) < 2:
            raise ValidationError("scratch needs at least 2 points")
        if self.thickness < 0.5:
            raise ValidationError(f"thickness must be >= 0.5, got {self.thickness}")


@dataclass(frozen=True)
class SpotGeometry:
    """Rotated ellipse: center (y, x), semi-axes (a, b), angle in radians."""

    center: tuple[float, float]
    axes: tuple[float, float]
    angle: float = 0.0

    def __post_init__(self):
        a, b = self.axes
        if min(a, b) < 0.5:
            raise ValidationError(f"ellipse semi-axes must be >= 0.5, got {self.axes}")


@dataclass(frozen=True)
class DefectSpec:
    """One injectable defect: kind, geometry, signed contrast, edge softness."""

    kind: str
    geometry: ScratchGeometry | SpotGeometry
    contrast: float
    softness: float = 1.0

    def __post_init__(self):
        if self.kind not in DEFECT_KINDS:
            raise ValidationError(f"kind must be one of {DEFECT_KINDS}, got {self.kind!r}")
        if abs(self.contrast) < 0.1 or abs(self.contrast) > 1.0:
            raise ValidationError(
                f"|contrast| must be in [0.1, 1] so defects stay detectable, got {self.contrast}"
            )
        if self.softness < 0:
            raise ValidationError(f"softness must be >= 0, got {self.softness}")
        expected = ScratchGeometry if self.kind == "scratch" else SpotGeometry
        if not isinstance(self.geometry, expected):
            raise ValidationError(f"kind {self.kind!r} requires {expected.__name__}")


@dataclass(frozen=True)
class CorpusSpec:
    """Counts, defect mix, texture, and the root seed of a synthetic corpus.

    Default desk-scale counts keep the rare-positive shape of the
    full-scale dataset (train 246 pos / 2085 neg, test 110 / 894).
    """

    n_neg_train: int = 400
    n_pos_train: int = 48
    n_test_pos: int = 40
    n_test_neg: int = 160
    kind_mix: dict = field(default_factory=lambda: {"scratch": 0.5, "spot": 0.5})
    seed: int = 0
    size: tuple[int, int] = (64, 64)
    texture: TextureParams = field(default_factory=TextureParams)

    def __post_init__(self):
        for name in ("n_neg_train", "n_pos_train", "n_test_pos", "n_test_neg"):
            if getattr(self, name) < 0:
                raise ValidationError(f"{name} must be >= 0")
        if set(self.kind_mix) - set(DEFECT_KINDS):
            raise ValidationError(f"unknown defect kinds in mix: {sorted(self.kind_mix)}")
        total = sum(self.kind_mix.values())
        if abs(total - 1.0) > 1e-9:
            raise ValidationError(f"kind mix must sum to 1, got {total}")


def gen_negative(params: TextureParams, size: tuple[int, int], seed) -> ImageGrid:
    """Deterministic defect-free surface for (params, size, seed)."""
    h, w = int(size[0]), int(size[1])
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    img = np.full((h, w), params.base_level)
    if params.grain_amplitude > 0:
        gs = params.grain_scale
        coarse = rng.standard_normal((h // gs + 2, w // gs + 2))
        img = img + params.grain_amplitude * resize_raster(coarse, (h, w))
    if params.streak_amplitude > 0:
        freq = rng.uniform(1.0, 4.0)
        phase = rng.uniform(0.0, 2 * math.pi)
        horizontal = rng.random() < 0.5
        coord = np.arange(w) / w if horizontal else np.arange(h) / h
        streak = params.streak_amplitude * np.sin(2 * math.pi * freq * coord + phase)
        img = img + (streak[None, :] if horizontal else streak[:, None])
    return ImageGrid(np.clip(img, 0.0, 1.0))


def _scratch_distance(size, geom: ScratchGeometry) -> np.ndarray:
    h, w = size
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    dist = np.full((h, w), np.inf)
    pts = geom.points
    for (py, px), (qy, qx) in zip(pts[:-1], pts[1:]):
        dy, dx = qy - py, qx - px
        seg2 = dy * dy + dx * dx
        if seg2 == 0:
            d = np.hypot(yy - py, xx - px)
        else:
            t = np.clip(((yy - py) * dy + (xx - px) * dx) / seg2, 0.0, 1.0)
            d = np.hypot(yy - (py + t * dy), xx - (px + t * dx))
        dist = np.minimum(dist, d)
    return dist


def _spot_signed_distance(size, geom: SpotGeometry) -> np.ndarray:
    # signed distance approximated as (normalized radius - 1) * min axis
    h, w = size
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    cy, cx = geom.center
    a, b = geom.axes
    c, s = math.cos(geom.angle), math.sin(geom.angle)
    u = (yy - cy) * c + (xx - cx) * s
    v = -(yy - cy) * s + (xx - cx) * c
    rho = np.sqrt((u / a) ** 2 + (v / b) ** 2)
    return (rho - 1.0) * min(a, b)


def _geometry_bounds_ok(defect: DefectSpec, size) -> bool:
    h, w = size
    if defect.kind == "scratch":
        return all(0 <= y <= h - 1 and 0 <= x <= w - 1 for y, x in defect.geometry.points)
    cy, cx = defect.geometry.center
    r = max(defect.geometry.axes)
    return r <= cy <= h - 1 - r and r <= cx <= w - 1 - r


def gen_positive(
    params: TextureParams, defect: DefectSpec, size: tuple[int, int], seed
) -> tuple[ImageGrid, BinaryMask]:
    """Surface with one injected defect and its analytic ground-truth mask.

    The image differs from gen_negative(params, size, seed) only where
    the softness halo reaches; the mask is the pre-blur core.
    """
    h, w = int(size[0]), int(size[1])
    if not _geometry_bounds_ok(defect, (h, w)):
        raise ValidationError(f"defect geometry out of bounds for {h}x{w}")
    base = gen_negative(params, (h, w), seed)
    if defect.kind == "scratch":
        signed = _scratch_distance((h, w), defect.geometry) - defect.geometry.thickness / 2.0
    else:
        signed = _spot_signed_distance((h, w), defect.geometry)
    mask = (signed <= 0.0).astype(np.uint8)
    if mask.sum() == 0:
        raise ValidationError("defect mask came out empty; geometry too small for the grid")
    if defect.softness > 0:
        falloff = np.clip(1.0 - signed / defect.softness, 0.0, 1.0)
        falloff[signed <= 0.0] = 1.0
    else:
        falloff = (signed <= 0.0).astype(np.float64)
    contrast = defect.contrast
    mean_in = float(base.plane()[mask == 1].mean())
    # flip the sign when the stroke would saturate against [0,1]
    if not 0.03 <= mean_in + contrast <= 0.97 and 0.03 <= mean_in - contrast <= 0.97:
        contrast = -contrast
    img = np.clip(base.plane() + contrast * falloff, 0.0, 1.0)
    return ImageGrid(img), BinaryMask(mask)


def sample_defect_spec(
    kind: str, size: tuple[int, int], rng: np.random.Generator, gain: float = 1.0
) -> DefectSpec:
    """Random in-bounds defect of the given kind.

    gain=1 is corpus difficulty. gain>1 fattens strokes and raises the
    contrast floor; the draw order is identical so the same rng stream
    yields the same geometry family at any gain.
    """
    h, w = int(size[0]), int(size[1])
    margin = 6
    c_lo, c_hi = min(0.16 * gain, 0.30), min(0.38 * gain, 0.45)
    contrast = rng.uniform(c_lo, c_hi) * rng.choice((-1.0, 1.0))
    softness = rng.uniform(0.6, 1.5)
    if kind == "scratch":
        n_pts = int(rng.integers(2, 4))
        pts = [(rng.uniform(margin, h - 1 - margin), rng.uniform(margin, w - 1 - margin))]
        # walk across the plate so scratches are elongated, not crumpled
        heading = rng.uniform(0, 2 * math.pi)
        for _ in range(n_pts - 1):
            step = rng.uniform(0.35, 0.7) * min(h, w)
            heading += rng.uniform(-0.5, 0.5)
            y = float(np.clip(pts[-1][0] + step * math.sin(heading), 1.0, h - 2.0))
            x = float(np.clip(pts[-1][1] + step * math.cos(heading), 1.0, w - 2.0))
            pts.append((y, x))
        thickness = min(float(rng.uniform(1.2, 2.6)) * gain, min(h, w) / 6.0)
        geom = ScratchGeometry(points=tuple(pts), thickness=thickness)
        return DefectSpec(kind="scratch", geometry=geom, contrast=contrast, softness=softness)
    # cap so the placement interval below stays non-empty on small grids
    cap = (min(h, w) - 3) / 2.0 - 1.0
    axes = (
        min(float(rng.uniform(2.0, 5.0)) * gain, cap),
        min(float(rng.uniform(1.5, 4.0)) * gain, cap),
    )
    r = max(axes) + 1
    center = (float(rng.uniform(r, h - 1 - r)), float(rng.uniform(r, w - 1 - r)))
    geom = SpotGeometry(center=center, axes=axes, angle=float(rng.uniform(0, math.pi)))
    return DefectSpec(kind="spot", geometry=geom, contrast=contrast, softness=softness)


def _draw_kind(mix: dict, rng: np.random.Generator) -> str:
    kinds = sorted(mix)
    probs = np.array([mix[k] for k in kinds])
    return str(rng.choice(kinds, p=probs / probs.sum()))


def _positive_sample(spec: CorpusSpec, split_code: int, i: int, sid: str) -> LabeledSample:
    rng = derive_rng(spec.seed, split_code, i)
    kind = _draw_kind(spec.kind_mix, rng)
    defect = sample_defect_spec(kind, spec.size, rng)
    img, mask = gen_positive(spec.texture, defect, spec.size, rng)
    return LabeledSample(image=quantize8(img), label=1, origin="real", mask=mask, sample_id=sid)


def _negative_sample(spec: CorpusSpec, split_code: int, i: int, sid: str) -> LabeledSample:
    rng = derive_rng(spec.seed, split_code, i)
    img = gen_negative(spec.texture, spec.size, rng)
    return LabeledSample(image=quantize8(img), label=0, origin="real", sample_id=sid)


def build_corpus(spec: CorpusSpec) -> DatasetBundle:
    """Materialize the full synthetic corpus for a CorpusSpec.

    Per-sample seed streams are derived from (seed, split, index), so
    corpora are bit-identical across runs and embarrassingly parallel.
    Images are quantized to the 8-bit grid so a manifest round trip is
    lossless.
    """
    return DatasetBundle(
        negatives_train=[
            _negative_sample(spec, _SPLIT_NEG_TRAIN, i, f"neg-train-{i:05d}")
            for i in range(spec.n_neg_train)
        ],
        positives_train=[
            _positive_sample(spec, _SPLIT_POS_TRAIN, i, f"pos-train-{i:05d}")
            for i in range(spec.n_pos_train)
        ],
        test_pos=[
            _positive_sample(spec, _SPLIT_TEST_POS, i, f"test-pos-{i:05d}")
            for i in range(spec.n_test_pos)
        ],
        test_neg=[
            _negative_sample(spec, _SPLIT_TEST_NEG, i, f"test-neg-{i:05d}")
            for i in range(spec.n_test_neg)
        ],
    )


def synthesize_defect_bank(
    n: int,
    size: tuple[int, int],
    seed: int,
    texture: TextureParams | None = None,
    kind_mix=None,
    gain: float = 1.0,
    n_clean: int = 0,
) -> list[tuple[ImageGrid, BinaryMask, str]]:
    """Standalone (image, mask, kind) triples from the defect sampler.

    This is the corpus-independent positive source: it feeds zero-shot
    diffusion pretraining and the synthetic mask library without ever
    touching corpus positives. For pretraining, gain>1 exaggerates the
    defects (a pixel-MSE denoiser ignores a token worth ~1% of the
    loss otherwise) and n_clean appends defect-free entries under the
    null token, so the unconditional branch means "no defect" rather
    than "any bank image" and guidance has a direction to amplify.
    """
    texture = texture or TextureParams()
    mix = kind_mix or {"scratch": 0.5, "spot": 0.5}
    out = []
    for i in range(n):
        rng = derive_rng(seed, _SPLIT_BANK, i)
        kind = _draw_kind(mix, rng)
        defect = sample_defect_spec(kind, size, rng, gain=gain)
        img, mask = gen_positive(texture, defect, size, rng)
        out.append((quantize8(img), mask, kind))
    empty = BinaryMask(np.zeros((int(size[0]), int(size[1])), dtype=np.uint8))
    for i in range(n_clean):
        rng = derive_rng(seed, _SPLIT_BANK, n + i)
        img = gen_negative(texture, size, rng)
        out.append((quantize8(img), empty, "null"))
    return out
