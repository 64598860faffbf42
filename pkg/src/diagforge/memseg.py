"""Out-of-distribution augmentation baseline: Perlin ROI + superimposition.

Three steps: (i) threshold hash-gradient Perlin noise against a target
foreground to get an ROI, (ii) take the Perlin field rescaled to [0,1]
as the injected texture, (iii) alpha-blend it over the negative inside
the ROI. Gradients are hashed from absolute lattice coordinates, so a
sub-window of a field equals the same window of a larger field.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import BinaryMask, ImageGrid, LabeledSample, derive_rng
from .exceptions import DimensionError, ValidationError

_MAX_TRIES = 100
AREA_BOUNDS = (0.005, 0.15)

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_PRIME_Y = np.uint64(0x8DA6B34361CC7841)
_PRIME_X = np.uint64(0xD8163841FDE6A851)

# single-octave Perlin peaks at sqrt(2)/2 in 2-D
_OCTAVE_RANGE = np.sqrt(2.0) / 2.0


@dataclass(frozen=True)
class PerlinParams:
    """Gradient-lattice noise parameters."""

    lattice_period: int = 8
    octaves: int = 2
    persistence: float = 0.5

    def __post_init__(self):
        p = self.lattice_period
        if p < 1 or (p & (p - 1)) != 0:
            raise ValidationError(f"lattice_period must be a power of two, got {p}")
        if self.octaves < 1:
            raise ValidationError(f"octaves must be >= 1, got {self.octaves}")
        if p >> (self.octaves - 1) < 1:
            raise ValidationError(
                f"octave {self.octaves} needs period {p} / 2^{self.octaves - 1} >= 1"
            )
        if not 0.0 < self.persistence <= 1.0:
            raise ValidationError(f"persistence must be in (0,1], got {self.persistence}")


@dataclass(frozen=True)
class ROI:
    """Defect placement region with its area bookkeeping."""

    mask: BinaryMask
    area_fraction: float

    def __post_init__(self):
        expected = self.mask.area_fraction()
        if abs(self.area_fraction - expected) > 1e-12:
            raise ValidationError(
                f"area_fraction {self.area_fraction} does not match mask ({expected})"
            )


def _splitmix(z: np.ndarray) -> np.ndarray:
    # wrapping uint64 arithmetic is the point; silence the overflow warning
    with np.errstate(over="ignore"):
        z = (z + _GOLDEN).astype(np.uint64)
        z ^= z >> np.uint64(30)
        z *= _MIX1
        z ^= z >> np.uint64(27)
        z *= _MIX2
        z ^= z >> np.uint64(31)
    return z


def lattice_gradient(seed: int, octave: int, iy, ix) -> tuple[np.ndarray, np.ndarray]:
    """Unit gradient at an absolute lattice node; pure hash of inputs."""
    iy = np.asarray(iy, dtype=np.uint64)
    ix = np.asarray(ix, dtype=np.uint64)
    with np.errstate(over="ignore"):
        base = _splitmix(np.uint64(seed) * _GOLDEN + np.uint64(octave))
        h = _splitmix(iy * _PRIME_Y ^ ix * _PRIME_X ^ base)
    angle = h.astype(np.float64) / 2.0**64 * 2.0 * np.pi
    return np.cos(angle), np.sin(angle)


def _fade(t: np.ndarray) -> np.ndarray:
    return t * t * t * (t * (t * 6.0 - 15.0) + 10.0)


def _octave_field(size, period: int, seed: int, octave: int, origin) -> np.ndarray:
    h, w = size
    oy, ox = origin
    yy = (np.arange(h, dtype=np.float64) + oy) / period
    xx = (np.arange(w, dtype=np.float64) + ox) / period
    y0 = np.floor(yy).astype(np.int64)
    x0 = np.floor(xx).astype(np.int64)
    fy = (yy - y0)[:, None]
    fx = (xx - x0)[None, :]
    grads = {}
    for dy in (0, 1):
        for dx in (0, 1):
            gy, gx = np.meshgrid(y0 + dy, x0 + dx, indexing="ij")
            grads[(dy, dx)] = lattice_gradient(seed, octave, gy, gx)
    def dot(dy, dx):
        cy, cx = grads[(dy, dx)]
        return cy * (fy - dy) + cx * (fx - dx)
    uy, ux = _fade(fy), _fade(fx)
    top = dot(0, 0) * (1 - ux) + dot(0, 1) * ux
    bot = dot(1, 0) * (1 - ux) + dot(1, 1) * ux
    return top * (1 - uy) + bot * uy


def perlin_noise(size, params: PerlinParams, seed: int, origin=(0, 0)) -> np.ndarray:
    """Multi-octave Perlin field in [-1,1] at absolute pixel coordinates."""
    h, w = int(size[0]), int(size[1])
    total = np.zeros((h, w))
    norm = 0.0
    for o in range(params.octaves):
        period = params.lattice_period >> o
        amp = params.persistence**o
        total += amp * _octave_field((h, w), period, int(seed), o, origin)
        norm += amp * _OCTAVE_RANGE
    return total / norm


def make_roi(noise: np.ndarray, threshold: float, foreground: BinaryMask) -> ROI:
    """ROI = (noise > threshold) AND foreground."""
    noise = np.asarray(noise, dtype=np.float64)
    if noise.shape != foreground.shape:
        raise DimensionError(
            f"noise {noise.shape} and foreground {foreground.shape} differ in size"
        )
    mask = BinaryMask(((noise > threshold) & (foreground.data == 1)).astype(np.uint8))
    return ROI(mask=mask, area_fraction=mask.area_fraction())


def superimpose(i_n: ImageGrid, roi: ROI, noise_img: ImageGrid, opacity: float) -> LabeledSample:
    """Blend the noise texture over the negative inside the ROI."""
    if not 0.0 <= opacity <= 1.0:
        raise ValidationError(f"opacity must be in [0,1], got {opacity}")
    if i_n.shape != roi.mask.shape or i_n.shape != noise_img.shape:
        raise DimensionError(
            f"sizes differ: image {i_n.shape}, roi {roi.mask.shape}, noise {noise_img.shape}"
        )
    m = roi.mask.data.astype(np.float64)
    blend = (1.0 - opacity) * i_n.plane() + opacity * noise_img.plane()
    out = np.where(m == 1.0, blend, i_n.plane())
    return LabeledSample(image=ImageGrid(out), label=1, origin="baseline", mask=roi.mask)


def generate_baseline_set(
    negatives,
    params: PerlinParams,
    n_aug: int,
    seed: int,
    opacity: float = 0.75,
    foreground: BinaryMask | None = None,
) -> list[LabeledSample]:
    """n_aug baseline positives with ROI areas inside AREA_BOUNDS.

    The acceptance threshold is redrawn until the area lands in bounds;
    100 consecutive misses raise a parameter error. Deterministic per
    (negatives, params, n_aug, seed).
    """
    negatives = list(negatives)
    if n_aug < 0:
        raise ValidationError(f"n_aug must be >= 0, got {n_aug}")
    if n_aug > 0 and not negatives:
        raise ValidationError("need at least one negative image")
    out = []
    lo, hi = AREA_BOUNDS
    for i in range(n_aug):
        rng = derive_rng(seed, i)
        neg = negatives[int(rng.integers(len(negatives)))]
        img = neg.image if isinstance(neg, LabeledSample) else neg
        fg = foreground or BinaryMask(np.ones(img.shape, dtype=np.uint8))
        field = perlin_noise(img.shape, params, seed=int(rng.integers(2**63)))
        noise_img = ImageGrid(np.clip((field + 1.0) / 2.0, 0.0, 1.0))
        roi = None
        for _ in range(_MAX_TRIES):
            candidate = make_roi(field, float(rng.uniform(0.1, 0.9)), fg)
            if lo <= candidate.area_fraction <= hi:
                roi = candidate
                break
        if roi is None:
            raise ValidationError(
                f"no ROI with area in [{lo}, {hi}] after {_MAX_TRIES} thresholds; "
                "adjust PerlinParams"
            )
        sample = superimpose(img, roi, noise_img, opacity)
        out.append(
            LabeledSample(
                image=sample.image, label=1, origin="baseline", mask=sample.mask,
                sample_id=f"baseline-{seed}-{i:05d}",
            )
        )
    return out
