"""Shared domain types and raster utilities.

Pixel values live in [0,1] as float64; 8-bit files map v/255 on load and
round(v*255) on save. Grayscale is the default working space; 3-channel
inputs can be averaged down on load. All types are immutable after
construction and safe to share across workers.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from .exceptions import DimensionError, ValidationError

MIN_SIDE = 8
MAX_SIDE = 4096

_ORIGINS = ("real", "generated", "baseline")


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ImageGrid:
    """H x W x C raster with values in [0,1].

    data is stored as float64 with shape (H, W, C), C in {1, 3}.
    A 2-D array is accepted and treated as single-channel.
    """

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.ndim != 3:
            raise DimensionError(f"image data must be 2-D or 3-D, got ndim={arr.ndim}")
        h, w, c = arr.shape
        if c not in (1, 3):
            raise ValidationError(f"channels must be 1 or 3, got {c}")
        if h < MIN_SIDE or w < MIN_SIDE:
            raise DimensionError(f"image sides must be >= {MIN_SIDE}, got {h}x{w}")
        if h > MAX_SIDE or w > MAX_SIDE:
            raise DimensionError(f"image sides must be <= {MAX_SIDE}, got {h}x{w}")
        if not np.isfinite(arr).all():
            raise ValidationError("image contains non-finite values")
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise ValidationError(
                f"image values must lie in [0,1], got range "
                f"[{arr.min():.6g}, {arr.max():.6g}]"
            )
        object.__setattr__(self, "data", _freeze(arr))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    def plane(self) -> np.ndarray:
        """Single-channel view of shape (H, W); averages 3 channels."""
        if self.channels == 1:
            return self.data[:, :, 0]
        return self.data.mean(axis=2)

    def __eq__(self, other) -> bool:
        if not isinstance(other, ImageGrid):
            return NotImplemented
        return self.data.shape == other.data.shape and np.array_equal(
            self.data, other.data
        )

    def __hash__(self):
        return hash((self.data.shape, self.data.tobytes()))


@dataclass(frozen=True, eq=False)
class BinaryMask:
    """H x W raster with values exactly 0 or 1 (stored as uint8)."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim != 2:
            raise DimensionError(f"mask must be 2-D, got ndim={arr.ndim}")
        vals = np.unique(arr)
        if not np.all(np.isin(vals, (0, 1))):
            raise ValidationError(f"mask values must be exactly 0 or 1, got {vals[:8]}")
        object.__setattr__(self, "data", _freeze(arr.astype(np.uint8)))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def count(self) -> int:
        return int(self.data.sum())

    def is_empty(self) -> bool:
        return self.count() == 0

    def area_fraction(self) -> float:
        return self.count() / (self.height * self.width)

    def __eq__(self, other) -> bool:
        if not isinstance(other, BinaryMask):
            return NotImplemented
        return self.data.shape == other.data.shape and np.array_equal(
            self.data, other.data
        )

    def __hash__(self):
        return hash((self.data.shape, self.data.tobytes()))


@dataclass(frozen=True)
class LabeledSample:
    """Image with a binary defect label and provenance.

    origin 'real' covers both corpus classes; 'generated' and 'baseline'
    samples must carry the mask that produced them.
    """

    image: ImageGrid
    label: int
    origin: str = "real"
    mask: BinaryMask | None = None
    sample_id: str = ""

    def __post_init__(self):
        if self.label not in (0, 1):
            raise ValidationError(f"label must be 0 or 1, got {self.label!r}")
        if self.origin not in _ORIGINS:
            raise ValidationError(f"origin must be one of {_ORIGINS}, got {self.origin!r}")
        if self.origin in ("generated", "baseline") and self.mask is None:
            raise ValidationError(f"origin {self.origin!r} requires a mask")
        if self.mask is not None:
            validate_pair(self.image, self.mask)


@dataclass(frozen=True)
class DatasetBundle:
    """Train/test splits: negatives I_n, positives I_p, augmented I_a."""

    negatives_train: tuple[LabeledSample, ...] = ()
    positives_train: tuple[LabeledSample, ...] = ()
    augmented: tuple[LabeledSample, ...] = ()
    test_pos: tuple[LabeledSample, ...] = ()
    test_neg: tuple[LabeledSample, ...] = ()

    def __post_init__(self):
        for name in ("negatives_train", "positives_train", "augmented", "test_pos", "test_neg"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        for s in self.negatives_train + self.test_neg:
            if s.label != 0:
                raise ValidationError(f"negative sample {s.sample_id!r} has label {s.label}")
        for s in self.positives_train + self.augmented + self.test_pos:
            if s.label != 1:
                raise ValidationError(f"positive sample {s.sample_id!r} has label {s.label}")
        train_ids = {s.sample_id for s in self.train_samples()}
        test_ids = {s.sample_id for s in self.test_samples()}
        overlap = train_ids & test_ids
        if overlap:
            raise ValidationError(f"train/test splits share ids: {sorted(overlap)[:5]}")

    def train_samples(self) -> tuple[LabeledSample, ...]:
        return self.negatives_train + self.positives_train + self.augmented

    def test_samples(self) -> tuple[LabeledSample, ...]:
        return self.test_pos + self.test_neg

    def counts(self) -> dict[str, int]:
        return {
            "negatives_train": len(self.negatives_train),
            "positives_train": len(self.positives_train),
            "augmented": len(self.augmented),
            "test_pos": len(self.test_pos),
            "test_neg": len(self.test_neg),
        }

    def with_augmented(self, augmented) -> "DatasetBundle":
        return dataclasses.replace(self, augmented=tuple(augmented))


@dataclass(frozen=True)
class RunConfig:
    """Run-level plumbing: seed, working resolution, roots."""

    seed: int = 0
    target_resolution: tuple[int, int] = (64, 64)
    dataset_root: str = ""
    output_root: str = ""
    scenario: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.seed < 0:
            raise ValidationError(f"seed must be >= 0, got {self.seed}")
        h, w = self.target_resolution
        if not (MIN_SIDE <= h <= MAX_SIDE and MIN_SIDE <= w <= MAX_SIDE):
            raise DimensionError(
                f"target resolution {h}x{w} outside supported range "
                f"[{MIN_SIDE}, {MAX_SIDE}]"
            )


def validate_pair(img: ImageGrid, mask: BinaryMask) -> None:
    """Check that an image/mask pair is dimensionally consistent.

    Mask binarity is enforced by the BinaryMask type itself; raw arrays
    are accepted here and checked so callers can pre-validate payloads.
    """
    if not isinstance(mask, BinaryMask):
        mask = BinaryMask(np.asarray(mask))
    if not isinstance(img, ImageGrid):
        img = ImageGrid(np.asarray(img))
    if (img.height, img.width) != mask.shape:
        raise DimensionError(
            f"image is {img.height}x{img.width} but mask is "
            f"{mask.shape[0]}x{mask.shape[1]}"
        )


def resize_raster(arr: np.ndarray, target: tuple[int, int]) -> np.ndarray:
    """Bilinear resize of a raw 2-D array, no minimum-size rule.

    Returns float64. Identity when the target equals the input shape, so
    resizing at a fixed size is exactly idempotent.
    """
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionError(f"resize_raster expects 2-D, got ndim={arr.ndim}")
    th, tw = int(target[0]), int(target[1])
    if th <= 0 or tw <= 0:
        raise DimensionError(f"target dims must be positive, got {th}x{tw}")
    if (th, tw) == arr.shape:
        return arr.copy()
    im = Image.fromarray(arr.astype(np.float32), mode="F")
    out = im.resize((tw, th), resample=Image.Resampling.BILINEAR)
    return np.asarray(out, dtype=np.float64)


def resize_image(img: ImageGrid, target: tuple[int, int]) -> ImageGrid:
    """Bilinear resize preserving ImageGrid invariants (sides >= 8)."""
    th, tw = int(target[0]), int(target[1])
    if th < MIN_SIDE or tw < MIN_SIDE:
        raise DimensionError(f"target sides must be >= {MIN_SIDE}, got {th}x{tw}")
    if (th, tw) == img.shape:
        return img
    planes = [resize_raster(img.data[:, :, c], (th, tw)) for c in range(img.channels)]
    stacked = np.clip(np.stack(planes, axis=2), 0.0, 1.0)
    return ImageGrid(stacked)


def resize_mask(mask: BinaryMask, target: tuple[int, int]) -> BinaryMask:
    """Nearest-neighbor mask resize, re-binarized at 0.5."""
    th, tw = int(target[0]), int(target[1])
    if th <= 0 or tw <= 0:
        raise DimensionError(f"target dims must be positive, got {th}x{tw}")
    if (th, tw) == mask.shape:
        return mask
    im = Image.fromarray(mask.data * np.uint8(255), mode="L")
    out = im.resize((tw, th), resample=Image.Resampling.NEAREST)
    return BinaryMask((np.asarray(out, dtype=np.float64) / 255.0 >= 0.5).astype(np.uint8))


def quantize8(img: ImageGrid) -> ImageGrid:
    """Snap values to the 8-bit grid: round(v*255)/255."""
    return ImageGrid(np.round(img.data * 255.0) / 255.0)


def to_internal(img: ImageGrid | np.ndarray) -> np.ndarray:
    """Map [0,1] pixels to the [-1,1] diffusion working range."""
    arr = img.plane() if isinstance(img, ImageGrid) else np.asarray(img, dtype=np.float64)
    return 2.0 * arr - 1.0


def from_internal(x: np.ndarray) -> np.ndarray:
    """Map [-1,1] diffusion values back to clamped [0,1] pixels."""
    return np.clip((np.asarray(x, dtype=np.float64) + 1.0) / 2.0, 0.0, 1.0)


def save_png(img: ImageGrid, path) -> None:
    """Write an 8-bit PNG (round(v*255)); grayscale for 1 channel."""
    arr = np.round(img.data * 255.0).astype(np.uint8)
    if img.channels == 1:
        Image.fromarray(arr[:, :, 0], mode="L").save(path, format="PNG")
    else:
        Image.fromarray(arr, mode="RGB").save(path, format="PNG")


def load_png(path, channels: int | None = None) -> ImageGrid:
    """Read a PNG as ImageGrid (v/255).

    channels=1 averages color inputs down to grayscale; channels=None
    keeps the file's own channel count (palette/alpha converted to RGB).
    """
    with Image.open(path) as im:
        if im.mode == "L":
            arr = np.asarray(im, dtype=np.float64)[:, :, None] / 255.0
        else:
            arr = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
    if channels == 1 and arr.shape[2] == 3:
        arr = arr.mean(axis=2, keepdims=True)
    elif channels == 3 and arr.shape[2] == 1:
        arr = np.repeat(arr, 3, axis=2)
    return ImageGrid(arr)


def save_mask_png(mask: BinaryMask, path) -> None:
    Image.fromarray(mask.data * np.uint8(255), mode="L").save(path, format="PNG")


def load_mask_png(path) -> BinaryMask:
    with Image.open(path) as im:
        arr = np.asarray(im.convert("L"), dtype=np.float64) / 255.0
    return BinaryMask((arr >= 0.5).astype(np.uint8))


def derive_rng(root_seed: int, *indices: int) -> np.random.Generator:
    """Per-sample RNG stream: stable under prefix extension of a batch."""
    return np.random.default_rng(np.random.SeedSequence([int(root_seed), *map(int, indices)]))


def derive_torch_seed(root_seed: int, *indices: int) -> int:
    """63-bit seed for torch.Generator derived from the same stream family."""
    ss = np.random.SeedSequence([int(root_seed), *map(int, indices)])
    return int(ss.generate_state(1, np.uint64)[0] & np.uint64(0x7FFF_FFFF_FFFF_FFFF))
