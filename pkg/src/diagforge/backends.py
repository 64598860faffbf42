"""Generation strategies producing the augmented positive set I_a.

Three backends share one batch interface: local mask-guided inpainting,
local unconditional sampling (full-image mask, no localization claim),
and a remote inpainting service client. Triplets (negative, prompt,
mask) are drawn uniformly and independently per sample from derived
seed streams, and generation runs in fixed absolute-index chunks, so
the first k samples of a run never depend on how many follow.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np
import torch

from .core import (
    BinaryMask,
    ImageGrid,
    LabeledSample,
    derive_rng,
    derive_torch_seed,
    resize_mask,
    to_internal,
    from_internal,
    validate_pair,
)
from .diffusion import (
    NULL_INDEX,
    SAMPLE_CHUNK,
    ConditionToken,
    DenoisingDiffusion,
    inpaint_latent,
    sample_latent,
    token_index,
)
from .exceptions import BackendError, ConfigurationError, GenerationError, ValidationError
from .wire import decode_image_b64, encode_image_b64, encode_mask_b64

ENDPOINT_ENV = "DIAGFORGE_REMOTE_ENDPOINT"
STRATEGIES = ("diag_inpaint", "unconditional_diffusion", "remote_inpaint")

# full-scale prompt texts and their local condition tokens
PROMPT_TOKEN_REGISTRY = {
    "white marks on the wall": "spot",
    "copper metal scratches": "scratch",
}
DEFAULT_NEGATIVE_TEXT = "smooth, plain, black, dark, shadow"

_RETRIES_PER_SAMPLE = 2


def map_prompt_to_token(text: str) -> ConditionToken:
    """Registry lookup with a keyword fallback for unregistered texts."""
    key = text.strip().lower()
    if key in PROMPT_TOKEN_REGISTRY:
        return ConditionToken(PROMPT_TOKEN_REGISTRY[key])
    if "scratch" in key:
        return ConditionToken("scratch")
    if "spot" in key or "mark" in key:
        return ConditionToken("spot")
    raise ConfigurationError(
        f"cannot map prompt {text!r} to a condition token; register it or mention scratch/spot/mark"
    )


@dataclass(frozen=True)
class PromptSpec:
    """Positive/negative text pair plus guidance scale.

    local_token is the discrete token the local backend conditions on;
    it is derived from positive_text when not given.
    """

    positive_text: str
    negative_text: str = DEFAULT_NEGATIVE_TEXT
    guidance_scale: float = 80.0
    local_token: ConditionToken | None = None

    def __post_init__(self):
        if not self.positive_text.strip():
            raise ValidationError("positive_text must be non-empty")
        if not np.isfinite(self.guidance_scale) or self.guidance_scale < 0:
            raise ValidationError(f"guidance_scale must be finite and >= 0, got {self.guidance_scale}")
        if self.local_token is None:
            object.__setattr__(self, "local_token", map_prompt_to_token(self.positive_text))


def default_prompts() -> list[PromptSpec]:
    return [PromptSpec(positive_text=text) for text in PROMPT_TOKEN_REGISTRY]


@dataclass(frozen=True)
class MaskLibrary:
    """Pool of candidate defect-region masks.

    kinds optionally tags each mask with a defect family so paired
    prompt/mask sampling can match them up.
    """

    masks: tuple[BinaryMask, ...]
    provenance: str = "synthetic"
    kinds: tuple[str, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "masks", tuple(self.masks))
        if self.provenance not in ("expert_drawn", "ground_truth", "synthetic"):
            raise ValidationError(f"unknown provenance {self.provenance!r}")
        for i, m in enumerate(self.masks):
            if m.is_empty():
                raise ValidationError(f"mask {i} in the library is empty")
        if self.kinds is not None:
            object.__setattr__(self, "kinds", tuple(self.kinds))
            if len(self.kinds) != len(self.masks):
                raise ValidationError("kinds must align one-to-one with masks")


@dataclass(frozen=True)
class GenerationTriplet:
    """One generation request: negative image, prompt, region mask."""

    negative: ImageGrid
    prompt: PromptSpec
    mask: BinaryMask

    def __post_init__(self):
        validate_pair(self.negative, self.mask)


@dataclass(frozen=True)
class BackendDescriptor:
    """Declarative backend selection for configs and the CLI."""

    strategy: str
    endpoint: str | None = None
    checkpoint: str | None = None
    sampler: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ConfigurationError(f"strategy must be one of {STRATEGIES}, got {self.strategy!r}")
        if self.strategy == "remote_inpaint" and not (self.endpoint or os.environ.get(ENDPOINT_ENV)):
            raise ConfigurationError(
                f"remote_inpaint needs an endpoint (flag or {ENDPOINT_ENV})"
            )
        if self.strategy != "remote_inpaint" and not self.checkpoint:
            raise ConfigurationError(f"{self.strategy} needs a checkpoint path")


def sample_triplet(negatives, prompts, library: MaskLibrary, rng, paired: bool = False) -> GenerationTriplet:
    """Uniform independent draws from the three pools.

    A mask whose size differs from the negative is resized with
    nearest-neighbor and re-binarized. paired=True restricts the mask
    draw to the prompt's defect family when the library tags kinds.
    """
    negatives = list(negatives)
    prompts = list(prompts)
    if not negatives:
        raise ConfigurationError("negative pool empty")
    if not prompts:
        raise ConfigurationError("prompt pool empty")
    if not library.masks:
        raise ConfigurationError("mask library empty")
    neg = negatives[int(rng.integers(len(negatives)))]
    img = neg.image if isinstance(neg, LabeledSample) else neg
    prompt = prompts[int(rng.integers(len(prompts)))]
    mask_pool = list(library.masks)
    if paired and library.kinds is not None:
        matching = [m for m, k in zip(library.masks, library.kinds) if k == prompt.local_token.kind]
        if matching:
            mask_pool = matching
    mask = mask_pool[int(rng.integers(len(mask_pool)))]
    if mask.shape != img.shape:
        mask = resize_mask(mask, img.shape)
        if mask.is_empty():
            raise ConfigurationError("library mask became empty after resizing to the negative")
    return GenerationTriplet(negative=img, prompt=prompt, mask=mask)


class DiagInpaintBackend:
    """Mask-guided inpainting with the local diffusion model."""

    strategy = "diag_inpaint"

    def __init__(self, estimator: DenoisingDiffusion, clip_x0: bool = True):
        self.estimator = estimator
        self.clip_x0 = clip_x0

    def signature(self) -> dict:
        return {
            "strategy": self.strategy,
            "model": self.estimator.model_.signature(),
            "weights": self.estimator.weights_fingerprint(),
            "T": self.estimator.schedule_.T,
            "params": self.estimator.get_params(),
        }

    def generate_batch(self, triplets, generators, base_index: int = 0) -> list[ImageGrid]:
        est = self.estimator
        dt = torch.float64 if est.dtype == "float64" else torch.float32
        known = torch.as_tensor(
            np.stack([to_internal(t.negative) for t in triplets])[:, None], dtype=dt
        )
        masks = torch.as_tensor(
            np.stack([t.mask.data for t in triplets])[:, None].astype(np.float64), dtype=dt
        )
        cond = torch.as_tensor([t.prompt.local_token.index for t in triplets], dtype=torch.long)
        scales = torch.as_tensor([t.prompt.guidance_scale for t in triplets], dtype=dt)
        x = inpaint_latent(
            est.model_, est.schedule_, known, masks,
            cond=cond, neg=NULL_INDEX, guidance_scale=scales,
            generators=generators, clip_x0=self.clip_x0, dtype=est.dtype,
        )
        out = []
        for i, t in enumerate(triplets):
            gen = from_internal(x[i, 0].numpy())
            m = t.mask.data.astype(np.float64)
            out.append(ImageGrid(m * gen + (1.0 - m) * t.negative.plane()))
        return out

    def sample_mask(self, triplet: GenerationTriplet) -> BinaryMask:
        return triplet.mask


class UnconditionalDiffusionBackend:
    """Full-image unconditional sampling; every sample carries an
    all-ones mask because nothing is localized."""

    strategy = "unconditional_diffusion"

    def __init__(self, estimator: DenoisingDiffusion):
        self.estimator = estimator

    def signature(self) -> dict:
        return {
            "strategy": self.strategy,
            "model": self.estimator.model_.signature(),
            "weights": self.estimator.weights_fingerprint(),
            "T": self.estimator.schedule_.T,
            "params": self.estimator.get_params(),
        }

    def generate_batch(self, triplets, generators, base_index: int = 0) -> list[ImageGrid]:
        est = self.estimator
        size = triplets[0].negative.shape
        x = sample_latent(
            est.model_, est.schedule_, len(triplets), size,
            cond=NULL_INDEX, neg=NULL_INDEX, guidance_scale=1.0,
            generators=generators, dtype=est.dtype,
        )
        return [ImageGrid(from_internal(x[i, 0].numpy())) for i in range(len(triplets))]

    def sample_mask(self, triplet: GenerationTriplet) -> BinaryMask:
        return BinaryMask(np.ones(triplet.negative.shape, dtype=np.uint8))


def remote_inpaint(request: dict, endpoint: str | None = None, timeout: float = 60.0) -> dict:
    """POST one inpainting request to a remote service.

    The response image is re-composited client-side: outside-mask pixels
    are overwritten from the source, so the blend contract holds no
    matter what the server returned.
    """
    import requests as _requests

    endpoint = endpoint or os.environ.get(ENDPOINT_ENV)
    if not endpoint:
        raise ConfigurationError(f"no remote endpoint configured ({ENDPOINT_ENV})")
    for key in ("image", "mask", "positive_text", "negative_text", "guidance_scale", "steps", "seed"):
        if key not in request:
            raise ValidationError(f"remote request missing field {key!r}")
    src = decode_image_b64(request["image"])
    try:
        resp = _requests.post(endpoint, json=request, timeout=timeout)
    except _requests.RequestException as e:
        raise BackendError(f"transport failure: {e}") from e
    if resp.status_code // 100 != 2:
        raise BackendError(f"remote service returned HTTP {resp.status_code}")
    try:
        body = resp.json()
    except ValueError as e:
        raise BackendError(f"remote response is not JSON: {e}") from e
    if "image" not in body:
        raise BackendError("remote response missing 'image'")
    out = decode_image_b64(body["image"])
    if out.shape != src.shape:
        raise BackendError(f"remote returned {out.shape}, expected {src.shape}")
    from .wire import decode_mask_b64

    mask = decode_mask_b64(request["mask"])
    m = mask.data.astype(np.float64)[:, :, None]
    composited = m * out.data + (1.0 - m) * src.data
    return {"image": ImageGrid(composited), "seed": body.get("seed", request["seed"])}


class RemoteInpaintBackend:
    """Client for an out-of-process inpainting service."""

    strategy = "remote_inpaint"

    def __init__(self, endpoint: str | None = None, steps: int = 50, timeout: float = 60.0):
        self.endpoint = endpoint or os.environ.get(ENDPOINT_ENV)
        if not self.endpoint:
            raise ConfigurationError(f"no remote endpoint configured ({ENDPOINT_ENV})")
        self.steps = steps
        self.timeout = timeout

    def signature(self) -> dict:
        return {"strategy": self.strategy, "endpoint": self.endpoint, "steps": self.steps}

    def generate_batch(self, triplets, generators, base_index: int = 0) -> list[ImageGrid]:
        out = []
        for i, t in enumerate(triplets):
            request = {
                "image": encode_image_b64(t.negative),
                "mask": encode_mask_b64(t.mask),
                "positive_text": t.prompt.positive_text,
                "negative_text": t.prompt.negative_text,
                "guidance_scale": t.prompt.guidance_scale,
                "steps": self.steps,
                "seed": int(torch.randint(2**31, (1,), generator=generators[i])),
            }
            last = None
            for _ in range(1 + _RETRIES_PER_SAMPLE):
                try:
                    out.append(remote_inpaint(request, self.endpoint, self.timeout)["image"])
                    last = None
                    break
                except BackendError as e:
                    last = e
            if last is not None:
                raise GenerationError(
                    f"remote backend failed after {_RETRIES_PER_SAMPLE} retries: {last}",
                    sample_index=base_index + i,
                )
        return out

    def sample_mask(self, triplet: GenerationTriplet) -> BinaryMask:
        return triplet.mask


def generate_augmented_set(
    backend, negatives, prompts, library: MaskLibrary, n_aug: int, seed: int, paired: bool = False
) -> list[LabeledSample]:
    """Draw triplets and generate exactly n_aug labeled positives.

    Deterministic per (backend, pools, seed): triplet draws come from
    stream (seed, 0, i) and chain noise from (seed, 1, i), and chunk
    boundaries sit at fixed absolute indices, so shorter runs are
    prefixes of longer ones.
    """
    if n_aug < 0:
        raise ValidationError(f"n_aug must be >= 0, got {n_aug}")
    samples: list[LabeledSample] = []
    for lo in range(0, n_aug, SAMPLE_CHUNK):
        hi = min(lo + SAMPLE_CHUNK, n_aug)
        triplets = [
            sample_triplet(negatives, prompts, library, derive_rng(seed, 0, i), paired=paired)
            for i in range(lo, hi)
        ]
        gens = [
            torch.Generator().manual_seed(derive_torch_seed(seed, 1, i)) for i in range(lo, hi)
        ]
        try:
            images = backend.generate_batch(triplets, gens, base_index=lo)
        except GenerationError:
            raise
        except Exception as e:
            raise GenerationError(f"backend failed on chunk starting at {lo}: {e}", sample_index=lo) from e
        for off, (img, t) in enumerate(zip(images, triplets)):
            i = lo + off
            samples.append(
                LabeledSample(
                    image=img,
                    label=1,
                    origin="generated",
                    mask=backend.sample_mask(t),
                    sample_id=f"gen-{backend.strategy}-{seed}-{i:05d}",
                )
            )
    return samples
