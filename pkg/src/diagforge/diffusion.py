"""From-scratch denoising diffusion: training, guided sampling, inpainting.

The chain runs in the [-1,1] internal space (x -> 2x-1). The sampler is
ancestral with the posterior mean computed from the predicted noise and
the fixed lower-variance convention sigma_t^2 = beta~_t; beta~_1 = 0, so
the last step is deterministic. Conditioning is a discrete token with a
null token for the unconditional branch, combined at sampling time by
classifier-free guidance.

Every random draw flows through explicit generators (never the global
torch RNG): per-sample generators make a batch's i-th chain independent
of the batch around it, so generation runs chunked at a fixed batch size
are bit-reproducible sample-by-sample.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np
import torch
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import checkpoint as ckpt
from .core import BinaryMask, ImageGrid, derive_torch_seed, from_internal, to_internal, validate_pair
from .exceptions import SamplingError, TrainingError, ValidationError
from .schedule import NoiseSchedule, make_schedule

VOCABULARY = ("null", "scratch", "spot")
NULL_INDEX = 0

# fixed generation chunk: chunk boundaries sit at absolute sample
# indices, so the first k samples of a longer run equal a shorter run
SAMPLE_CHUNK = 25


@dataclass(frozen=True)
class ConditionToken:
    """Discrete conditioning token; 'null' is the unconditional branch."""

    kind: str = "null"

    def __post_init__(self):
        if self.kind not in VOCABULARY:
            raise ValidationError(f"token {self.kind!r} not in vocabulary {VOCABULARY}")

    @property
    def index(self) -> int:
        return VOCABULARY.index(self.kind)


def token_index(token) -> int:
    """Accept a ConditionToken, vocabulary string, or raw index."""
    if isinstance(token, ConditionToken):
        return token.index
    if isinstance(token, str):
        return ConditionToken(token).index
    idx = int(token)
    if not 0 <= idx < len(VOCABULARY):
        raise ValidationError(f"token index {idx} outside vocabulary")
    return idx


@dataclass(frozen=True)
class TrainDiffusionConfig:
    """Hyperparameters of the denoiser training loop."""

    epochs: int = 300
    batch_size: int = 16
    learning_rate: float = 2e-3
    p_drop: float = 0.1
    seed: int = 0
    dtype: str = "float32"

    def __post_init__(self):
        if self.epochs < 1:
            raise ValidationError(f"epochs must be >= 1, got {self.epochs}")
        if self.learning_rate <= 0:
            raise ValidationError(f"learning_rate must be > 0, got {self.learning_rate}")
        if not 0.0 <= self.p_drop <= 1.0:
            raise ValidationError(f"p_drop must be in [0,1], got {self.p_drop}")


def _torch_dtype(name) -> torch.dtype:
    if isinstance(name, torch.dtype):
        return name
    return {"float32": torch.float32, "float64": torch.float64}[str(name)]


class _SinusoidalTimeEmbedding(torch.nn.Module):
    def __init__(self, dim: int):
        super().__init__()
        half = dim // 2
        freqs = torch.exp(-math.log(10000.0) * torch.arange(half) / max(half - 1, 1))
        self.register_buffer("freqs", freqs)
        self.dim = dim

    def forward(self, t: torch.Tensor) -> torch.Tensor:
        ang = t.to(self.freqs.dtype)[:, None] * self.freqs[None, :]
        return torch.cat([torch.sin(ang), torch.cos(ang)], dim=1)


class _CondBlock(torch.nn.Module):
    """conv + embedding bias + conv with a residual connection."""

    def __init__(self, channels: int, emb_dim: int):
        super().__init__()
        groups = 4 if channels % 4 == 0 else 1
        self.norm1 = torch.nn.GroupNorm(groups, channels)
        self.conv1 = torch.nn.Conv2d(channels, channels, 3, padding=1)
        self.emb_proj = torch.nn.Linear(emb_dim, channels)
        self.norm2 = torch.nn.GroupNorm(groups, channels)
        self.conv2 = torch.nn.Conv2d(channels, channels, 3, padding=1)
        self.act = torch.nn.SiLU()

    def forward(self, x, emb):
        h = self.conv1(self.act(self.norm1(x)))
        h = h + self.emb_proj(emb)[:, :, None, None]
        h = self.conv2(self.act(self.norm2(h)))
        return x + h


class NoisePredictor(torch.nn.Module):
    """Small two-scale conv net predicting the added noise.

    forward(x, t, cond): x (N,1,H,W), t (N,) step indices, cond (N,)
    token indices. H and W must be even (one downsampling stage).
    """

    def __init__(self, hidden: int = 16, emb_dim: int = 32, vocab_size: int = len(VOCABULARY)):
        super().__init__()
        self.hidden = hidden
        self.emb_dim = emb_dim
        self.vocab_size = vocab_size
        self.time_embed = _SinusoidalTimeEmbedding(emb_dim)
        self.time_mlp = torch.nn.Sequential(
            torch.nn.Linear(emb_dim, emb_dim), torch.nn.SiLU(), torch.nn.Linear(emb_dim, emb_dim)
        )
        self.cond_embed = torch.nn.Embedding(vocab_size, emb_dim)
        self.conv_in = torch.nn.Conv2d(1, hidden, 3, padding=1)
        self.enc = _CondBlock(hidden, emb_dim)
        self.down = torch.nn.Conv2d(hidden, hidden * 2, 3, stride=2, padding=1)
        self.mid = _CondBlock(hidden * 2, emb_dim)
        self.up = torch.nn.ConvTranspose2d(hidden * 2, hidden, 2, stride=2)
        self.fuse = torch.nn.Conv2d(hidden * 2, hidden, 3, padding=1)
        self.dec = _CondBlock(hidden, emb_dim)
        self.conv_out = torch.nn.Conv2d(hidden, 1, 3, padding=1)

    def signature(self) -> dict:
        return {
            "arch": "noise_predictor_v1",
            "hidden": self.hidden,
            "emb_dim": self.emb_dim,
            "vocab_size": self.vocab_size,
        }

    def forward(self, x, t, cond):
        emb = self.time_mlp(self.time_embed(t)) + self.cond_embed(cond)
        h1 = self.enc(self.conv_in(x), emb)
        h2 = self.mid(self.down(h1), emb)
        h = self.up(h2)
        h = self.fuse(torch.cat([h, h1], dim=1))
        return self.conv_out(self.dec(h, emb))


def init_noise_predictor(
    hidden: int = 16, emb_dim: int = 32, seed: int = 0, dtype="float32"
) -> NoisePredictor:
    """Seed-deterministic weight init; the output conv starts at zero,
    so a fresh model behaves like the zero predictor."""
    model = NoisePredictor(hidden=hidden, emb_dim=emb_dim).to(_torch_dtype(dtype))
    g = torch.Generator().manual_seed(int(seed))
    with torch.no_grad():
        for name, p in model.named_parameters():
            if p.ndim >= 2:
                fan_in = p.shape[1] * (p[0, 0].numel() if p.ndim > 2 else 1)
                p.normal_(0.0, math.sqrt(2.0 / max(fan_in, 1)), generator=g)
            else:
                p.zero_()
        model.conv_out.weight.zero_()
    return model


def _alpha_bar_at(sched: NoiseSchedule, t, like: torch.Tensor) -> torch.Tensor:
    ab = torch.as_tensor(np.array(sched.alpha_bar), dtype=like.dtype, device=like.device)
    tt = torch.as_tensor(t, dtype=torch.long, device=like.device)
    a = ab[tt]
    while a.ndim < like.ndim:
        a = a.unsqueeze(-1)
    return a


def forward_sample(x0, t, eps, sched: NoiseSchedule):
    """Closed-form forward marginal x_t = sqrt(ab_t) x0 + sqrt(1-ab_t) eps.

    t is a scalar step or a per-sample array matching the leading axis.
    numpy inputs give a numpy output.
    """
    was_numpy = not torch.is_tensor(x0)
    x0_t = torch.as_tensor(np.asarray(x0) if was_numpy else x0)
    if x0_t.dtype not in (torch.float32, torch.float64):
        x0_t = x0_t.to(torch.float64)
    eps_t = torch.as_tensor(np.asarray(eps) if not torch.is_tensor(eps) else eps, dtype=x0_t.dtype)
    if eps_t.shape != x0_t.shape:
        raise ValidationError(f"eps shape {tuple(eps_t.shape)} != x0 shape {tuple(x0_t.shape)}")
    tmax = int(np.max(np.asarray(t)))
    tmin = int(np.min(np.asarray(t)))
    if tmin < 0 or tmax > sched.T:
        raise ValidationError(f"t must lie in [0, {sched.T}], got [{tmin}, {tmax}]")
    ab = _alpha_bar_at(sched, t, x0_t)
    out = torch.sqrt(ab) * x0_t + torch.sqrt(1.0 - ab) * eps_t
    return out.numpy() if was_numpy else out


def denoising_loss_terms(model, sched: NoiseSchedule, x0, cond, t, eps) -> torch.Tensor:
    """Per-sample ||eps_hat - eps||^2 summed over pixels, shape (N,).

    The teacher-forced hook: passing a model that returns eps exactly
    gives zero loss.
    """
    x_t = forward_sample(x0, t, eps, sched)
    eps_hat = model(x_t, torch.as_tensor(t, dtype=torch.long), torch.as_tensor(cond, dtype=torch.long))
    return ((eps_hat - eps) ** 2).flatten(1).sum(dim=1)


def training_loss(model, sched: NoiseSchedule, x0, cond, rng) -> torch.Tensor:
    """Uniform-t stochastic estimator of the denoising objective.

    Mean over the batch of per-sample pixel-summed errors, so the zero
    predictor scores ~D (the pixel count). rng is a torch.Generator or
    an int seed; a fixed seed makes the draw reproducible.
    """
    if not torch.is_tensor(x0):
        x0 = torch.as_tensor(np.asarray(x0, dtype=np.float64))
    if x0.numel() == 0 or x0.shape[0] == 0:
        raise ValidationError("training batch is empty")
    g = rng if isinstance(rng, torch.Generator) else torch.Generator().manual_seed(int(rng))
    n = x0.shape[0]
    t = torch.randint(1, sched.T + 1, (n,), generator=g)
    eps = torch.empty_like(x0).normal_(generator=g)
    cond = torch.as_tensor(cond, dtype=torch.long)
    return denoising_loss_terms(model, sched, x0, cond, t, eps).mean()


def apply_condition_dropout(cond: torch.Tensor, p_drop: float, g: torch.Generator) -> torch.Tensor:
    """Replace each token with the null token with probability p_drop."""
    if p_drop <= 0:
        return cond
    drop = torch.rand(cond.shape, generator=g) < p_drop
    return torch.where(drop, torch.full_like(cond, NULL_INDEX), cond)


def _as_internal_batch(images, dtype) -> torch.Tensor:
    rows = []
    for img in images:
        arr = img.plane() if isinstance(img, ImageGrid) else np.asarray(img, dtype=np.float64)
        rows.append(to_internal(arr))
    return torch.as_tensor(np.stack(rows)[:, None, :, :], dtype=_torch_dtype(dtype))


def train_denoiser(
    data,
    config: TrainDiffusionConfig,
    sched: NoiseSchedule,
    model: NoisePredictor | None = None,
    hidden: int = 16,
    emb_dim: int = 32,
):
    """Train a noise predictor on (image, token) pairs.

    data: iterable of (ImageGrid-or-array, token). Returns
    (model, history) where history is the per-epoch mean loss.
    Deterministic for a fixed config seed.
    """
    data = list(data)
    if not data:
        raise ValidationError("need at least one training image")
    torch.set_num_threads(1)
    dtype = _torch_dtype(config.dtype)
    x0 = _as_internal_batch([d[0] for d in data], dtype)
    cond_all = torch.as_tensor([token_index(d[1]) for d in data], dtype=torch.long)
    if model is None:
        model = init_noise_predictor(hidden, emb_dim, seed=config.seed, dtype=dtype)
    model = model.to(dtype)
    g = torch.Generator().manual_seed(derive_torch_seed(config.seed, 1))
    opt = torch.optim.Adam(model.parameters(), lr=config.learning_rate)
    n = x0.shape[0]
    history = []
    step = 0
    for _ in range(config.epochs):
        perm = torch.randperm(n, generator=g)
        epoch_losses = []
        for lo in range(0, n, config.batch_size):
            idx = perm[lo : lo + config.batch_size]
            cb = apply_condition_dropout(cond_all[idx], config.p_drop, g)
            loss = training_loss(model, sched, x0[idx], cb, g)
            if not torch.isfinite(loss):
                raise TrainingError(f"non-finite loss at step {step}", step=step)
            opt.zero_grad()
            loss.backward()
            opt.step()
            epoch_losses.append(float(loss.detach()))
            step += 1
        history.append(float(np.mean(epoch_losses)))
    return model, history


def guided_epsilon(model, x_t, t, cond, neg, s):
    """Classifier-free guidance: eps_neg + s * (eps_cond - eps_neg).

    s may be a scalar or a per-sample tensor. The s=1, s=0, and
    cond==neg cases reduce to a single model call and are exact.
    """
    t = torch.as_tensor(t, dtype=torch.long)
    cond = torch.as_tensor(cond, dtype=torch.long)
    neg = torch.as_tensor(neg, dtype=torch.long)
    if cond.ndim == 0:
        cond = cond.expand(x_t.shape[0])
    if neg.ndim == 0:
        neg = neg.expand(x_t.shape[0])
    s_t = torch.as_tensor(s, dtype=x_t.dtype)
    if torch.equal(cond, neg):
        return model(x_t, t, cond)
    if s_t.ndim == 0:
        if float(s_t) == 1.0:
            return model(x_t, t, cond)
        if float(s_t) == 0.0:
            return model(x_t, t, neg)
    eps_c = model(x_t, t, cond)
    eps_n = model(x_t, t, neg)
    while s_t.ndim < eps_n.ndim:
        s_t = s_t.unsqueeze(-1)
    return eps_n + s_t * (eps_c - eps_n)


def _make_generators(seed, n) -> list[torch.Generator]:
    return [torch.Generator().manual_seed(derive_torch_seed(seed, i)) for i in range(n)]


def _stack_noise(generators, shape, dtype) -> torch.Tensor:
    return torch.stack(
        [torch.empty(shape, dtype=dtype).normal_(generator=g) for g in generators]
    )


def _chain_coeffs(sched: NoiseSchedule, dtype):
    ab = torch.as_tensor(np.array(sched.alpha_bar), dtype=dtype)
    beta = torch.as_tensor(np.array(sched.betas()), dtype=dtype)
    btilde = torch.as_tensor(np.array(sched.beta_tilde()), dtype=dtype)
    return ab, beta, btilde


def _ancestral_step(x, eps_hat, t, ab, beta, btilde, z, clip_x0):
    x0_hat = (x - torch.sqrt(1.0 - ab[t]) * eps_hat) / torch.sqrt(ab[t])
    if clip_x0:
        x0_hat = x0_hat.clamp(-1.0, 1.0)
    a_step = ab[t] / ab[t - 1]
    mean = (
        torch.sqrt(a_step) * (1.0 - ab[t - 1]) * x + torch.sqrt(ab[t - 1]) * beta[t] * x0_hat
    ) / (1.0 - ab[t])
    if z is None:
        return mean
    return mean + torch.sqrt(btilde[t]) * z


def sample_latent(
    model,
    sched: NoiseSchedule,
    n: int,
    size: tuple[int, int],
    *,
    cond=NULL_INDEX,
    neg=NULL_INDEX,
    guidance_scale=1.0,
    seed=0,
    generators=None,
    clip_x0: bool = True,
    dtype="float32",
) -> torch.Tensor:
    """Run the full reverse chain in the [-1,1] internal space.

    Returns the unclamped x_0 tensor of shape (n, 1, H, W). cond/neg are
    token indices (scalars or per-sample sequences). Noise is drawn from
    per-sample generators derived from seed unless generators is given.
    """
    torch.set_num_threads(1)
    dt = _torch_dtype(dtype)
    h, w = int(size[0]), int(size[1])
    gens = generators if generators is not None else _make_generators(seed, n)
    if len(gens) != n:
        raise ValidationError(f"got {len(gens)} generators for {n} samples")
    ab, beta, btilde = _chain_coeffs(sched, dt)
    cond_t = torch.as_tensor(cond, dtype=torch.long)
    neg_t = torch.as_tensor(neg, dtype=torch.long)
    x = _stack_noise(gens, (1, h, w), dt)
    with torch.no_grad():
        for t in range(sched.T, 0, -1):
            tt = torch.full((n,), t, dtype=torch.long)
            eps_hat = guided_epsilon(model, x, tt, cond_t, neg_t, guidance_scale)
            z = _stack_noise(gens, (1, h, w), dt) if t > 1 else None
            x = _ancestral_step(x, eps_hat, t, ab, beta, btilde, z, clip_x0)
            if not torch.isfinite(x).all():
                raise SamplingError(f"non-finite state at step {t}", step=t)
    return x


def reverse_sample(
    model,
    sched: NoiseSchedule,
    cond=NULL_INDEX,
    neg=NULL_INDEX,
    guidance_scale: float = 1.0,
    seed: int = 0,
    size: tuple[int, int] = (64, 64),
    dtype="float32",
) -> ImageGrid:
    """Sample one image: full chain, then rescale and clamp to [0,1]."""
    x = sample_latent(
        model, sched, 1, size,
        cond=token_index(cond), neg=token_index(neg),
        guidance_scale=guidance_scale, seed=seed, dtype=dtype,
    )
    return ImageGrid(from_internal(x[0, 0].numpy()))


def inpaint_latent(
    model,
    sched: NoiseSchedule,
    known: torch.Tensor,
    mask: torch.Tensor,
    *,
    cond=NULL_INDEX,
    neg=NULL_INDEX,
    guidance_scale=1.0,
    generators=None,
    seed=0,
    clip_x0: bool = True,
    dtype="float32",
) -> torch.Tensor:
    """Known-region replacement inpainting over a batch, internal space.

    known: (n,1,H,W) source images in [-1,1]; mask: same shape, 1 where
    content is generated. After every ancestral step the outside-mask
    region is replaced with a fresh forward sample of the source at the
    new noise level, so the generated region always blends against
    correctly-noised context.
    """
    torch.set_num_threads(1)
    dt = _torch_dtype(dtype)
    n, _, h, w = known.shape
    known = known.to(dt)
    mask = mask.to(dt)
    gens = generators if generators is not None else _make_generators(seed, n)
    ab, beta, btilde = _chain_coeffs(sched, dt)
    cond_t = torch.as_tensor(cond, dtype=torch.long)
    neg_t = torch.as_tensor(neg, dtype=torch.long)
    x = _stack_noise(gens, (1, h, w), dt)
    with torch.no_grad():
        for t in range(sched.T, 0, -1):
            tt = torch.full((n,), t, dtype=torch.long)
            eps_hat = guided_epsilon(model, x, tt, cond_t, neg_t, guidance_scale)
            z = _stack_noise(gens, (1, h, w), dt) if t > 1 else None
            x = _ancestral_step(x, eps_hat, t, ab, beta, btilde, z, clip_x0)
            if t > 1:
                ctx_eps = _stack_noise(gens, (1, h, w), dt)
                ctx = torch.sqrt(ab[t - 1]) * known + torch.sqrt(1.0 - ab[t - 1]) * ctx_eps
            else:
                ctx = known
            x = mask * x + (1.0 - mask) * ctx
            if not torch.isfinite(x).all():
                raise SamplingError(f"non-finite state at step {t}", step=t)
    return x


def inpaint_sample(
    model,
    sched: NoiseSchedule,
    i_n: ImageGrid,
    m_a: BinaryMask,
    cond=NULL_INDEX,
    neg=NULL_INDEX,
    guidance_scale: float = 1.0,
    seed: int = 0,
    dtype="float32",
) -> ImageGrid:
    """Inpaint one image under a mask; unmasked pixels match bit-exactly.

    An empty mask warns and returns the source unchanged. The final
    composite happens in pixel space from the original raster, so the
    outside-mask region is the source bit-for-bit.
    """
    validate_pair(i_n, m_a)
    if m_a.is_empty():
        import warnings

        warnings.warn("inpaint_sample called with an empty mask; returning the source image")
        return i_n
    dt = _torch_dtype(dtype)
    known = torch.as_tensor(to_internal(i_n)[None, None], dtype=dt)
    mask_t = torch.as_tensor(m_a.data[None, None].astype(np.float64), dtype=dt)
    x = inpaint_latent(
        model, sched, known, mask_t,
        cond=token_index(cond), neg=token_index(neg),
        guidance_scale=guidance_scale, seed=seed, dtype=dtype,
    )
    gen = from_internal(x[0, 0].numpy())
    m = m_a.data.astype(np.float64)
    return ImageGrid(m * gen + (1.0 - m) * i_n.plane())


class DenoisingDiffusion(BaseEstimator):
    """Estimator facade over the diffusion engine.

    fit(images, tokens) trains the noise predictor; sample/inpaint wrap
    the reverse chain. Constructor arguments are stored verbatim; fitted
    state lives in trailing-underscore attributes.
    """

    def __init__(
        self,
        T: int = 200,
        schedule: str = "linear_beta",
        hidden: int = 16,
        emb_dim: int = 32,
        epochs: int = 300,
        batch_size: int = 16,
        learning_rate: float = 2e-3,
        p_drop: float = 0.1,
        guidance_scale: float = 80.0,
        seed: int = 0,
        dtype: str = "float32",
    ):
        self.T = T
        self.schedule = schedule
        self.hidden = hidden
        self.emb_dim = emb_dim
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.p_drop = p_drop
        self.guidance_scale = guidance_scale
        self.seed = seed
        self.dtype = dtype

    def _train_config(self) -> TrainDiffusionConfig:
        return TrainDiffusionConfig(
            epochs=self.epochs,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            p_drop=self.p_drop,
            seed=self.seed,
            dtype=self.dtype,
        )

    def fit(self, images, tokens=None):
        images = list(images)
        if tokens is None:
            tokens = ["null"] * len(images)
        first = images[0]
        self.resolution_ = first.shape if isinstance(first, ImageGrid) else np.asarray(first).shape
        self.schedule_ = make_schedule(self.T, self.schedule)
        self.model_, self.history_ = train_denoiser(
            list(zip(images, tokens)),
            self._train_config(),
            self.schedule_,
            hidden=self.hidden,
            emb_dim=self.emb_dim,
        )
        self.vocab_ = VOCABULARY
        return self

    def sample(self, n: int = 1, token="null", seed: int = 0, guidance_scale=None) -> list[ImageGrid]:
        check_is_fitted(self, "model_")
        s = self.guidance_scale if guidance_scale is None else guidance_scale
        x = sample_latent(
            self.model_, self.schedule_, n, self.resolution_,
            cond=token_index(token), neg=NULL_INDEX,
            guidance_scale=s, seed=seed, dtype=self.dtype,
        )
        return [ImageGrid(from_internal(x[i, 0].numpy())) for i in range(n)]

    def inpaint(self, image: ImageGrid, mask: BinaryMask, token="null", seed: int = 0, guidance_scale=None) -> ImageGrid:
        check_is_fitted(self, "model_")
        s = self.guidance_scale if guidance_scale is None else guidance_scale
        return inpaint_sample(
            self.model_, self.schedule_, image, mask,
            cond=token_index(token), neg=NULL_INDEX,
            guidance_scale=s, seed=seed, dtype=self.dtype,
        )

    def weights_fingerprint(self) -> str:
        """Content hash of the trained weights; distinguishes checkpoints
        that share hyperparameters but were fitted on different data."""
        check_is_fitted(self, "model_")
        h = hashlib.sha256()
        for k, v in sorted(self.model_.state_dict().items()):
            h.update(k.encode())
            h.update(v.detach().numpy().astype(np.float64).tobytes())
        return h.hexdigest()[:16]

    def save(self, path) -> None:
        check_is_fitted(self, "model_")
        meta = {
            "kind": "diffusion",
            "signature": self.model_.signature(),
            "vocabulary": list(self.vocab_),
            "resolution": list(self.resolution_),
            "params": self.get_params(),
        }
        arrays = {f"param/{k}": v.detach().numpy().astype(np.float64) for k, v in self.model_.state_dict().items()}
        arrays["schedule/alpha_bar"] = self.schedule_.alpha_bar
        ckpt.save_checkpoint(path, meta, arrays)

    @classmethod
    def load(cls, path) -> "DenoisingDiffusion":
        meta, arrays = ckpt.load_checkpoint(path, expected_kind="diffusion")
        est = cls(**meta["params"])
        sig = meta["signature"]
        model = NoisePredictor(hidden=sig["hidden"], emb_dim=sig["emb_dim"], vocab_size=sig["vocab_size"])
        dt = _torch_dtype(est.dtype)
        state = {
            k[len("param/"):]: torch.as_tensor(v, dtype=dt)
            for k, v in arrays.items()
            if k.startswith("param/")
        }
        model = model.to(dt)
        model.load_state_dict(state)
        est.model_ = model
        est.schedule_ = NoiseSchedule(alpha_bar=arrays["schedule/alpha_bar"])
        est.vocab_ = tuple(meta["vocabulary"])
        est.resolution_ = tuple(meta["resolution"])
        est.history_ = []
        return est
