"""Noise schedules for the diffusion chain.

A schedule stores the cumulative signal coefficients alpha_bar[0..T]
with alpha_bar[0] = 1; per-step betas are recovered as
beta_t = 1 - alpha_bar[t]/alpha_bar[t-1].
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import ValidationError

SCHEDULE_KINDS = ("linear_beta", "cosine")

# endpoint betas at the T=1000 reference horizon; shorter chains scale
# them by 1000/T so the terminal alpha_bar stays near zero at any T
_BETA_START_REF = 1e-4
_BETA_END_REF = 2e-2
_BETA_CAP = 0.999
_COSINE_S = 8e-3
_ALPHA_FLOOR = 1e-7


@dataclass(frozen=True)
class NoiseSchedule:
    """Cumulative signal coefficients alpha_bar[0..T], alpha_bar[0] = 1."""

    alpha_bar: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.alpha_bar, dtype=np.float64)
        if arr.ndim != 1 or arr.shape[0] < 3:
            raise ValidationError("alpha_bar must be 1-D with T >= 2 entries after alpha_0")
        if arr[0] != 1.0:
            raise ValidationError(f"alpha_bar[0] must be 1, got {arr[0]}")
        if np.any(np.diff(arr) >= 0):
            raise ValidationError("alpha_bar must be strictly decreasing")
        if arr[-1] <= 0 or np.any(arr[1:] > 1):
            raise ValidationError("alpha_bar values must lie in (0, 1] after t=0")
        if arr[-1] > 1e-3:
            raise ValidationError(
                f"alpha_bar[T] must be <= 1e-3 (noise end of the chain), got {arr[-1]:.3e}"
            )
        arr = np.ascontiguousarray(arr)
        arr.setflags(write=False)
        object.__setattr__(self, "alpha_bar", arr)

    @property
    def T(self) -> int:
        return self.alpha_bar.shape[0] - 1

    def betas(self) -> np.ndarray:
        """Per-step beta_t for t = 1..T, index 0 unused (set to 0)."""
        ab = self.alpha_bar
        out = np.zeros_like(ab)
        out[1:] = 1.0 - ab[1:] / ab[:-1]
        return out

    def beta_tilde(self) -> np.ndarray:
        """Posterior variance beta~_t = (1-ab_{t-1})/(1-ab_t) * beta_t.

        beta~_1 is exactly 0 because alpha_bar[0] = 1, so the final
        reverse step is deterministic without a special case.
        """
        ab = self.alpha_bar
        out = np.zeros_like(ab)
        out[1:] = (1.0 - ab[:-1]) / (1.0 - ab[1:]) * self.betas()[1:]
        return out


def make_schedule(T: int, kind: str = "linear_beta") -> NoiseSchedule:
    """Build a schedule of the given kind over T steps."""
    if T < 2:
        raise ValidationError(f"T must be >= 2, got {T}")
    if kind == "linear_beta":
        scale = 1000.0 / T
        betas = np.linspace(_BETA_START_REF * scale, min(_BETA_END_REF * scale, _BETA_CAP), T)
        alpha_bar = np.concatenate([[1.0], np.cumprod(1.0 - betas)])
    elif kind == "cosine":
        t = np.arange(T + 1) / T
        f = np.cos((t + _COSINE_S) / (1.0 + _COSINE_S) * math.pi / 2.0) ** 2
        alpha_bar = np.clip(f / f[0], _ALPHA_FLOOR, 1.0)
        alpha_bar[0] = 1.0
    else:
        raise ValidationError(f"unknown schedule kind {kind!r}, expected one of {SCHEDULE_KINDS}")
    return NoiseSchedule(alpha_bar=alpha_bar)
