"""Diffusion-side utilities.

Timestep convention: t=1 is pure noise, t=0 is clean data. The truncated
normal sampler and the conditioning gate operate on this normalized t;
mapping to a concrete backbone's integer steps is the caller's concern.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri

from .errors import ContractError

__all__ = [
    "TimestepSamplerConfig",
    "NoiseSchedule",
    "sample_timestep",
    "sample_timesteps",
    "conditioning_active",
    "forward_noise",
]


@dataclass(frozen=True)
class TimestepSamplerConfig:
    """Truncated normal over [lo, hi]. Defaults follow the wide-band
    setting: mean 0.9, std 0.2, range [0.6, 1]."""

    mean: float = 0.9
    std: float = 0.2
    lo: float = 0.6
    hi: float = 1.0

    def __post_init__(self):
        if not (self.lo < self.hi):
            raise ContractError(f"sampler range is empty: [{self.lo}, {self.hi}]")
        if not (0.0 <= self.lo and self.hi <= 1.0):
            raise ContractError(f"sampler range must lie in [0, 1], got [{self.lo}, {self.hi}]")
        if not self.std > 0.0:
            raise ContractError(f"sampler std must be positive, got {self.std}")


def sample_timesteps(cfg: TimestepSamplerConfig, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw n timesteps by inverse-CDF truncation.

    t = mu + sigma * ndtri(ndtr(alpha) + u * (ndtr(beta) - ndtr(alpha)))
    with alpha, beta the standardized bounds and u uniform on [0, 1).
    Deterministic for a seeded generator; the result is clipped to
    [lo, hi] to absorb the last-ulp of the inverse CDF at the edges.
    """
    alpha = (cfg.lo - cfg.mean) / cfg.std
    beta = (cfg.hi - cfg.mean) / cfg.std
    fa = ndtr(alpha)
    fb = ndtr(beta)
    u = rng.random(n)
    p = fa + u * (fb - fa)
    # ndtri(0) and ndtri(1) are infinite; keep p strictly inside (0, 1).
    p = np.clip(p, 1e-300, 1.0 - 1e-16)
    t = cfg.mean + cfg.std * ndtri(p)
    return np.clip(t, cfg.lo, cfg.hi)


def sample_timestep(cfg: TimestepSamplerConfig, rng: np.random.Generator) -> float:
    """Single draw; see sample_timesteps."""
    return float(sample_timesteps(cfg, 1, rng)[0])


def conditioning_active(t: float, cfg: TimestepSamplerConfig) -> bool:
    """True iff the conditioning branch applies at timestep t.

    The band is closed: both lo and hi activate.
    """
    t = float(t)
    if not (0.0 <= t <= 1.0):
        raise ContractError(f"timestep {t} outside [0, 1]")
    return cfg.lo <= t <= cfg.hi


_ALPHA_BAR_FLOOR = 1e-8


@dataclass(frozen=True)
class NoiseSchedule:
    """Cumulative signal coefficient ᾱ(t) for t in [0, 1].

    ᾱ(0) = 1 (clean), ᾱ(1) ≈ 0 (pure noise), strictly decreasing in
    between. Presets: "cosine" (cos²(πt/2)) and "linear" (1−t, floored).
    """

    preset: str = "cosine"

    def __post_init__(self):
        if self.preset not in ("cosine", "linear"):
            raise ContractError(f"unknown noise schedule preset {self.preset!r}")

    def alpha_bar(self, t):
        t = np.asarray(t, dtype=np.float64)
        if np.any(t < 0.0) or np.any(t > 1.0):
            raise ContractError("schedule evaluated outside [0, 1]")
        if self.preset == "cosine":
            ab = np.cos(0.5 * np.pi * t) ** 2
        else:
            ab = 1.0 - t
        ab = np.where(t == 0.0, 1.0, np.clip(ab, _ALPHA_BAR_FLOOR, 1.0))
        return float(ab) if ab.ndim == 0 else ab


def forward_noise(
    x0: np.ndarray, t: float, sched: NoiseSchedule, rng: np.random.Generator
) -> np.ndarray:
    """Forward diffusion: x_t = sqrt(ᾱ(t))·x0 + sqrt(1−ᾱ(t))·ε.

    At t=0 the input is returned unchanged (a copy), keeping the identity
    exact rather than within rounding.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    if not np.all(np.isfinite(x0)):
        raise ContractError("forward_noise input contains non-finite values")
    ab = sched.alpha_bar(float(t))
    if ab >= 1.0:
        return x0.copy()
    eps = rng.standard_normal(x0.shape)
    return np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps
