"""Forward Gaussian corruption of images and the self-paced timestep budget.

Images fed to the discriminator: real and generated alike: are corrupted by
a variance-preserving forward process::

    y = sqrt(abar_t) * x + sqrt(1 - abar_t) * sigma * eps,   eps ~ N(0, I)

with ``abar_t`` the cumulative retention coefficient of a linear-beta
schedule.  Mixing over sampled timesteps yields Gaussian-mixture instance
noise.  The maximum usable timestep ``T`` is adapted online from a
discriminator confidence statistic ``r_d`` so the corruption strengthens
exactly when the discriminator grows overconfident.

There is no reverse process here: corruption is discriminator input
augmentation, not a sampling chain.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch

from .errors import ValidationError


@dataclass(frozen=True)
class NoiseSchedule:
    """Per-step retention coefficients ``abar`` (length T_max + 1, abar[0] = 1)."""

    t_max: int
    retention: np.ndarray
    noise_sigma: float

    def __post_init__(self):
        r = self.retention
        if len(r) != self.t_max + 1:
            raise ValidationError(f"retention must have length T_max+1={self.t_max + 1}, got {len(r)}")
        if r[0] != 1.0:
            raise ValidationError("retention[0] must be exactly 1")
        if np.any(r <= 0.0):
            raise ValidationError("retention must be strictly positive")
        if np.any(np.diff(r) > 0.0):
            raise ValidationError("retention must be nonincreasing")
        if self.noise_sigma <= 0:
            raise ValidationError(f"noise_sigma must be > 0, got {self.noise_sigma}")


def build_schedule(t_max: int, beta_min: float, beta_max: float, sigma: float) -> NoiseSchedule:
    """Linear-beta schedule: ``abar_t = prod_{k<=t} (1 - beta_k)``, ``abar_0 = 1``."""
    if t_max < 1:
        raise ValidationError(f"T_max must be >= 1, got {t_max}")
    if not (0.0 < beta_min <= beta_max < 1.0):
        raise ValidationError(f"need 0 < beta_min <= beta_max < 1, got ({beta_min}, {beta_max})")
    if sigma <= 0:
        raise ValidationError(f"sigma must be > 0, got {sigma}")
    betas = np.linspace(beta_min, beta_max, t_max, dtype=np.float64)
    abar = np.concatenate([[1.0], np.cumprod(1.0 - betas)])
    return NoiseSchedule(t_max=t_max, retention=abar, noise_sigma=float(sigma))


@dataclass(frozen=True)
class TimestepDistribution:
    """Weights over timesteps {1..T}; ``uniform`` or ``priority`` (pi_t ∝ t)."""

    kind: str
    t_current: int
    weights: np.ndarray = field(init=False)

    def __post_init__(self):
        if self.kind not in ("uniform", "priority"):
            raise ValidationError(f"unknown timestep distribution kind {self.kind!r}")
        if self.t_current < 1:
            raise ValidationError(f"T_current must be >= 1, got {self.t_current}")
        t = np.arange(1, self.t_current + 1, dtype=np.float64)
        w = np.ones_like(t) if self.kind == "uniform" else t
        object.__setattr__(self, "weights", w / w.sum())


def sample_timesteps(dist: TimestepDistribution, count: int, rng: torch.Generator) -> torch.Tensor:
    """Draw ``count`` timesteps in {1..T_current} from ``dist``."""
    if count < 1:
        raise ValidationError(f"count must be >= 1, got {count}")
    probs = torch.from_numpy(dist.weights)
    idx = torch.multinomial(probs, count, replacement=True, generator=rng)
    return idx + 1


def diffuse(
    x: torch.Tensor,
    t: torch.Tensor,
    schedule: NoiseSchedule,
    rng: torch.Generator | None = None,
    noise: torch.Tensor | None = None,
) -> torch.Tensor:
    """Corrupt ``x`` at per-sample timesteps ``t``; t = 0 returns ``x`` exactly.

    ``noise`` overrides the drawn Gaussian (same shape as ``x``): used by
    finite-difference checks that must hold the noise fixed.
    """
    t = torch.as_tensor(t, dtype=torch.long)
    if t.min() < 0 or t.max() > schedule.t_max:
        raise ValidationError(f"timesteps must lie in [0, {schedule.t_max}], got range [{t.min()}, {t.max()}]")
    abar = torch.from_numpy(schedule.retention).to(x.dtype)[t].reshape(-1, *([1] * (x.ndim - 1)))
    if noise is None:
        noise = torch.empty_like(x).normal_(generator=rng)
    return torch.sqrt(abar) * x + torch.sqrt(1.0 - abar) * schedule.noise_sigma * noise


def overfit_metric(d_outputs_on_real) -> float:
    """Mean of sign(D - 0.5) over discriminator outputs on corrupted real data.

    Lies in [-1, 1]; sign(0) counts as 0.  Gauges discriminator confidence.
    """
    arr = np.asarray(
        d_outputs_on_real.detach().cpu().numpy() if isinstance(d_outputs_on_real, torch.Tensor) else d_outputs_on_real,
        dtype=np.float64,
    )
    if arr.size == 0:
        raise ValidationError("overfit_metric needs a nonempty array")
    return float(np.mean(np.sign(arr - 0.5)))


@dataclass
class AdaptiveDiffusionState:
    """Current timestep budget and the control parameters that adapt it."""

    t_current: int = 4
    d_target: float = 0.6
    c_step: int = 1
    t_min: int = 4
    t_max: int = 64
    update_interval: int = 4
    pi_kind: str = "uniform"
    r_d_last: float = 0.0

    def __post_init__(self):
        if not (1 <= self.t_min <= self.t_max):
            raise ValidationError(f"need 1 <= T_min <= T_max, got ({self.t_min}, {self.t_max})")
        if not (self.t_min <= self.t_current <= self.t_max):
            raise ValidationError(
                f"T_current must lie in [{self.t_min}, {self.t_max}], got {self.t_current}"
            )
        if self.c_step < 1:
            raise ValidationError(f"C must be >= 1, got {self.c_step}")
        if self.update_interval < 1:
            raise ValidationError(f"update_interval must be >= 1, got {self.update_interval}")

    def distribution(self) -> TimestepDistribution:
        """Timestep distribution whose support tracks the current budget."""
        return TimestepDistribution(kind=self.pi_kind, t_current=self.t_current)


def update_T(state: AdaptiveDiffusionState, r_d: float) -> AdaptiveDiffusionState:
    """Move the budget one control step: ``T += sign(r_d - d_target) * C``, clamped."""
    step = int(np.sign(r_d - state.d_target)) * state.c_step
    state.t_current = int(np.clip(state.t_current + step, state.t_min, state.t_max))
    state.r_d_last = float(r_d)
    return state
