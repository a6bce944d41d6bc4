"""Linear-beta diffusion schedule and the forward noising kernel.

Every derived array (alphas, running products, posterior variances) is
recomputed and audited elementwise at construction so a checkpointed
run can never carry an inconsistent schedule.
"""

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, NumericalError, ValidationError


@dataclass(frozen=True)
class ScheduleConfig:
    timesteps: int = 1000
    beta_start: float = 1e-4
    beta_end: float = 0.02

    def __post_init__(self):
        if self.timesteps < 2:
            raise ConfigError("timesteps must be >= 2")
        if not (0.0 < self.beta_start < 1.0 and 0.0 < self.beta_end < 1.0):
            raise ConfigError("beta endpoints must lie in (0, 1)")
        if self.beta_end <= self.beta_start:
            raise ConfigError("beta_end must exceed beta_start")

    def to_dict(self):
        return {"timesteps": self.timesteps, "beta_start": self.beta_start,
                "beta_end": self.beta_end}

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass(frozen=True)
class NoiseSchedule:
    config: ScheduleConfig
    betas: np.ndarray
    alphas: np.ndarray
    alpha_bars: np.ndarray
    alpha_bars_prev: np.ndarray
    posterior_vars: np.ndarray

    @property
    def timesteps(self):
        return self.config.timesteps


def build_schedule(config=None):
    """Variances interpolate linearly from beta_start to beta_end."""
    cfg = config or ScheduleConfig()
    betas = np.linspace(cfg.beta_start, cfg.beta_end, cfg.timesteps)
    alphas = 1.0 - betas
    alpha_bars = np.cumprod(alphas)
    alpha_bars_prev = np.concatenate(([1.0], alpha_bars[:-1]))
    posterior_vars = betas * (1.0 - alpha_bars_prev) / (1.0 - alpha_bars)

    if not ((alpha_bars > 0.0).all() and (alpha_bars < 1.0).all()):
        raise NumericalError("running alpha product left (0, 1); "
                             "the schedule underflowed")
    if not (np.diff(alpha_bars) < 0.0).all():
        raise NumericalError("running alpha product must strictly decrease")
    if posterior_vars[0] != 0.0 or (posterior_vars > betas).any() or \
            (posterior_vars < 0.0).any():
        raise NumericalError("posterior variance identity violated")
    return NoiseSchedule(cfg, betas, alphas, alpha_bars, alpha_bars_prev,
                         posterior_vars)


def q_sample(schedule, z0, t, eps):
    """Noise clean latents to step t: sqrt(ab) z0 + sqrt(1 - ab) eps.

    t is a scalar step or one step per row of z0.
    """
    z0 = np.asarray(z0, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if z0.shape != eps.shape:
        raise ValidationError(
            f"z0 {z0.shape} and eps {eps.shape} must match")
    t_arr = np.asarray(t)
    if not np.issubdtype(t_arr.dtype, np.integer):
        raise ValidationError("timesteps must be integers")
    if ((t_arr < 0) | (t_arr >= schedule.timesteps)).any():
        raise ValidationError(
            f"timestep out of range [0, {schedule.timesteps})")
    if t_arr.ndim == 1:
        if z0.ndim != 2 or t_arr.shape[0] != z0.shape[0]:
            raise ValidationError("need one timestep per latent row")
        ab = schedule.alpha_bars[t_arr][:, None]
    elif t_arr.ndim == 0:
        ab = schedule.alpha_bars[int(t_arr)]
    else:
        raise ValidationError("t must be a scalar or a 1-d array")
    return np.sqrt(ab) * z0 + np.sqrt(1.0 - ab) * eps
