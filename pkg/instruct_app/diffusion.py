"""
Forward diffusion processes with linear drift.

VE: dx = dw, so alpha(t) = 1 and sigma(t) = sqrt(t).
VP: beta(s) rises linearly from beta_min at s = 0 to beta_max at s = T,
alpha(t) = exp(-1/2 * int_0^t beta(s) ds) and sigma^2(t) = 1 - alpha^2(t).

Times may be scalars or one time per batch row; vectors may be single points
of shape (d,) or batches of shape (n, d).
"""

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from django.core.exceptions import ValidationError

from .exceptions import ShapeMismatchError, TimeWindowError

UNIFORM_TIMES = 'uniform'
LOG_UNIFORM_TIMES = 'log_uniform'
TIME_SAMPLING_CHOICES = (UNIFORM_TIMES, LOG_UNIFORM_TIMES)


@dataclass(frozen=True)
class DiffusionSchedule:
    """Coefficient functions and time window of a forward process."""

    VE = 'VE'
    VP = 'VP'
    KIND_CHOICES = (VE, VP)

    kind: str = VE
    sigma_max: Optional[float] = None
    beta_min: float = 0.1
    beta_max: float = 20.0
    t_min: float = 1e-3
    T: Optional[float] = None

    def __post_init__(self):
        if self.kind not in self.KIND_CHOICES:
            raise ValidationError(f"Unknown schedule kind '{self.kind}' (expected VE or VP)")
        if self.t_min <= 0:
            raise ValidationError(f"t_min must be positive, got {self.t_min}")
        if self.beta_min <= 0 or self.beta_max <= 0:
            raise ValidationError("beta_min and beta_max must be positive")
        if self.sigma_max is not None and self.sigma_max <= 0:
            raise ValidationError(f"sigma_max must be positive, got {self.sigma_max}")

        horizon = self.T
        if horizon is None:
            if self.kind == self.VE:
                horizon = self.sigma_max ** 2 if self.sigma_max is not None else 10.0
            else:
                horizon = 1.0
        if horizon <= self.t_min:
            raise ValidationError(f"T must exceed t_min ({horizon} <= {self.t_min})")
        object.__setattr__(self, 'T', float(horizon))
        if self.kind == self.VE and self.sigma_max is None:
            object.__setattr__(self, 'sigma_max', float(np.sqrt(horizon)))

    @property
    def window_length(self) -> float:
        return self.T - self.t_min

    def beta_integral(self, t):
        """int_0^t beta(s) ds for the VP schedule."""
        t = np.asarray(t, dtype=np.float64)
        return self.beta_min * t + 0.5 * (self.beta_max - self.beta_min) * t * t / self.T

    def check_window(self, t) -> np.ndarray:
        times = np.asarray(t, dtype=np.float64)
        if np.any(~np.isfinite(times)) or np.any(times < self.t_min) or np.any(times > self.T):
            raise TimeWindowError(
                f"Diffusion time outside [{self.t_min}, {self.T}]: "
                f"min {np.min(times):.6g}, max {np.max(times):.6g}"
            )
        return times

    def to_dict(self) -> dict:
        return {
            'kind': self.kind,
            'sigma_max': self.sigma_max,
            'beta_min': self.beta_min,
            'beta_max': self.beta_max,
            't_min': self.t_min,
            'T': self.T,
        }


@dataclass(frozen=True)
class WeightingFn:
    """Time weighting w(t) of the score-matching and IKL integrals."""

    RAMP = 'ramp'
    CONSTANT = 'constant'
    SIGMA_SQUARED = 'sigma_squared'
    KIND_CHOICES = (RAMP, CONSTANT, SIGMA_SQUARED)

    kind: str = RAMP
    value: float = 1.0

    def __post_init__(self):
        if self.kind not in self.KIND_CHOICES:
            raise ValidationError(
                f"Unknown weighting '{self.kind}' (expected one of {', '.join(self.KIND_CHOICES)})"
            )
        if self.value <= 0:
            raise ValidationError(f"Weighting level must be positive, got {self.value}")

    def to_dict(self) -> dict:
        return {'kind': self.kind, 'value': self.value}


def _per_row(coef, x: np.ndarray) -> np.ndarray:
    """Broadcast a scalar or per-row coefficient against a point or a batch."""
    coef = np.asarray(coef, dtype=np.float64)
    if coef.ndim == 1 and x.ndim == 2:
        if coef.shape[0] != x.shape[0]:
            raise ShapeMismatchError(f"{coef.shape[0]} times for a batch of {x.shape[0]} rows")
        return coef[:, None]
    return coef


def alpha_sigma(sched: DiffusionSchedule, t) -> Tuple[np.ndarray, np.ndarray]:
    """Scale alpha(t) and noise level sigma(t) of the transition kernel."""
    times = sched.check_window(t)
    if sched.kind == DiffusionSchedule.VE:
        return np.ones_like(times), np.sqrt(times)
    integral = sched.beta_integral(times)
    alpha = np.exp(-0.5 * integral)
    sigma = np.sqrt(-np.expm1(-integral))
    return alpha, sigma


def sigma_to_time(sched: DiffusionSchedule, sigma: float) -> float:
    """Invert sigma(t): the time at which the transition noise level equals ``sigma``."""
    if sigma <= 0:
        raise ValueError(f"Noise level must be positive, got {sigma}")
    if sched.kind == DiffusionSchedule.VE:
        t = sigma * sigma
    else:
        if sigma >= 1.0:
            raise ValueError(f"VP noise levels stay below 1, got {sigma}")
        # beta_min t + (beta_max - beta_min) t^2 / (2T) = -log(1 - sigma^2)
        target = -np.log1p(-sigma * sigma)
        slope = (sched.beta_max - sched.beta_min) / sched.T
        if slope == 0:
            t = target / sched.beta_min
        else:
            t = (-sched.beta_min + np.sqrt(sched.beta_min ** 2 + 2.0 * slope * target)) / slope
    sched.check_window(t)
    return float(t)


def sample_times(sched: DiffusionSchedule, rng: np.random.Generator, n: int,
                 sampling: str = UNIFORM_TIMES) -> np.ndarray:
    """
    Times on [t_min, T]: uniform, or uniform in log t (density proportional to
    1/t, i.e. to 1/sigma^2 under VE), which keeps the small-t end populated.
    """
    if sampling not in TIME_SAMPLING_CHOICES:
        raise ValueError(f"Unknown time sampling '{sampling}' (expected uniform or log_uniform)")
    u = rng.random(n)
    if sampling == LOG_UNIFORM_TIMES:
        return np.clip(sched.t_min * np.exp(u * np.log(sched.T / sched.t_min)), sched.t_min, sched.T)
    return np.minimum(sched.t_min + u * sched.window_length, sched.T)


def sample_transition(sched: DiffusionSchedule, x0, t, noise) -> np.ndarray:
    """x_t = alpha(t) * x0 + sigma(t) * noise."""
    x0 = np.asarray(x0, dtype=np.float64)
    noise = np.asarray(noise, dtype=np.float64)
    if x0.shape != noise.shape:
        raise ShapeMismatchError(f"x0 has shape {x0.shape} but noise has shape {noise.shape}")
    alpha, sigma = alpha_sigma(sched, t)
    return _per_row(alpha, x0) * x0 + _per_row(sigma, x0) * noise


def conditional_score(sched: DiffusionSchedule, x0, x_t, t) -> np.ndarray:
    """grad_{x_t} log q_t(x_t | x0) = (alpha(t) * x0 - x_t) / sigma^2(t)."""
    x0 = np.asarray(x0, dtype=np.float64)
    x_t = np.asarray(x_t, dtype=np.float64)
    if x0.shape != x_t.shape:
        raise ShapeMismatchError(f"x0 has shape {x0.shape} but x_t has shape {x_t.shape}")
    alpha, sigma = alpha_sigma(sched, t)
    return (_per_row(alpha, x0) * x0 - x_t) / _per_row(sigma * sigma, x_t)


def weighting(w: WeightingFn, t, sched: Optional[DiffusionSchedule] = None) -> np.ndarray:
    """Evaluate w(t); ``sigma_squared`` needs the schedule."""
    times = np.asarray(t, dtype=np.float64)
    if np.any(times <= 0):
        raise ValueError("Weighting is only defined for t > 0")
    if w.kind == WeightingFn.RAMP:
        return w.value * np.where(times <= 1.0, times, 1.0 / times)
    if w.kind == WeightingFn.CONSTANT:
        return w.value * np.ones_like(times)
    if sched is None:
        raise ValueError("sigma_squared weighting needs a diffusion schedule")
    _, sigma = alpha_sigma(sched, times)
    return w.value * sigma * sigma


def tweedie_denoise(sched: DiffusionSchedule, x_t, t, score) -> np.ndarray:
    """Posterior-mean estimate of x0: (x_t + sigma^2(t) * score) / alpha(t)."""
    x_t = np.asarray(x_t, dtype=np.float64)
    score = np.asarray(score, dtype=np.float64)
    if x_t.shape != score.shape:
        raise ShapeMismatchError(f"x_t has shape {x_t.shape} but score has shape {score.shape}")
    alpha, sigma = alpha_sigma(sched, t)
    return (x_t + _per_row(sigma * sigma, x_t) * score) / _per_row(alpha, x_t)
