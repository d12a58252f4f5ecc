"""
Closed-form oracles: diagonal Gaussians under linear diffusion, exact KL and
integral-KL values, exact scores, and the misaligned-support example in which
KL and Jensen-Shannon break down while the integral KL stays finite.

Everything the training module estimates by Monte Carlo is checked against
the functions here.
"""

import math
from dataclasses import dataclass, field
from typing import Optional, Tuple, Union

import numpy as np
from scipy.special import logsumexp, softmax

from .diffusion import DiffusionSchedule, WeightingFn, alpha_sigma, sample_times, weighting
from .exceptions import ShapeMismatchError


@dataclass(frozen=True, eq=False)
class GaussianFamily:
    """
    Diagonal Gaussian N(mean, diag(var)).

    ``mean`` may also be a batch of shape (n, d), one distribution per row;
    ``var`` broadcasts against it.
    """

    mean: np.ndarray
    var: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=np.float64))
        var = np.atleast_1d(np.asarray(self.var, dtype=np.float64))
        try:
            var = np.broadcast_to(var, np.broadcast_shapes(mean.shape, var.shape))
            mean = np.broadcast_to(mean, var.shape)
        except ValueError as exc:
            raise ShapeMismatchError(f"mean shape {mean.shape} and var shape {var.shape} do not match") from exc
        if np.any(~np.isfinite(var)) or np.any(var <= 0):
            raise ValueError("Gaussian variances must be finite and strictly positive")
        object.__setattr__(self, 'mean', mean)
        object.__setattr__(self, 'var', var)

    @classmethod
    def standard(cls, dim: int = 1) -> 'GaussianFamily':
        return cls(np.zeros(dim), np.ones(dim))

    @property
    def dim(self) -> int:
        return self.mean.shape[-1]

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return self.mean + np.sqrt(self.var) * rng.standard_normal((n, self.dim))


@dataclass(frozen=True, eq=False)
class QuadratureGrid:
    """Nodes and weights for integrals over diffusion time."""

    nodes: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=np.float64)
        weights = np.asarray(self.weights, dtype=np.float64)
        if nodes.shape != weights.shape or nodes.ndim != 1:
            raise ShapeMismatchError("Quadrature nodes and weights must be 1-D arrays of equal length")
        if np.any(np.diff(nodes) <= 0):
            raise ValueError("Quadrature nodes must be strictly increasing")
        if np.any(weights <= 0):
            raise ValueError("Quadrature weights must be positive")
        object.__setattr__(self, 'nodes', nodes)
        object.__setattr__(self, 'weights', weights)

    def concat(self, other: 'QuadratureGrid') -> 'QuadratureGrid':
        return QuadratureGrid(np.concatenate([self.nodes, other.nodes]),
                              np.concatenate([self.weights, other.weights]))

    def integrate(self, values) -> float:
        return float(np.sum(self.weights * np.asarray(values, dtype=np.float64)))


def log_time_grid(t_lo: float, t_hi: float, panels: int = 16, order: int = 16) -> QuadratureGrid:
    """
    Composite Gauss-Legendre rule on the log-time axis.

    With u = log t the integral becomes int f(e^u) e^u du; the Jacobian e^u is
    folded into the weights.
    """
    if not 0 < t_lo < t_hi:
        raise ValueError(f"Need 0 < t_lo < t_hi, got [{t_lo}, {t_hi}]")
    base_nodes, base_weights = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(np.log(t_lo), np.log(t_hi), panels + 1)
    nodes, weights = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        half = 0.5 * (hi - lo)
        u = half * base_nodes + 0.5 * (hi + lo)
        nodes.append(np.exp(u))
        weights.append(half * base_weights * np.exp(u))
    return QuadratureGrid(np.concatenate(nodes), np.concatenate(weights))


def schedule_grid(sched: DiffusionSchedule, panels: int = 16, order: int = 16) -> QuadratureGrid:
    """Log-time grid over the schedule's window, split at t = 1 when it lies inside."""
    if sched.t_min < 1.0 < sched.T:
        return log_time_grid(sched.t_min, 1.0, panels, order).concat(log_time_grid(1.0, sched.T, panels, order))
    return log_time_grid(sched.t_min, sched.T, panels, order)


def diffused_gaussian(g: GaussianFamily, sched: DiffusionSchedule, t) -> GaussianFamily:
    """Marginal at time t: N(alpha * mean, alpha^2 * var + sigma^2)."""
    alpha, sigma = alpha_sigma(sched, t)
    if np.ndim(alpha) == 1:
        alpha, sigma = alpha[:, None], sigma[:, None]
    return GaussianFamily(alpha * g.mean, alpha * alpha * g.var + sigma * sigma)


def analytic_score(g: GaussianFamily, x) -> np.ndarray:
    """grad_x log N(x; mean, var) = -(x - mean) / var."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != g.dim:
        raise ShapeMismatchError(f"Point of dimension {x.shape[-1]} for a {g.dim}-dimensional Gaussian")
    return -(x - g.mean) / g.var


def log_density(g: GaussianFamily, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != g.dim:
        raise ShapeMismatchError(f"Point of dimension {x.shape[-1]} for a {g.dim}-dimensional Gaussian")
    return -0.5 * np.sum(np.log(2.0 * np.pi * g.var) + (x - g.mean) ** 2 / g.var, axis=-1)


def gaussian_kl(p: GaussianFamily, q: GaussianFamily):
    """KL(p || q) for diagonal Gaussians, summed over the last axis."""
    if p.dim != q.dim:
        raise ShapeMismatchError(f"KL between Gaussians of dimension {p.dim} and {q.dim}")
    # log(q_var / p_var) + p_var / q_var - 1 written as expm1(u) - u, u = log(p_var / q_var)
    u = np.log(p.var) - np.log(q.var)
    terms = np.expm1(u) - u + (p.mean - q.mean) ** 2 / q.var
    kl = np.maximum(0.5 * np.sum(terms, axis=-1), 0.0)
    return float(kl) if np.ndim(kl) == 0 else kl


def ikl_quadrature(p0: GaussianFamily, q0: GaussianFamily, sched: DiffusionSchedule,
                   w: WeightingFn, grid: Optional[QuadratureGrid] = None) -> float:
    """int w(t) KL(p_t || q_t) dt on the quadrature grid."""
    grid = grid or schedule_grid(sched)
    times = sched.check_window(grid.nodes)
    kl = gaussian_kl(diffused_gaussian(p0, sched, times), diffused_gaussian(q0, sched, times))
    return grid.integrate(weighting(w, times, sched) * kl)


def ikl_monte_carlo(p0: GaussianFamily, q0: GaussianFamily, sched: DiffusionSchedule,
                    w: WeightingFn, n: int, rng: np.random.Generator) -> Tuple[float, float]:
    """Monte Carlo IKL from uniform times and x_t ~ p_t; returns (estimate, standard error)."""
    times = sample_times(sched, rng, n)
    p_t = diffused_gaussian(p0, sched, times)
    q_t = diffused_gaussian(q0, sched, times)
    x = p_t.mean + np.sqrt(p_t.var) * rng.standard_normal(p_t.mean.shape)
    values = sched.window_length * weighting(w, times, sched) * (log_density(p_t, x) - log_density(q_t, x))
    return float(values.mean()), float(values.std(ddof=1) / np.sqrt(n))


# Misaligned supports: P_0 is (0, z) and P_theta is (theta, z), z ~ U[0, 1], under dx = dw.

def misaligned_weight_integral(w: WeightingFn) -> float:
    """int_0^inf w(t) / (2t) dt; only the ramp weighting makes it finite."""
    if w.kind != WeightingFn.RAMP:
        raise ValueError(f"int w(t)/(2t) dt diverges for '{w.kind}' weighting; use the ramp weighting")
    # int_0^1 t/(2t) dt + int_1^inf 1/(2t^2) dt = 1/2 + 1/2
    return w.value * 1.0


def misaligned_ikl(theta: float, w: WeightingFn) -> float:
    """Closed-form IKL between the two misaligned distributions: theta^2 * int w/(2t) dt."""
    return theta * theta * misaligned_weight_integral(w)


def misaligned_ikl_quadrature(theta: float, w: WeightingFn, t_lo: float = 1e-6, t_hi: float = 1e3,
                              panels: int = 16, order: int = 16) -> float:
    """
    The same IKL by quadrature of the Gaussian KL path KL(N(theta, t) || N(0, t)).

    The window (0, inf) is truncated to [t_lo, t_hi]; the head and tail are
    added analytically for the ramp weighting (theta^2 t_lo / 2 and theta^2 / (2 t_hi)).
    """
    misaligned_weight_integral(w)
    sched = DiffusionSchedule(kind=DiffusionSchedule.VE, t_min=t_lo, T=t_hi)
    grid = schedule_grid(sched, panels, order)
    times = grid.nodes[:, None]
    kl = gaussian_kl(GaussianFamily(np.full_like(times, theta), times), GaussianFamily(np.zeros_like(times), times))
    body = grid.integrate(weighting(w, grid.nodes) * kl)
    head = w.value * theta * theta * t_lo / 2.0
    tail = w.value * theta * theta / (2.0 * t_hi)
    return body + head + tail


def misaligned_kl(theta: float) -> float:
    """KL between the misaligned distributions: +inf sentinel off the optimum."""
    return math.inf if theta != 0 else 0.0


def misaligned_js(theta: float) -> float:
    return math.log(2.0) if theta != 0 else 0.0


def divergence_table(theta: float, w: WeightingFn):
    """Rows comparing divergences on the misaligned example."""
    return [
        {'divergence': 'IKL', 'value': misaligned_ikl(theta, w), 'smooth': True, 'note': 'proportional to theta^2'},
        {'divergence': 'KL', 'value': misaligned_kl(theta), 'smooth': False, 'note': '+inf off the optimum'},
        {'divergence': 'Wasserstein', 'value': None, 'smooth': False,
         'note': 'proportional to |theta| (reference only)'},
        {'divergence': 'Jensen-Shannon', 'value': misaligned_js(theta), 'smooth': False,
         'note': 'log 2 off the optimum'},
    ]


@dataclass(frozen=True)
class AffineGaussian:
    """p0 = N(theta, var) against a fixed Gaussian target."""

    var: float = 1.0
    target: GaussianFamily = field(default_factory=GaussianFamily.standard)

    def at(self, theta) -> GaussianFamily:
        mean = np.broadcast_to(np.asarray(theta, dtype=np.float64), self.target.mean.shape)
        return GaussianFamily(mean, np.full(self.target.dim, self.var))


@dataclass(frozen=True)
class MisalignedSupport:
    """The (theta, z) versus (0, z) pair with z ~ U[0, 1]."""


def ikl_grad_oracle(theta, family: Union[AffineGaussian, MisalignedSupport], sched: Optional[DiffusionSchedule],
                    w: WeightingFn, grid: Optional[QuadratureGrid] = None):
    """
    Exact dIKL/dtheta from the closed form.

    AffineGaussian: per coordinate, int w(t) alpha^2 (theta - m) / (alpha^2 v + sigma^2) dt
    with N(m, v) the target. MisalignedSupport: 2 theta int w/(2t) dt.
    """
    if isinstance(family, MisalignedSupport):
        return 2.0 * theta * misaligned_weight_integral(w)

    grid = grid or schedule_grid(sched)
    times = sched.check_window(grid.nodes)
    alpha, sigma = alpha_sigma(sched, times)
    alpha2, sigma2 = (alpha * alpha)[:, None], (sigma * sigma)[:, None]
    target = family.target
    theta_vec = np.broadcast_to(np.asarray(theta, dtype=np.float64), target.mean.shape)
    integrand = alpha2 * (theta_vec - target.mean) / (alpha2 * target.var + sigma2)
    grad = np.sum((grid.weights * weighting(w, times, sched))[:, None] * integrand, axis=0)
    return float(grad[0]) if np.ndim(theta) == 0 else grad


@dataclass(frozen=True, eq=False)
class GaussianScore:
    """Exact score of a diffused Gaussian; a drop-in analytic teacher."""

    family: GaussianFamily
    sched: DiffusionSchedule

    @property
    def data_dim(self) -> int:
        return self.family.dim

    def score(self, x, t) -> np.ndarray:
        return analytic_score(diffused_gaussian(self.family, self.sched, t), x)


@dataclass(frozen=True, eq=False)
class MixtureScore:
    """Exact score of a diffused mixture of isotropic Gaussians sharing one variance."""

    means: np.ndarray
    var: float
    sched: DiffusionSchedule
    weights: Optional[np.ndarray] = None

    def __post_init__(self):
        means = np.atleast_2d(np.asarray(self.means, dtype=np.float64))
        weights = np.full(means.shape[0], 1.0 / means.shape[0]) if self.weights is None else np.asarray(self.weights, dtype=np.float64)
        if weights.shape != (means.shape[0],) or np.any(weights <= 0):
            raise ValueError("Mixture weights must be positive, one per component")
        if self.var <= 0:
            raise ValueError(f"Mixture component variance must be positive, got {self.var}")
        object.__setattr__(self, 'means', means)
        object.__setattr__(self, 'weights', weights / weights.sum())

    @classmethod
    def ring(cls, components: int, radius: float, std: float, sched: DiffusionSchedule) -> 'MixtureScore':
        angles = 2.0 * np.pi * np.arange(components) / components
        means = radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)
        return cls(means, std * std, sched)

    @property
    def data_dim(self) -> int:
        return self.means.shape[1]

    def score(self, x, t) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        batch = x[None, :] if single else x
        if batch.shape[-1] != self.data_dim:
            raise ShapeMismatchError(f"Point of dimension {batch.shape[-1]} for a {self.data_dim}-dimensional mixture")
        alpha, sigma = alpha_sigma(self.sched, t)
        alpha = np.broadcast_to(alpha, (batch.shape[0],))[:, None, None]
        spread = (alpha * alpha * self.var + np.broadcast_to(sigma, (batch.shape[0],))[:, None, None] ** 2)
        diff = batch[:, None, :] - alpha * self.means[None, :, :]
        log_resp = np.log(self.weights)[None, :] - 0.5 * np.sum(diff * diff / spread, axis=-1)
        resp = softmax(log_resp, axis=1)
        out = -np.sum(resp[:, :, None] * diff / spread, axis=1)
        return out[0] if single else out

    def log_density(self, x, t) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        alpha, sigma = alpha_sigma(self.sched, t)
        alpha = np.broadcast_to(alpha, (x.shape[0],))[:, None, None]
        spread = alpha * alpha * self.var + np.broadcast_to(sigma, (x.shape[0],))[:, None, None] ** 2
        diff = x[:, None, :] - alpha * self.means[None, :, :]
        log_comp = -0.5 * np.sum(diff * diff / spread + np.log(2.0 * np.pi * spread), axis=-1)
        return logsumexp(np.log(self.weights)[None, :] + log_comp, axis=1)
