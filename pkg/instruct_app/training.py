"""
Training procedures: denoising score matching for teachers, Diff-Instruct
distillation of one-step generators, and the two special-case gradients
(score distillation on a bare point, KL descent with exact density ratios).

Monte Carlo integrals over diffusion time draw t uniformly on [t_min, T] and
multiply by the window length, so every gradient estimate is unbiased for
int w(t) E[...] dt. Within one estimate the draws happen in a fixed order:
times, then noise vectors, then latents.

Teacher training draws its times from ``TrainConfig.time_sampling``
(log-uniform by default). The sampling density is part of the training
measure and is not divided out: the effective weight per unit time is
w(t) times that density. The auxiliary score inside distillation is fitted
with uniform times, the measure the IKL gradient integrates over.
"""

import logging
import time
from dataclasses import asdict, dataclass
from typing import Callable, List, Optional, Protocol, Sequence, Tuple

import numpy as np
from django.conf import settings
from django.core.exceptions import ValidationError

from .analytic import GaussianFamily, analytic_score
from .diffusion import (LOG_UNIFORM_TIMES, TIME_SAMPLING_CHOICES, UNIFORM_TIMES, DiffusionSchedule, WeightingFn,
                        alpha_sigma, conditional_score, sample_times, sample_transition, weighting)
from .exceptions import DivergenceError, ShapeMismatchError
from .nets import (Generator, ScoreModel, ScoreNet, generate, generator_backward, sample_generator,
                   score_backward, score_eval)
from .tensorgrad import SOFTPLUS, AdamState, adam_step
from .utils.csv_generator import save_metrics_csv
from .utils.energy import energy_distance
from .utils.rng import check_seed, spawn_streams

logger = logging.getLogger(__name__)


class Sampler(Protocol):
    """A data source: ``sample(rng, n)`` returns an (n, dim) array."""

    dim: int

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray: ...


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters of one DSM, Diff-Instruct or SDS run."""

    lr_phi: float = 1e-3
    lr_theta: float = 1e-3
    beta0: float = 0.0
    beta1: float = 0.99
    batch_size: int = 256
    iterations: int = 1000
    phi_steps_per_theta_step: int = 1
    seed: int = 0
    ema_decay: float = 0.999
    log_every: int = 100
    phi_warmup_steps: int = 0
    checkpoint_every: int = 0
    eval_samples: int = 1000
    record_wall_time: bool = False
    time_sampling: str = LOG_UNIFORM_TIMES
    grad_norm_limit: Optional[float] = None
    loss_limit: Optional[float] = None

    def __post_init__(self):
        for name in ('lr_phi', 'lr_theta'):
            if getattr(self, name) <= 0:
                raise ValidationError(f"{name} must be positive, got {getattr(self, name)}")
        if not (0.0 <= self.beta0 < 1.0 and 0.0 <= self.beta1 < 1.0):
            raise ValidationError(f"Adam betas must lie in [0, 1), got ({self.beta0}, {self.beta1})")
        for name in ('batch_size', 'phi_steps_per_theta_step', 'log_every', 'eval_samples'):
            if getattr(self, name) < 1:
                raise ValidationError(f"{name} must be a positive integer, got {getattr(self, name)}")
        for name in ('iterations', 'phi_warmup_steps', 'checkpoint_every'):
            if getattr(self, name) < 0:
                raise ValidationError(f"{name} must not be negative, got {getattr(self, name)}")
        if not 0.0 <= self.ema_decay < 1.0:
            raise ValidationError(f"ema_decay must lie in [0, 1), got {self.ema_decay}")
        if self.time_sampling not in TIME_SAMPLING_CHOICES:
            raise ValidationError(f"Unknown time_sampling '{self.time_sampling}' (expected uniform or log_uniform)")
        try:
            check_seed(self.seed)
        except ValueError as exc:
            raise ValidationError(str(exc)) from exc
        if self.grad_norm_limit is None:
            object.__setattr__(self, 'grad_norm_limit', float(getattr(settings, 'INSTRUCT_GRAD_NORM_LIMIT', 1e4)))
        if self.loss_limit is None:
            object.__setattr__(self, 'loss_limit', float(getattr(settings, 'INSTRUCT_LOSS_LIMIT', 1e6)))

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class MetricsRecord:
    """One metrics CSV row; ``None`` marks a column the run does not measure."""

    iteration: int
    dsm_loss: Optional[float] = None
    instruct_grad_norm: Optional[float] = None
    ikl_estimate: Optional[float] = None
    energy_distance: Optional[float] = None
    wall_seconds: float = 0.0


@dataclass(frozen=True)
class GradientEstimate:
    """A Monte Carlo gradient with per-coordinate standard errors."""

    value: np.ndarray
    stderr: np.ndarray


def _rows(batch, dim: int) -> np.ndarray:
    values = np.asarray(batch, dtype=np.float64)
    if values.ndim == 1:
        values = values.reshape(-1, dim)
    if values.ndim != 2 or values.shape[1] != dim:
        raise ShapeMismatchError(f"Batch of {dim}-dimensional points expected, got shape {np.shape(batch)}")
    if values.shape[0] == 0:
        raise ValueError("Batch must not be empty")
    return values


def _check_loss(loss: float, limit: float, what: str) -> None:
    if not np.isfinite(loss) or loss > limit:
        logger.error("%s diverged: loss %r exceeds limit %g", what, loss, limit)
        raise DivergenceError(f"{what} diverged (loss {loss!r}, limit {limit:g})")


def _check_grad(grad: np.ndarray, limit: float, what: str) -> float:
    norm = float(np.linalg.norm(grad))
    if not np.isfinite(norm) or norm > limit:
        logger.error("%s diverged: gradient norm %r exceeds limit %g", what, norm, limit)
        raise DivergenceError(f"{what} diverged (gradient norm {norm!r}, limit {limit:g})")
    return norm


def _group_estimate(backward_fn: Callable[[slice], np.ndarray], n: int, groups: int) -> GradientEstimate:
    """Sum per-group gradients (in a fixed order) and use their spread for standard errors."""
    if groups < 2 or groups > n:
        raise ValueError(f"groups must lie in [2, batch size], got {groups}")
    bounds = np.linspace(0, n, groups + 1).astype(int)
    parts = np.array([backward_fn(slice(lo, hi)) for lo, hi in zip(bounds[:-1], bounds[1:])])
    sizes = np.diff(bounds)[:, None]
    # each part rescaled to a full-batch estimate
    scaled = parts * (n / sizes)
    return GradientEstimate(parts.sum(axis=0), scaled.std(axis=0, ddof=1) / np.sqrt(groups))


def _mean_estimate(per_sample: np.ndarray) -> GradientEstimate:
    n = per_sample.shape[0]
    stderr = per_sample.std(axis=0, ddof=1) / np.sqrt(n) if n > 1 else np.zeros(per_sample.shape[1])
    return GradientEstimate(per_sample.mean(axis=0), stderr)


# Denoising score matching

def dsm_loss_and_grad(s: ScoreNet, batch_x0, sched: DiffusionSchedule, w: WeightingFn,
                      rng: Optional[np.random.Generator], t=None, noise=None,
                      time_sampling: str = UNIFORM_TIMES) -> Tuple[float, np.ndarray]:
    """
    Weighted denoising score matching loss and its exact parameter gradient.

    One (t, noise) draw per batch element; loss is the batch mean of
    w(t) * |s_phi(x_t, t) - grad log q_t(x_t | x0)|^2, with t drawn by
    ``time_sampling``. Passing ``t`` (scalar or per row) or ``noise`` fixes
    those draws.
    """
    x0 = _rows(batch_x0, s.data_dim)
    n = x0.shape[0]
    times = sample_times(sched, rng, n, time_sampling) if t is None else np.broadcast_to(sched.check_window(t), (n,))
    eps = rng.standard_normal(x0.shape) if noise is None else np.asarray(noise, dtype=np.float64)

    x_t = sample_transition(sched, x0, times, eps)
    residual = score_eval(s, x_t, times) - conditional_score(sched, x0, x_t, times)
    wt = weighting(w, times, sched)
    loss = float(np.mean(wt * np.sum(residual * residual, axis=1)))
    if not np.isfinite(loss):
        logger.error("Non-finite DSM loss on a batch of %d", n)
        raise DivergenceError("Non-finite denoising score matching loss")
    grad = score_backward(s, x_t, times, 2.0 * wt[:, None] * residual / n)
    return loss, grad


def _ema(previous: np.ndarray, current: np.ndarray, decay: float) -> np.ndarray:
    if decay == 0.0:
        return np.array(current)
    return decay * previous + (1.0 - decay) * current


def train_teacher(dataset: Sampler, cfg: TrainConfig, sched: DiffusionSchedule, w: WeightingFn,
                  s0: Optional[ScoreNet] = None, hidden: Sequence[int] = (128, 128),
                  activation: str = SOFTPLUS, metrics_path=None) -> ScoreNet:
    """
    Fit a score network to ``dataset`` by denoising score matching.

    Args:
        dataset: Sampler for training batches; draws from the run's data stream
        cfg: Run hyperparameters; ``cfg.seed`` fixes every random stream
        sched: Forward process
        w: Time weighting of the loss
        s0: Initial network; drawn from the initial-weights stream when omitted
        hidden: Hidden widths used when ``s0`` is omitted
        activation: Hidden activation used when ``s0`` is omitted
        metrics_path: Where to write the metrics CSV, if anywhere

    Returns:
        The network with EMA parameters
    """
    streams = spawn_streams(cfg.seed)
    s = s0 if s0 is not None else ScoreNet.initialize(dataset.dim, hidden, streams.init, activation)
    if s.data_dim != dataset.dim:
        raise ShapeMismatchError(f"Score network of dimension {s.data_dim} for {dataset.dim}-dimensional data")

    records: List[MetricsRecord] = []
    adam = AdamState.for_params(s.net.n_params, cfg.lr_phi, cfg.beta0, cfg.beta1)
    params = np.array(s.net.params)
    ema = np.array(params)
    started = time.perf_counter()
    window_loss = 0.0
    try:
        for it in range(1, cfg.iterations + 1):
            batch = dataset.sample(streams.data, cfg.batch_size)
            loss, grad = dsm_loss_and_grad(s, batch, sched, w, streams.train, time_sampling=cfg.time_sampling)
            _check_loss(loss, cfg.loss_limit, "Teacher training")
            grad_norm = _check_grad(grad, cfg.grad_norm_limit, "Teacher training")
            params, adam = adam_step(adam, params, grad)
            s = s.with_params(params)
            ema = _ema(ema, params, cfg.ema_decay)
            window_loss += loss

            if it % cfg.log_every == 0 or it == cfg.iterations:
                span = cfg.log_every if it % cfg.log_every == 0 else it % cfg.log_every
                elapsed = time.perf_counter() - started
                records.append(MetricsRecord(
                    iteration=it,
                    dsm_loss=window_loss / span,
                    instruct_grad_norm=grad_norm,
                    wall_seconds=elapsed if cfg.record_wall_time else 0.0,
                ))
                logger.info("Teacher iteration %d/%d: dsm_loss %.6g (%.1fs)",
                            it, cfg.iterations, window_loss / span, elapsed)
                window_loss = 0.0
    finally:
        if metrics_path is not None:
            save_metrics_csv(records, metrics_path)

    if cfg.iterations == 0:
        return s
    return s.with_params(ema)


# IKL gradient and distillation

def _instruct_terms(g: Generator, s_phi: ScoreModel, s_teacher: ScoreModel, sched: DiffusionSchedule,
                    w: WeightingFn, batch: int, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """Latents and the per-row output gradients whose pullback through g is the IKL gradient."""
    if not (s_phi.data_dim == s_teacher.data_dim == g.data_dim):
        raise ShapeMismatchError(
            f"Generator ({g.data_dim}), auxiliary score ({s_phi.data_dim}) and teacher "
            f"({s_teacher.data_dim}) dimensions differ"
        )
    times = sample_times(sched, rng, batch)
    eps = rng.standard_normal((batch, g.data_dim))
    z = g.sample_latents(rng, batch)
    x_t = sample_transition(sched, generate(g, z), times, eps)
    # score difference is a constant w.r.t. theta
    diff = s_phi.score(x_t, times) - s_teacher.score(x_t, times)
    alpha, _ = alpha_sigma(sched, times)
    coef = sched.window_length * weighting(w, times, sched) * alpha / batch
    return z, coef[:, None] * diff


def instruct_grad_theta(g: Generator, s_phi: ScoreModel, s_teacher: ScoreModel, sched: DiffusionSchedule,
                        w: WeightingFn, batch: int, rng: np.random.Generator) -> np.ndarray:
    """
    Monte Carlo estimate of the IKL gradient in theta:
    int w(t) E[(s_phi(x_t, t) - s_teacher(x_t, t)) . d x_t / d theta] dt.
    """
    z, output_grad = _instruct_terms(g, s_phi, s_teacher, sched, w, batch, rng)
    grad = generator_backward(g, z, output_grad)
    if not np.all(np.isfinite(grad)):
        raise DivergenceError("Non-finite Diff-Instruct gradient")
    return grad


def instruct_grad_theta_estimate(g: Generator, s_phi: ScoreModel, s_teacher: ScoreModel,
                                 sched: DiffusionSchedule, w: WeightingFn, batch: int,
                                 rng: np.random.Generator, groups: int = 50) -> GradientEstimate:
    """Same draws as instruct_grad_theta, plus batch-means standard errors."""
    z, output_grad = _instruct_terms(g, s_phi, s_teacher, sched, w, batch, rng)
    return _group_estimate(lambda rows: generator_backward(g, z[rows], output_grad[rows]), batch, groups)


def bump_schedule(sched: DiffusionSchedule, width: float) -> Tuple[DiffusionSchedule, WeightingFn]:
    """
    A window [t_min, t_min + width] with weighting 1/width: unit mass just above t_min.

    VP schedules keep their beta(s) line, so only the window shrinks.
    """
    if width <= 0:
        raise ValueError(f"Bump width must be positive, got {width}")
    horizon = sched.t_min + width
    beta_max = sched.beta_max
    if sched.kind == DiffusionSchedule.VP:
        beta_max = sched.beta_min + (sched.beta_max - sched.beta_min) * horizon / sched.T
    bumped = DiffusionSchedule(sched.kind, None, sched.beta_min, beta_max, sched.t_min, horizon)
    return bumped, WeightingFn(WeightingFn.CONSTANT, 1.0 / width)


def diff_instruct(g0: Generator, teacher: ScoreModel, cfg: TrainConfig, sched: DiffusionSchedule,
                  w: WeightingFn, s_phi: Optional[ScoreNet] = None,
                  phi_oracle: Optional[Callable[[Generator], ScoreModel]] = None,
                  phi_hidden: Sequence[int] = (128, 128), reference=None,
                  exact_ikl: Optional[Callable[[Generator], float]] = None,
                  metrics_path=None,
                  checkpoint_fn: Optional[Callable[[Generator, int], None]] = None) -> Generator:
    """
    Distill ``teacher`` into the one-step generator ``g0``.

    Each theta step is preceded by ``cfg.phi_steps_per_theta_step`` DSM updates
    of the auxiliary score network on fresh generator samples, then theta moves
    along instruct_grad_theta with Adam.

    Args:
        g0: Initial generator
        teacher: Trained ScoreNet or analytic score oracle
        cfg: Run hyperparameters
        sched: Forward process
        w: Time weighting
        s_phi: Initial auxiliary score network; defaults to a copy of a ScoreNet
            teacher, or to a fresh network warmed up on g0 for an analytic teacher
        phi_oracle: Exact score of the current generator's diffused output; when
            given, no auxiliary network is trained
        phi_hidden: Hidden widths of a freshly initialized auxiliary network
        reference: Held-out data; fills the energy_distance column
        exact_ikl: Exact IKL of a generator; fills the ikl_estimate column
        metrics_path: Where to write the metrics CSV, if anywhere
        checkpoint_fn: Called with the EMA generator and iteration every
            ``cfg.checkpoint_every`` steps and before a divergence is re-raised

    Returns:
        The EMA generator (``g0`` itself for zero iterations)
    """
    if teacher.data_dim != g0.data_dim:
        raise ShapeMismatchError(f"Teacher of dimension {teacher.data_dim} for a {g0.data_dim}-dimensional generator")
    if cfg.iterations == 0:
        return g0

    streams = spawn_streams(cfg.seed)
    rng = streams.train
    warmup = 0
    if phi_oracle is None and s_phi is None:
        if isinstance(teacher, ScoreNet):
            s_phi = teacher.with_params(np.array(teacher.net.params))
        else:
            s_phi = ScoreNet.initialize(g0.data_dim, phi_hidden, streams.init)
            warmup = cfg.phi_warmup_steps
    reference = None if reference is None else _rows(reference, g0.data_dim)

    g = g0
    theta = np.array(g.params)
    ema = np.array(theta)
    adam_theta = AdamState.for_params(theta.size, cfg.lr_theta, cfg.beta0, cfg.beta1)
    if s_phi is not None:
        phi = np.array(s_phi.net.params)
        adam_phi = AdamState.for_params(phi.size, cfg.lr_phi, cfg.beta0, cfg.beta1)

    def phi_step(current: Generator):
        nonlocal s_phi, phi, adam_phi
        x0 = sample_generator(current, rng, cfg.batch_size)
        loss, grad = dsm_loss_and_grad(s_phi, x0, sched, w, rng)
        _check_loss(loss, cfg.loss_limit, "Auxiliary score training")
        _check_grad(grad, cfg.grad_norm_limit, "Auxiliary score training")
        phi, adam_phi = adam_step(adam_phi, phi, grad)
        s_phi = s_phi.with_params(phi)
        return loss

    records: List[MetricsRecord] = []
    started = time.perf_counter()
    it = 0
    try:
        for _ in range(warmup):
            phi_step(g)
        if warmup:
            logger.info("Warmed up the auxiliary score network for %d steps", warmup)

        for it in range(1, cfg.iterations + 1):
            dsm_loss = None
            if phi_oracle is not None:
                current_phi = phi_oracle(g)
            else:
                for _ in range(cfg.phi_steps_per_theta_step):
                    dsm_loss = phi_step(g)
                current_phi = s_phi

            grad = instruct_grad_theta(g, current_phi, teacher, sched, w, cfg.batch_size, rng)
            grad_norm = _check_grad(grad, cfg.grad_norm_limit, "Diff-Instruct")
            theta, adam_theta = adam_step(adam_theta, theta, grad)
            g = g.with_params(theta)
            ema = _ema(ema, theta, cfg.ema_decay)

            if it % cfg.log_every == 0 or it == cfg.iterations:
                averaged = g.with_params(ema)
                elapsed = time.perf_counter() - started
                distance = None
                if reference is not None:
                    samples = sample_generator(averaged, streams.eval, min(cfg.eval_samples, reference.shape[0]))
                    distance = energy_distance(samples, reference)
                records.append(MetricsRecord(
                    iteration=it,
                    dsm_loss=dsm_loss,
                    instruct_grad_norm=grad_norm,
                    ikl_estimate=None if exact_ikl is None else float(exact_ikl(averaged)),
                    energy_distance=distance,
                    wall_seconds=elapsed if cfg.record_wall_time else 0.0,
                ))
                logger.info("Diff-Instruct iteration %d/%d: grad norm %.4g, energy distance %s (%.1fs)",
                            it, cfg.iterations, grad_norm,
                            'n/a' if distance is None else f'{distance:.4g}', elapsed)
            if checkpoint_fn is not None and cfg.checkpoint_every and it % cfg.checkpoint_every == 0:
                checkpoint_fn(g.with_params(ema), it)
    except DivergenceError:
        if checkpoint_fn is not None:
            logger.warning("Saving the last finite generator (iteration %d) before aborting", max(it - 1, 0))
            checkpoint_fn(g.with_params(ema), max(it - 1, 0))
        raise
    finally:
        if metrics_path is not None:
            save_metrics_csv(records, metrics_path)

    return g.with_params(ema)


# Point distillation (SDS)

class EpsilonModel:
    """Noise-prediction view of a score model: eps(x, t) = -sigma(t) * s(x, t)."""

    def __init__(self, score_model: ScoreModel, sched: DiffusionSchedule):
        self.score_model = score_model
        self.sched = sched

    @property
    def data_dim(self) -> int:
        return self.score_model.data_dim

    def predict(self, x, t) -> np.ndarray:
        _, sigma = alpha_sigma(self.sched, t)
        sigma = np.asarray(sigma)
        return -(sigma[:, None] if sigma.ndim == 1 else sigma) * self.score_model.score(x, t)


def _point_draws(point, dim: int, sched: DiffusionSchedule, batch: int, rng: np.random.Generator):
    """Times, noise and x_t = alpha * point + sigma * eps for a deterministic generator."""
    point = np.atleast_1d(np.asarray(point, dtype=np.float64))
    if point.shape != (dim,):
        raise ShapeMismatchError(f"Point of shape {point.shape} for a {dim}-dimensional teacher")
    times = sample_times(sched, rng, batch)
    eps = rng.standard_normal((batch, dim))
    alpha, sigma = alpha_sigma(sched, times)
    x_t = alpha[:, None] * point + sigma[:, None] * eps
    return times, eps, alpha, sigma, x_t


def _sds_per_sample(point, teacher: ScoreModel, sched: DiffusionSchedule, w: WeightingFn, batch: int,
                    rng: np.random.Generator) -> np.ndarray:
    times, eps, alpha, sigma, x_t = _point_draws(point, teacher.data_dim, sched, batch, rng)
    diff = -eps / sigma[:, None] - teacher.score(x_t, times)
    per_sample = (sched.window_length * weighting(w, times, sched) * alpha)[:, None] * diff
    if not np.all(np.isfinite(per_sample)):
        raise DivergenceError("Non-finite score distillation gradient")
    return per_sample


def sds_grad_theta(point, teacher: ScoreModel, sched: DiffusionSchedule, w: WeightingFn, batch: int,
                   rng: np.random.Generator) -> np.ndarray:
    """
    Gradient for a generator that emits the single point theta:
    int w(t) E[(-eps / sigma(t) - s_teacher(x_t, t)) * alpha(t)] dt.
    """
    return _sds_per_sample(point, teacher, sched, w, batch, rng).mean(axis=0)


def sds_grad_theta_estimate(point, teacher: ScoreModel, sched: DiffusionSchedule, w: WeightingFn,
                            batch: int, rng: np.random.Generator) -> GradientEstimate:
    return _mean_estimate(_sds_per_sample(point, teacher, sched, w, batch, rng))


def sds_grad_theta_eps(point, eps_model: EpsilonModel, sched: DiffusionSchedule, w: WeightingFn,
                       batch: int, rng: np.random.Generator) -> np.ndarray:
    """The same gradient written with a noise predictor: alpha (eps_q(x_t, t) - eps) / sigma."""
    times, eps, alpha, sigma, x_t = _point_draws(point, eps_model.data_dim, sched, batch, rng)
    diff = (eps_model.predict(x_t, times) - eps) / sigma[:, None]
    per_sample = (sched.window_length * weighting(w, times, sched) * alpha)[:, None] * diff
    return per_sample.mean(axis=0)


def run_sds(point, teacher: ScoreModel, sched: DiffusionSchedule, w: WeightingFn, cfg: TrainConfig,
            metrics_path=None) -> Tuple[np.ndarray, np.ndarray]:
    """
    Adam descent of a bare point along the score distillation gradient.

    Returns:
        (final point, trajectory of shape (iterations + 1, d))
    """
    rng = spawn_streams(cfg.seed).train
    theta = np.atleast_1d(np.array(point, dtype=np.float64))
    adam = AdamState.for_params(theta.size, cfg.lr_theta, cfg.beta0, cfg.beta1)
    trajectory = [np.array(theta)]
    records: List[MetricsRecord] = []
    started = time.perf_counter()
    try:
        for it in range(1, cfg.iterations + 1):
            grad = sds_grad_theta(theta, teacher, sched, w, cfg.batch_size, rng)
            grad_norm = _check_grad(grad, cfg.grad_norm_limit, "Score distillation")
            theta, adam = adam_step(adam, theta, grad)
            trajectory.append(np.array(theta))
            if it % cfg.log_every == 0 or it == cfg.iterations:
                elapsed = time.perf_counter() - started
                records.append(MetricsRecord(iteration=it, instruct_grad_norm=grad_norm,
                                             wall_seconds=elapsed if cfg.record_wall_time else 0.0))
                logger.info("SDS iteration %d/%d: point %s", it, cfg.iterations, np.array2string(theta, precision=4))
    finally:
        if metrics_path is not None:
            save_metrics_csv(records, metrics_path)
    return theta, np.array(trajectory)


# KL descent with exact density ratios

def _gan_terms(g: Generator, p_d: GaussianFamily, p_g: GaussianFamily, batch: int,
               rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    if not (p_d.dim == p_g.dim == g.data_dim):
        raise ShapeMismatchError(f"Densities of dimension {p_d.dim} and {p_g.dim} for a {g.data_dim}-dimensional generator")
    z = g.sample_latents(rng, batch)
    x = generate(g, z)
    diff = analytic_score(p_g, x) - analytic_score(p_d, x)
    if not np.all(np.isfinite(diff)):
        raise DivergenceError("Density score evaluation produced non-finite values")
    return z, diff / batch


def gan_kl_grad_theta(g: Generator, p_d: GaussianFamily, p_g: GaussianFamily, batch: int,
                      rng: np.random.Generator) -> np.ndarray:
    """
    E_z[(s_g(x) - s_d(x)) . dx / dtheta] at x = g(z): the descent direction of
    KL(p_g || p_d) that a perfect discriminator's log density ratio provides.
    """
    z, output_grad = _gan_terms(g, p_d, p_g, batch, rng)
    return generator_backward(g, z, output_grad)


def gan_kl_grad_theta_estimate(g: Generator, p_d: GaussianFamily, p_g: GaussianFamily, batch: int,
                               rng: np.random.Generator, groups: int = 50) -> GradientEstimate:
    z, output_grad = _gan_terms(g, p_d, p_g, batch, rng)
    return _group_estimate(lambda rows: generator_backward(g, z[rows], output_grad[rows]), batch, groups)
