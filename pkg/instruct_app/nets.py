"""
Score network s_phi(x, t) and one-step generator g_theta(z) on top of tensorgrad.

The score network sees the data point concatenated with log(t). A generator is
either a plain MLP from latent to data space, or a Tweedie generator
initialized from a teacher's data-prediction transform at a fixed time t*:

    g(z) = (z + sigma^2(t*) * net([z, log t*])) / alpha(t*)              (ScoreNet teacher)
    g(z) = (z + sigma^2(t*) * [s_q(z, t*) + net(z)]) / alpha(t*)         (analytic teacher)

In the first form the net starts as a copy of the teacher's weights; in the
second the teacher stays frozen and the correction net starts at zero.
"""

from dataclasses import dataclass
from typing import Optional, Protocol, Sequence, Tuple, runtime_checkable

import numpy as np

from .analytic import GaussianFamily
from .diffusion import DiffusionSchedule, alpha_sigma
from .exceptions import ShapeMismatchError, TimeWindowError
from .tensorgrad import SOFTPLUS, MlpNet, backward, forward


@runtime_checkable
class ScoreModel(Protocol):
    """Anything that evaluates a time-indexed score: trained networks or analytic oracles."""

    @property
    def data_dim(self) -> int: ...

    def score(self, x, t) -> np.ndarray: ...


def _as_rows(x, dim: int, what: str) -> Tuple[np.ndarray, bool]:
    values = np.asarray(x, dtype=np.float64)
    single = values.ndim == 1
    batch = values[None, :] if single else values
    if batch.ndim != 2 or batch.shape[1] != dim:
        raise ShapeMismatchError(f"{what} expects vectors of length {dim}, got array of shape {values.shape}")
    return batch, single


@dataclass(frozen=True, eq=False)
class ScoreNet:
    """MLP score model over (x, log t)."""

    net: MlpNet
    data_dim: int

    def __post_init__(self):
        if self.net.input_dim != self.data_dim + 1 or self.net.output_dim != self.data_dim:
            raise ShapeMismatchError(
                f"Score network for {self.data_dim}-dimensional data needs layer sizes "
                f"[{self.data_dim + 1}, ..., {self.data_dim}], got {list(self.net.layer_sizes)}"
            )

    @classmethod
    def initialize(cls, data_dim: int, hidden: Sequence[int], rng: np.random.Generator,
                   activation: str = SOFTPLUS) -> 'ScoreNet':
        sizes = [data_dim + 1, *hidden, data_dim]
        return cls(MlpNet.initialize(sizes, rng, activation), data_dim)

    def features(self, x, t) -> Tuple[np.ndarray, bool]:
        batch, single = _as_rows(x, self.data_dim, "Score network")
        times = np.asarray(t, dtype=np.float64)
        if np.any(~np.isfinite(times)) or np.any(times <= 0):
            raise TimeWindowError("Score network needs strictly positive, finite times")
        log_t = np.broadcast_to(np.log(times), (batch.shape[0],))
        return np.column_stack([batch, log_t]), single

    def score(self, x, t) -> np.ndarray:
        return score_eval(self, x, t)

    def with_params(self, params) -> 'ScoreNet':
        return ScoreNet(self.net.with_params(params), self.data_dim)


def score_eval(s: ScoreNet, x, t) -> np.ndarray:
    """s_phi(x, t) for one point or a batch (one time per row or a shared time)."""
    inputs, single = s.features(x, t)
    out = forward(s.net, inputs)
    return out[0] if single else out


def score_backward(s: ScoreNet, x, t, output_grad) -> np.ndarray:
    """Parameter gradient of <output_grad, s_phi(x, t)>, summed over the batch."""
    inputs, single = s.features(x, t)
    grad_out = np.asarray(output_grad, dtype=np.float64)
    if single and grad_out.ndim == 1:
        grad_out = grad_out[None, :]
    param_grad, _ = backward(s.net, inputs, grad_out)
    return param_grad


@dataclass(frozen=True, eq=False)
class TweedieHead:
    """Data-prediction transform at a fixed time t*; ``anchor`` is a frozen analytic teacher."""

    t_star: float
    scale: float
    alpha: float
    anchor: Optional[ScoreModel] = None


@dataclass(frozen=True, eq=False)
class Generator:
    """Implicit generator x = g_theta(z) with latent prior N(0, latent_sigma^2 I)."""

    net: MlpNet
    latent_dim: int
    latent_sigma: float = 1.0
    data_dim: Optional[int] = None
    tweedie: Optional[TweedieHead] = None

    def __post_init__(self):
        if self.latent_dim <= 0:
            raise ValueError(f"latent_dim must be positive, got {self.latent_dim}")
        if self.latent_sigma <= 0:
            raise ValueError(f"latent_sigma must be positive, got {self.latent_sigma}")
        data_dim = self.net.output_dim if self.data_dim is None else int(self.data_dim)
        object.__setattr__(self, 'data_dim', data_dim)

        expected_input = self.latent_dim
        if self.tweedie is not None:
            if self.latent_dim != data_dim:
                raise ShapeMismatchError(
                    f"A Tweedie generator maps data space to itself, got latent_dim {self.latent_dim} "
                    f"and data_dim {data_dim}"
                )
            if self.tweedie.anchor is None:
                expected_input += 1
        if self.net.input_dim != expected_input or self.net.output_dim != data_dim:
            raise ShapeMismatchError(
                f"Generator network must map {expected_input} -> {data_dim}, "
                f"got layer sizes {list(self.net.layer_sizes)}"
            )

    @property
    def params(self) -> np.ndarray:
        return self.net.params

    def with_params(self, params) -> 'Generator':
        return Generator(self.net.with_params(params), self.latent_dim, self.latent_sigma,
                         self.data_dim, self.tweedie)

    def net_input(self, z) -> Tuple[np.ndarray, bool]:
        batch, single = _as_rows(z, self.latent_dim, "Generator")
        if self.tweedie is not None and self.tweedie.anchor is None:
            log_t = np.full(batch.shape[0], np.log(self.tweedie.t_star))
            return np.column_stack([batch, log_t]), single
        return batch, single

    def sample_latents(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return self.latent_sigma * rng.standard_normal((n, self.latent_dim))


def generate(g: Generator, z) -> np.ndarray:
    """Map latent vectors to data space."""
    inputs, single = g.net_input(z)
    out = forward(g.net, inputs)
    head = g.tweedie
    if head is not None:
        latents = inputs[:, :g.latent_dim]
        if head.anchor is not None:
            out = out + head.anchor.score(latents, head.t_star)
        out = (latents + head.scale * out) / head.alpha
    return out[0] if single else out


def generator_backward(g: Generator, z, output_grad) -> np.ndarray:
    """Parameter gradient of <output_grad, g_theta(z)>, summed over the batch."""
    inputs, single = g.net_input(z)
    grad_out = np.asarray(output_grad, dtype=np.float64)
    if single and grad_out.ndim == 1:
        grad_out = grad_out[None, :]
    if g.tweedie is not None:
        grad_out = grad_out * (g.tweedie.scale / g.tweedie.alpha)
    param_grad, _ = backward(g.net, inputs, grad_out)
    return param_grad


def sample_generator(g: Generator, rng: np.random.Generator, n: int) -> np.ndarray:
    return generate(g, g.sample_latents(rng, n))


def affine_generator(mean, scale, latent_sigma: float = 1.0) -> Generator:
    """g(z) = mean + scale * z elementwise, as a one-layer network (weights diag(scale), bias mean)."""
    mean = np.atleast_1d(np.asarray(mean, dtype=np.float64))
    scale = np.broadcast_to(np.asarray(scale, dtype=np.float64), mean.shape)
    dim = mean.size
    params = np.concatenate([np.diag(scale).ravel(), mean])
    return Generator(MlpNet((dim, dim), params), dim, latent_sigma)


def affine_bias_slice(dim: int) -> slice:
    """Position of the bias (the mean) in an affine generator's parameter vector."""
    return slice(dim * dim, dim * dim + dim)


def init_generator_from_teacher(teacher: ScoreModel, sched: DiffusionSchedule, t_star: float,
                                rng: Optional[np.random.Generator] = None,
                                correction_hidden: Sequence[int] = (64, 64)) -> Generator:
    """
    Generator whose initial map is z -> (z + sigma^2(t*) s_teacher(z, t*)) / alpha(t*),
    with latent prior N(0, sigma^2(t*) I).

    A ScoreNet teacher is unrolled into a trainable copy of its network; an
    analytic teacher stays frozen next to a zero-initialized correction net
    (``rng`` draws its hidden weights).
    """
    alpha, sigma = alpha_sigma(sched, t_star)
    alpha, sigma = float(alpha), float(sigma)
    dim = teacher.data_dim
    if isinstance(teacher, ScoreNet):
        head = TweedieHead(float(t_star), sigma * sigma, alpha)
        net = teacher.net.with_params(np.array(teacher.net.params))
    else:
        if rng is None:
            raise ValueError("An analytic teacher needs a random stream for the correction network")
        head = TweedieHead(float(t_star), sigma * sigma, alpha, anchor=teacher)
        net = MlpNet.initialize([dim, *correction_hidden, dim], rng, zero_output=True)
    return Generator(net, dim, sigma, dim, head)


def pushforward_gaussian(g: Generator) -> GaussianFamily:
    """
    Marginals of an affine generator's output, N(b, latent_sigma^2 * sum_i W_i^2).

    Exact for one-layer generators with diagonal weights, which is how the
    affine oracle cases are built.
    """
    if len(g.net.layer_sizes) != 2 or g.tweedie is not None:
        raise ValueError("Only one-layer generators without a Tweedie head have a Gaussian pushforward")
    weight, bias = next(g.net.layers())
    var = g.latent_sigma ** 2 * np.sum(weight * weight, axis=0)
    return GaussianFamily(np.array(bias), np.maximum(var, np.finfo(np.float64).tiny))
