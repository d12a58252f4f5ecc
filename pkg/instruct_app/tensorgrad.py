"""
Dense multi-layer perceptrons with hand-written reverse-mode differentiation,
the Adam optimizer and a central finite-difference gradient checker.

Parameter layout, per layer in order: the weight matrix of shape
(fan_in, fan_out) flattened row-major, then the bias vector of length fan_out.
A layer computes ``h @ W + b``; hidden layers apply the activation, the output
layer is the identity.

Every operation accepts a single input vector of shape (d,) or a batch of
shape (n, d). Parameter gradients from a batch are summed over its rows.
"""

import logging
from dataclasses import dataclass, replace
from typing import Callable, Iterator, Sequence, Tuple

import numpy as np
from scipy.special import expit

from .exceptions import DivergenceError, ShapeMismatchError

logger = logging.getLogger(__name__)

SOFTPLUS = 'softplus'
TANH = 'tanh'
ACTIVATIONS = (SOFTPLUS, TANH)


def param_count(layer_sizes: Sequence[int]) -> int:
    """Number of parameters of an MLP with the given layer sizes."""
    sizes = list(layer_sizes)
    return sum(fan_in * fan_out + fan_out for fan_in, fan_out in zip(sizes[:-1], sizes[1:]))


def _activate(kind: str, z: np.ndarray) -> np.ndarray:
    if kind == SOFTPLUS:
        return np.logaddexp(0.0, z)
    return np.tanh(z)


def _activate_grad(kind: str, z: np.ndarray, a: np.ndarray) -> np.ndarray:
    if kind == SOFTPLUS:
        return expit(z)
    return 1.0 - a * a


@dataclass(frozen=True, eq=False)
class MlpNet:
    """Feed-forward network with a flat, read-only parameter vector."""

    layer_sizes: Tuple[int, ...]
    params: np.ndarray
    activation: str = SOFTPLUS

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        if len(sizes) < 2 or any(s <= 0 for s in sizes):
            raise ValueError(f"layer_sizes must hold at least two positive integers, got {list(self.layer_sizes)}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"Unknown activation '{self.activation}' (expected one of {', '.join(ACTIVATIONS)})")

        params = np.array(self.params, dtype=np.float64).ravel()
        expected = param_count(sizes)
        if params.size != expected:
            raise ShapeMismatchError(
                f"layer_sizes {list(sizes)} need {expected} parameters, got {params.size}"
            )
        if not np.all(np.isfinite(params)):
            raise ValueError("MLP parameters must all be finite")
        params.setflags(write=False)

        object.__setattr__(self, 'layer_sizes', sizes)
        object.__setattr__(self, 'params', params)

    @classmethod
    def initialize(cls, layer_sizes: Sequence[int], rng: np.random.Generator,
                   activation: str = SOFTPLUS, zero_output: bool = False) -> 'MlpNet':
        """
        Glorot-normal weights and zero biases.

        Args:
            layer_sizes: Input, hidden and output widths
            rng: Random stream used for the weights
            activation: Hidden-layer activation
            zero_output: Zero the output layer so the network starts as the zero map
        """
        sizes = [int(s) for s in layer_sizes]
        chunks = []
        for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            last = i == len(sizes) - 2
            if last and zero_output:
                weights = np.zeros(fan_in * fan_out)
            else:
                weights = rng.standard_normal(fan_in * fan_out) * np.sqrt(2.0 / (fan_in + fan_out))
            chunks.extend([weights, np.zeros(fan_out)])
        return cls(tuple(sizes), np.concatenate(chunks), activation)

    @classmethod
    def zeros(cls, layer_sizes: Sequence[int], activation: str = SOFTPLUS) -> 'MlpNet':
        return cls(tuple(layer_sizes), np.zeros(param_count(layer_sizes)), activation)

    @property
    def input_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def output_dim(self) -> int:
        return self.layer_sizes[-1]

    @property
    def n_params(self) -> int:
        return self.params.size

    def layers(self) -> Iterator[Tuple[np.ndarray, np.ndarray]]:
        """Yield (weight, bias) views for each layer."""
        offset = 0
        for fan_in, fan_out in zip(self.layer_sizes[:-1], self.layer_sizes[1:]):
            weight = self.params[offset:offset + fan_in * fan_out].reshape(fan_in, fan_out)
            offset += fan_in * fan_out
            bias = self.params[offset:offset + fan_out]
            offset += fan_out
            yield weight, bias

    def with_params(self, params: Sequence[float]) -> 'MlpNet':
        return MlpNet(self.layer_sizes, params, self.activation)

    def to_dict(self) -> dict:
        return {
            'layer_sizes': list(self.layer_sizes),
            'activation': self.activation,
            'params': [float(v) for v in self.params],
        }

    @classmethod
    def from_dict(cls, data: dict) -> 'MlpNet':
        return cls(tuple(data['layer_sizes']), data['params'], data.get('activation', SOFTPLUS))


def _as_batch(net: MlpNet, x) -> Tuple[np.ndarray, bool]:
    values = np.asarray(x, dtype=np.float64)
    single = values.ndim == 1
    batch = values[None, :] if single else values
    if batch.ndim != 2 or batch.shape[1] != net.input_dim:
        raise ShapeMismatchError(
            f"Network expects inputs of length {net.input_dim}, got array of shape {values.shape}"
        )
    return batch, single


def _trace(net: MlpNet, batch: np.ndarray):
    """Forward pass keeping pre-activations and layer outputs for backward."""
    layers = list(net.layers())
    pre, post = [], [batch]
    h = batch
    for i, (weight, bias) in enumerate(layers):
        z = h @ weight + bias
        h = z if i == len(layers) - 1 else _activate(net.activation, z)
        pre.append(z)
        post.append(h)
    return layers, pre, post


def forward(net: MlpNet, x) -> np.ndarray:
    """Evaluate the network on one input vector or a batch of rows."""
    batch, single = _as_batch(net, x)
    _, _, post = _trace(net, batch)
    out = post[-1]
    return out[0] if single else out


def backward(net: MlpNet, x, output_grad) -> Tuple[np.ndarray, np.ndarray]:
    """
    Reverse-mode derivative of ``<output_grad, forward(net, x)>``.

    Returns:
        (param_grad, input_grad): param_grad is flat in the parameter layout and
        summed over the batch; input_grad has the shape of ``x``.
    """
    batch, single = _as_batch(net, x)
    grad_out = np.asarray(output_grad, dtype=np.float64)
    if single:
        grad_out = grad_out[None, :] if grad_out.ndim == 1 else grad_out
    if grad_out.shape != (batch.shape[0], net.output_dim):
        raise ShapeMismatchError(
            f"output_grad must have shape {(batch.shape[0], net.output_dim)}, got {np.shape(output_grad)}"
        )

    layers, pre, post = _trace(net, batch)
    last = len(layers) - 1
    grads = [None] * len(layers)
    delta = grad_out
    for i in range(last, -1, -1):
        weight, _ = layers[i]
        if i != last:
            delta = delta * _activate_grad(net.activation, pre[i], post[i + 1])
        grads[i] = (post[i].T @ delta, delta.sum(axis=0))
        delta = delta @ weight.T

    param_grad = np.concatenate([np.concatenate([g_w.ravel(), g_b]) for g_w, g_b in grads])
    input_grad = delta[0] if single else delta
    return param_grad, input_grad


def finite_diff_grad(f: Callable[[np.ndarray], float], params: Sequence[float], h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a scalar function of a parameter vector."""
    if h <= 0:
        raise ValueError(f"Finite-difference step must be positive, got {h}")
    base = np.array(params, dtype=np.float64)
    flat = base.ravel()
    grad = np.empty_like(flat)
    for i in range(flat.size):
        step = np.zeros_like(flat)
        step[i] = h
        up = float(f((flat + step).reshape(base.shape)))
        down = float(f((flat - step).reshape(base.shape)))
        grad[i] = (up - down) / (2.0 * h)
    return grad.reshape(base.shape)


@dataclass(frozen=True, eq=False)
class AdamState:
    """Moments and hyperparameters of one Adam optimizer."""

    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int = 0
    lr: float = 1e-3
    beta0: float = 0.0
    beta1: float = 0.99
    eps: float = 1e-8

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError(f"Adam learning rate must be positive, got {self.lr}")
        if not (0.0 <= self.beta0 < 1.0 and 0.0 <= self.beta1 < 1.0):
            raise ValueError(f"Adam betas must lie in [0, 1), got ({self.beta0}, {self.beta1})")
        if self.eps <= 0:
            raise ValueError(f"Adam eps must be positive, got {self.eps}")
        if np.shape(self.first_moment) != np.shape(self.second_moment):
            raise ShapeMismatchError("Adam moment vectors must have the same length")

    @classmethod
    def for_params(cls, n_params: int, lr: float, beta0: float = 0.0,
                   beta1: float = 0.99, eps: float = 1e-8) -> 'AdamState':
        return cls(np.zeros(n_params), np.zeros(n_params), 0, lr, beta0, beta1, eps)


def adam_step(state: AdamState, params, grads) -> Tuple[np.ndarray, AdamState]:
    """One bias-corrected Adam update; returns new parameters and a new state."""
    params = np.asarray(params, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    if params.shape != grads.shape or params.size != state.first_moment.size:
        raise ShapeMismatchError(
            f"Adam expects {state.first_moment.size} parameters and gradients, "
            f"got {params.size} and {grads.size}"
        )
    if not np.all(np.isfinite(grads)):
        bad = int(np.count_nonzero(~np.isfinite(grads)))
        logger.error("Adam step %d received %d non-finite gradient entries", state.step_count + 1, bad)
        raise DivergenceError(f"Non-finite gradient at Adam step {state.step_count + 1} ({bad} entries)")

    step = state.step_count + 1
    first = state.beta0 * state.first_moment + (1.0 - state.beta0) * grads
    second = state.beta1 * state.second_moment + (1.0 - state.beta1) * grads * grads
    first_hat = first / (1.0 - state.beta0 ** step)
    second_hat = second / (1.0 - state.beta1 ** step)
    new_params = params - state.lr * first_hat / (np.sqrt(second_hat) + state.eps)
    return new_params, replace(state, first_moment=first, second_moment=second, step_count=step)
