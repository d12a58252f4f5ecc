"""
Synthetic toy datasets standing in for image data.
"""

from dataclasses import dataclass, field
from typing import List

import numpy as np
from django.core.exceptions import ValidationError
from sklearn.datasets import make_moons

from ..analytic import GaussianFamily, GaussianScore, MixtureScore
from ..diffusion import DiffusionSchedule

GAUSSIAN = 'gaussian'
RING = 'gaussian_mixture_ring'
TWO_MOONS = 'two_moons'
CHECKERBOARD = 'checkerboard'

DATASET_CHOICES = [
    (GAUSSIAN, 'Diagonal Gaussian'),
    (RING, 'Gaussian mixture on a ring'),
    (TWO_MOONS, 'Two moons'),
    (CHECKERBOARD, 'Checkerboard'),
]

# sklearn's moons span roughly [-1, 2] x [-0.5, 1]
MOONS_CENTER = np.array([0.5, 0.25])


@dataclass(frozen=True)
class ToyDataset:
    """
    A named synthetic distribution.

    Args:
        kind: One of DATASET_CHOICES
        mean: Gaussian mean (its length is the dimension)
        std: Gaussian or ring-component standard deviation
        components: Ring component count
        radius: Ring radius
        noise: Two-moons noise level
        scale: Size of two moons and checkerboard
    """

    kind: str = RING
    mean: List[float] = field(default_factory=lambda: [0.0])
    std: float = 0.2
    components: int = 8
    radius: float = 2.0
    noise: float = 0.05
    scale: float = 1.5

    def __post_init__(self):
        kinds = [choice for choice, _ in DATASET_CHOICES]
        if self.kind not in kinds:
            raise ValidationError(f"Unknown dataset '{self.kind}' (expected one of {', '.join(kinds)})")
        if self.std <= 0 or self.radius <= 0 or self.scale <= 0 or self.noise < 0:
            raise ValidationError("Dataset std, radius and scale must be positive and noise nonnegative")
        if self.components < 1:
            raise ValidationError(f"components must be positive, got {self.components}")
        if self.kind == GAUSSIAN and len(self.mean) == 0:
            raise ValidationError("A Gaussian dataset needs a nonempty mean")
        object.__setattr__(self, 'mean', [float(v) for v in self.mean])

    @property
    def dim(self) -> int:
        return len(self.mean) if self.kind == GAUSSIAN else 2

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if n < 0:
            raise ValueError(f"Sample count must not be negative, got {n}")
        if self.kind == GAUSSIAN:
            return np.asarray(self.mean) + self.std * rng.standard_normal((n, self.dim))
        if self.kind == RING:
            centers = self._ring_centers()
            idx = rng.integers(0, self.components, n)
            return centers[idx] + self.std * rng.standard_normal((n, 2))
        if self.kind == TWO_MOONS:
            if n == 0:
                return np.empty((0, 2))
            x, _ = make_moons(n, noise=self.noise, random_state=int(rng.integers(0, 2 ** 31 - 1)))
            return (x - MOONS_CENTER) * self.scale
        return self._checkerboard(rng, n)

    def _ring_centers(self) -> np.ndarray:
        angles = 2.0 * np.pi * np.arange(self.components) / self.components
        return self.radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)

    def _checkerboard(self, rng: np.random.Generator, n: int) -> np.ndarray:
        # 4 x 4 board on [-2, 2]^2, filled where row + column is even
        x1 = rng.uniform(-2.0, 2.0, n)
        col = np.clip(np.floor(x1 + 2.0), 0, 3).astype(int)
        row = 2 * rng.integers(0, 2, n) + col % 2
        x2 = -2.0 + row + rng.uniform(0.0, 1.0, n)
        return self.scale / 2.0 * np.stack([x1, x2], axis=1)

    def analytic_teacher(self, sched: DiffusionSchedule):
        """Exact diffused score of this distribution, when one exists."""
        if self.kind == GAUSSIAN:
            return GaussianScore(GaussianFamily(self.mean, np.full(self.dim, self.std ** 2)), sched)
        if self.kind == RING:
            return MixtureScore.ring(self.components, self.radius, self.std, sched)
        return None

    def to_dict(self) -> dict:
        return {
            'kind': self.kind,
            'mean': list(self.mean),
            'std': self.std,
            'components': self.components,
            'radius': self.radius,
            'noise': self.noise,
            'scale': self.scale,
        }
