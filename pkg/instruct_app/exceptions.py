"""Error types raised by the lab's numerical and persistence layers."""


class ShapeMismatchError(ValueError):
    """A vector, batch or parameter sequence has the wrong dimension."""


class TimeWindowError(ValueError):
    """A diffusion time lies outside the schedule's [t_min, T] window."""


class CheckpointError(ValueError):
    """A checkpoint file is malformed, truncated or of the wrong role/shape."""


class DivergenceError(ArithmeticError):
    """A training run produced non-finite values or exceeded a divergence guard."""
