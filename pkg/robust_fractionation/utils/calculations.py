"""
Shared numeric utilities.
Closed-form normal densities, step counting and gaps used by the models and checkers.
"""

import math
from typing import Tuple

import numpy as np

SQRT_TWO_PI = math.sqrt(2.0 * math.pi)

# Relative tolerance for "span is an integer multiple of the step"
DIVISIBILITY_RTOL = 1e-9


def normal_density(t, mean: float, sigma: float):
    """
    Density of N(mean, sigma^2).

    Args:
        t: Scalar or numpy array of evaluation points
        mean: Mean of the distribution
        sigma: Standard deviation (> 0)

    Returns:
        Density values with the shape of ``t``
    """
    z = (np.asarray(t, dtype=float) - mean) / sigma
    values = np.exp(-0.5 * z * z) / (sigma * SQRT_TWO_PI)
    if np.ndim(values) == 0:
        return float(values)
    return values


def peak_density(sigma: float) -> float:
    """Density of N(mu, sigma^2) at its own mean, 1/(sigma*sqrt(2*pi))."""
    return 1.0 / (sigma * SQRT_TWO_PI)


def normal_density_lipschitz(sigma: float) -> float:
    """
    Global Lipschitz constant of the normal density.

    The slope magnitude peaks one standard deviation from the mean, where it equals
    exp(-1/2) / (sigma^2 * sqrt(2*pi)).
    """
    return math.exp(-0.5) / (sigma * sigma * SQRT_TWO_PI)


def step_count(t0: float, t_max: float, delta: float) -> Tuple[int, bool]:
    """
    Number of steps of width ``delta`` spanning [t0, t_max].

    Returns:
        (rounded step count, whether the span divides within DIVISIBILITY_RTOL)
    """
    ratio = (t_max - t0) / delta
    steps = int(round(ratio))
    divisible = abs(ratio - steps) <= DIVISIBILITY_RTOL * max(1.0, abs(ratio))
    return steps, divisible


def relative_gap(bound: float, incumbent: float) -> float:
    """Gap between a dual bound and an incumbent, relative to max(1, |incumbent|)."""
    return abs(bound - incumbent) / max(1.0, abs(incumbent))


__all__ = [
    "SQRT_TWO_PI",
    "DIVISIBILITY_RTOL",
    "normal_density",
    "peak_density",
    "normal_density_lipschitz",
    "step_count",
    "relative_gap",
]
