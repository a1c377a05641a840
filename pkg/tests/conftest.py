"""Shared fixtures and random instance helpers."""

from typing import Optional, Sequence

import numpy as np
import pytest

from robust_fractionation.models.ambiguity import AmbiguityBlock, ConfidenceSet, MomentSpec, build_grid


def make_block(
    t0: float = 0.0,
    t_max: float = 1.0,
    delta: float = 0.1,
    caps=1.0,
    moments: Optional[MomentSpec] = None,
    confidence_sets: Sequence[ConfidenceSet] = (),
) -> AmbiguityBlock:
    """Block with explicit bin caps (a scalar is broadcast to every bin)."""
    grid = build_grid(t0, t_max, delta)
    values = np.broadcast_to(np.asarray(caps, dtype=float), (grid.size,)).copy()
    values.setflags(write=False)
    return AmbiguityBlock(grid, moments, values, tuple(confidence_sets))


def random_block(rng: np.random.Generator, with_moments: bool = False) -> AmbiguityBlock:
    """Small random block on [0, (n-1)/4] with total mass cap between 1.2 and about 3."""
    n = int(rng.integers(4, 8))
    delta = 0.25
    t_max = (n - 1) * delta
    caps = rng.uniform(0.2, 2.0, size=n)
    mass = delta * caps.sum()
    if mass < 1.2:
        caps *= 1.2 / mass
    moments = None
    if with_moments:
        lo = float(rng.uniform(0.25, t_max - 0.25))
        hi = float(min(lo + rng.uniform(0.0, 0.5), t_max))
        sigma = float(rng.uniform(0.1, 0.5))
        moments = MomentSpec.mccormick(lo, hi, sigma, 0.5)
    return make_block(0.0, t_max, delta, caps, moments)


def sample_measure(rng: np.random.Generator, block: AmbiguityBlock, refine: int = 4):
    """
    Random atomic measure obeying the bin caps (moments are ignored).

    Returns:
        (atoms, masses) sorted by atom, or None when the draw cannot reach total mass 1
    """
    grid = block.grid
    caps = grid.delta * np.asarray(block.bin_caps, dtype=float)
    masses = caps * rng.uniform(0.0, 1.0, size=grid.size)
    total = masses.sum()
    if total < 1.0:
        return None
    masses /= total
    atoms = []
    for k in range(grid.size):
        if k == grid.size - 1:
            atoms.append(grid.points[k])
        else:
            atoms.append(grid.points[k] + grid.delta * rng.integers(0, refine) / refine)
    return np.asarray(atoms), masses


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)


@pytest.fixture
def uniform_block() -> AmbiguityBlock:
    """Grid 0, 0.1, ..., 1 with cap 1 on every bin (total mass cap 1.1)."""
    return make_block()
