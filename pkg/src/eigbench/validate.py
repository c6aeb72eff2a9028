"""Estimator cross-validation utilities shared by the CLI and the test suite."""

from __future__ import annotations

import math

import numpy as np

from .core import BeliefEnsemble, DesignGrid
from .eig import NmcConfig, exact_eig_map, nmc_eig_map


def random_ensemble(rng: np.random.Generator, num_heads: int = 4,
                    shape: tuple[int, int] = (16, 16),
                    lo: float = 0.01, hi: float = 0.99) -> BeliefEnsemble:
    """Ensemble of uniform-random probability maps, theta ~ Unif[lo, hi]."""
    return BeliefEnsemble.from_arrays(
        [rng.uniform(lo, hi, size=shape) for _ in range(num_heads)])


def full_grid(shape: tuple[int, int]) -> DesignGrid:
    """One design per pixel (identity grid)."""
    return DesignGrid.for_image(shape[0], shape[1], shape[0], shape[1])


def nmc_rmse(ensemble: BeliefEnsemble, grid: DesignGrid,
             cfg: NmcConfig) -> float:
    """RMSE over designs between the NMC estimate and the exact map."""
    exact = exact_eig_map(ensemble, grid).values
    approx = nmc_eig_map(ensemble, grid, cfg).values
    return float(np.sqrt(np.mean((approx - exact) ** 2)))


def default_schedule(final_n: int, final_m: int | None) -> list[tuple[int, int]]:
    """Three-point (N, M) convergence schedule ending at (final_n, final_m).

    Earlier points use N/16 and N/4 with the auto inner size; final_m None
    means auto (ceil sqrt) for the last point too.
    """
    points = []
    for n in (max(final_n // 16, 1), max(final_n // 4, 1), final_n):
        points.append((n, math.ceil(math.sqrt(n))))
    if final_m is not None:
        points[-1] = (final_n, final_m)
    return points


def rmse_over_seeds(num_seeds: int, schedule: list[tuple[int, int]],
                    num_heads: int = 4, shape: tuple[int, int] = (16, 16),
                    base_seed: int = 0) -> list[float]:
    """Mean RMSE per schedule point over seeded random ensembles."""
    grid = full_grid(shape)
    totals = [0.0] * len(schedule)
    for s in range(num_seeds):
        rng = np.random.default_rng(base_seed + s)
        ensemble = random_ensemble(rng, num_heads=num_heads, shape=shape)
        for i, (n, m) in enumerate(schedule):
            cfg = NmcConfig(n, m, seed=base_seed + 7919 * s + i)
            totals[i] += nmc_rmse(ensemble, grid, cfg)
    return [t / num_seeds for t in totals]
