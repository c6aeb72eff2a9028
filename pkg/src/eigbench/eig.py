"""Per-design expected information gain, two ways.

``exact_eig_map`` evaluates the closed form available when the belief is a
finite uniform mixture of heads: EIG(d) is the mutual information between
head index and label,

    EIG(d) = H_b(mean_k theta_k(d)) - (1/K) sum_k H_b(theta_k(d)).

``nmc_eig_map`` is the nested Monte Carlo estimator over the same proxy:
outer samples draw a head and a label, inner samples draw heads for the
marginal likelihood, and the per-design estimate is the mean log-likelihood
ratio. The two agree as N and M grow (M ~ sqrt(N)); the test suite enforces
this convergence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import (
    BeliefEnsemble,
    Design,
    DesignGrid,
    ProbabilityMap,
    ShapeError,
    binary_entropy,
)

EXACT = "exact"
NMC = "nmc"


class DesignsExhaustedError(RuntimeError):
    """Raised when every grid cell has already been prompted."""


@dataclass(frozen=True)
class NmcConfig:
    """Sample sizes and rng seed for the nested Monte Carlo estimator.

    ``auto`` picks inner_m = ceil(sqrt(outer_n)), the consistency schedule.
    ``clamp_eps`` floors probabilities away from {0, 1} before logs.
    """

    outer_n: int
    inner_m: int
    seed: int = 0
    clamp_eps: float = 1e-6

    def __post_init__(self):
        if self.outer_n < 1 or self.inner_m < 1:
            raise ValueError("outer_n and inner_m must be >= 1")
        if not 0.0 < self.clamp_eps < 0.5:
            raise ValueError("clamp_eps must lie in (0, 0.5)")

    @classmethod
    def auto(cls, outer_n: int, seed: int = 0, clamp_eps: float = 1e-6) -> "NmcConfig":
        return cls(outer_n, math.ceil(math.sqrt(outer_n)), seed, clamp_eps)


@dataclass(frozen=True, eq=False)
class EigMap:
    """Per-design EIG in nats, float64, shape (grid.rows, grid.cols)."""

    values: np.ndarray
    estimator: str

    def __post_init__(self):
        arr = np.array(self.values, dtype=np.float64, order="C")
        if arr.ndim != 2:
            raise ShapeError("EIG map must be 2-D")
        if not np.isfinite(arr).all():
            raise ValueError("EIG map values must be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)


def _gather_design_thetas(ensemble: BeliefEnsemble, grid: DesignGrid) -> np.ndarray:
    """Head probabilities at every grid cell: (K, n_cells) float64."""
    if not grid.cells:
        raise ValueError("design grid is empty")
    rows, cols = grid.pixel_rows, grid.pixel_cols
    if rows.max() >= ensemble.height or cols.max() >= ensemble.width:
        raise ShapeError("design grid extends outside the ensemble's image")
    return ensemble.stacked[:, rows, cols].astype(np.float64)


def exact_eig_map(ensemble: BeliefEnsemble, grid: DesignGrid) -> EigMap:
    """Closed-form EIG per grid cell; values in [0, ln 2]."""
    thetas = _gather_design_thetas(ensemble, grid)
    mixture = binary_entropy(thetas.mean(axis=0))
    conditional = binary_entropy(thetas).mean(axis=0)
    values = (mixture - conditional).reshape(grid.rows, grid.cols)
    return EigMap(values, EXACT)


def sample_theta_and_y(ensemble: BeliefEnsemble, design: Design,
                       rng: np.random.Generator, inner_m: int,
                       ) -> tuple[ProbabilityMap, int, list[ProbabilityMap]]:
    """One outer draw of the sampling procedure at a single design.

    Draw order (fixed for determinism): outer head index, the label uniform,
    then ``inner_m`` inner head indices with replacement.
    """
    if not (0 <= design.row < ensemble.height and 0 <= design.col < ensemble.width):
        raise ShapeError(f"design {design} outside ensemble bounds")
    k = ensemble.num_heads
    outer = ensemble.heads[int(rng.integers(0, k))]
    y = int(rng.random() < float(outer.values[design.row, design.col]))
    inner = [ensemble.heads[int(i)] for i in rng.integers(0, k, size=inner_m)]
    return outer, y, inner


def nmc_eig_map(ensemble: BeliefEnsemble, grid: DesignGrid, cfg: NmcConfig) -> EigMap:
    """Nested Monte Carlo EIG estimate per grid cell.

    Head draws are shared across designs within a sample (a sampled head is a
    full map); labels are drawn per design from the shared outer head. When
    all heads are identical the outer and inner log terms cancel sample-wise,
    so the estimate is returned as exactly zero without sampling.
    """
    thetas = _gather_design_thetas(ensemble, grid)  # (K, D)
    k, n_designs = thetas.shape
    if k == 1 or all(np.array_equal(thetas[0], thetas[i]) for i in range(1, k)):
        return EigMap(np.zeros((grid.rows, grid.cols)), NMC)

    rng = np.random.default_rng(cfg.seed)
    n, m = cfg.outer_n, cfg.inner_m
    outer_idx = rng.integers(0, k, size=n)
    label_u = rng.random((n, n_designs))
    inner_idx = rng.integers(0, k, size=(n, m))

    clamped = np.clip(thetas, cfg.clamp_eps, 1.0 - cfg.clamp_eps)
    theta0 = thetas[outer_idx]  # raw values drive the label draw
    y = label_u < theta0
    theta0_c = clamped[outer_idx]
    log_outer = np.where(y, np.log(theta0_c), np.log1p(-theta0_c))

    # Inner mean Bernoulli likelihood via head-count weights: the likelihood is
    # affine in theta, so sum_m Bern(y; theta_m) = counts . Bern(y; theta_k).
    flat = inner_idx + k * np.arange(n)[:, None]
    counts = np.bincount(flat.ravel(), minlength=n * k).reshape(n, k).astype(np.float64)
    mean_pos = counts @ clamped / m
    mean_neg = counts @ (1.0 - clamped) / m
    log_inner = np.log(np.where(y, mean_pos, mean_neg))

    values = (log_outer - log_inner).mean(axis=0).reshape(grid.rows, grid.cols)
    return EigMap(values, NMC)


def select_design(eig_map: EigMap, grid: DesignGrid) -> Design:
    """Max-EIG design among unused cells; ties go to the lowest cell index."""
    flat = eig_map.flat
    if flat.shape[0] != len(grid.cells):
        raise ShapeError("EIG map does not match the design grid")
    if len(grid.used) >= len(grid.cells):
        raise DesignsExhaustedError("all grid cells already prompted")
    masked = flat.copy()
    if grid.used:
        masked[list(grid.used)] = -np.inf
    return grid.cells[int(np.argmax(masked))]
