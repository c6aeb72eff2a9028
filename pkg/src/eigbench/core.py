"""Shared value types (probability maps, masks, prompts, design grids) and the
entropy / Dice primitives everything else is built on.

Conventions fixed here once:
  * all per-pixel arrays are row-major, (row, col) indexed, row 0 at the top;
  * probabilities are stored as float32 maps, entropy and other accumulations
    run in float64;
  * entropies are in nats.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

LN2 = float(np.log(2.0))


class ShapeError(ValueError):
    """Dimension mismatch between pixel arrays that must agree."""


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ProbabilityMap:
    """A per-pixel probability field, float32 in [0, 1], shape (height, width)."""

    values: np.ndarray

    def __post_init__(self):
        arr = np.array(self.values, dtype=np.float32, order="C")
        if arr.ndim != 2:
            raise ShapeError(f"probability map must be 2-D, got shape {arr.shape}")
        if arr.size and (float(arr.min()) < 0.0 or float(arr.max()) > 1.0):
            raise ValueError("probability map values must lie in [0, 1]")
        object.__setattr__(self, "values", _frozen(arr))

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @classmethod
    def constant(cls, height: int, width: int, value: float) -> "ProbabilityMap":
        return cls(np.full((height, width), value, dtype=np.float32))


@dataclass(frozen=True, eq=False)
class BeliefEnsemble:
    """K prediction-head probability maps treated as a uniform belief proxy.

    ``scores`` optionally carries one quality scalar per head (higher better).
    """

    heads: tuple[ProbabilityMap, ...]
    scores: tuple[float, ...] | None = None

    def __post_init__(self):
        heads = tuple(self.heads)
        if not heads:
            raise ValueError("ensemble needs at least one head")
        h, w = heads[0].height, heads[0].width
        for m in heads[1:]:
            if (m.height, m.width) != (h, w):
                raise ShapeError("ensemble heads must share dimensions")
        scores = self.scores
        if scores is not None:
            scores = tuple(float(s) for s in scores)
            if len(scores) != len(heads):
                raise ValueError("scores length must equal head count")
        object.__setattr__(self, "heads", heads)
        object.__setattr__(self, "scores", scores)

    @property
    def num_heads(self) -> int:
        return len(self.heads)

    @property
    def height(self) -> int:
        return self.heads[0].height

    @property
    def width(self) -> int:
        return self.heads[0].width

    @cached_property
    def stacked(self) -> np.ndarray:
        """(K, height, width) float32 view of the heads."""
        return _frozen(np.stack([h.values for h in self.heads]))

    @classmethod
    def from_arrays(cls, arrays: Sequence[np.ndarray],
                    scores: Sequence[float] | None = None) -> "BeliefEnsemble":
        return cls(tuple(ProbabilityMap(a) for a in arrays),
                   None if scores is None else tuple(scores))


@dataclass(frozen=True, order=True)
class Design:
    """A candidate observation location: one pixel coordinate."""

    row: int
    col: int


@dataclass(frozen=True)
class PointPrompt:
    """An observation at a design: (label y, location d)."""

    design: Design
    label: int

    def __post_init__(self):
        if self.label not in (0, 1):
            raise ValueError(f"prompt label must be 0 or 1, got {self.label}")


@dataclass(frozen=True)
class PromptTrace:
    """Ordered prompt history. The simulation policy never repeats a design."""

    prompts: tuple[PointPrompt, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "prompts", tuple(self.prompts))

    def __len__(self) -> int:
        return len(self.prompts)

    def with_prompt(self, prompt: PointPrompt) -> "PromptTrace":
        return PromptTrace(self.prompts + (prompt,))

    def designs(self) -> set[Design]:
        return {p.design for p in self.prompts}


@dataclass(frozen=True, eq=False)
class BinaryMask:
    """A {0,1} label mask, uint8, shape (height, width)."""

    values: np.ndarray

    def __post_init__(self):
        arr = np.array(self.values, order="C")
        if arr.ndim != 2:
            raise ShapeError(f"mask must be 2-D, got shape {arr.shape}")
        uniq = np.unique(arr)
        if uniq.size and not np.isin(uniq, (0, 1)).all():
            raise ValueError("mask values must be 0 or 1")
        object.__setattr__(self, "values", _frozen(arr.astype(np.uint8)))

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    def foreground_count(self) -> int:
        return int(np.count_nonzero(self.values))


@dataclass(frozen=True)
class DesignGrid:
    """The candidate design set: a rows x cols grid of pixel coordinates.

    Cells are row-major and map to pixel centers of the image tiles they
    cover; ``used`` holds flat cell indices already spent on prompts.
    The grid is immutable; ``mark_used`` returns a new grid.
    """

    rows: int
    cols: int
    cells: tuple[Design, ...]
    used: frozenset[int] = field(default_factory=frozenset)

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ValueError("grid must have at least one row and column")
        cells = tuple(self.cells)
        if len(cells) != self.rows * self.cols:
            raise ValueError("cells length must equal rows * cols")
        coords = [(d.row, d.col) for d in cells]
        if any(b <= a for a, b in zip(coords, coords[1:])):
            raise ValueError("cell pixel coordinates must be strictly "
                             "increasing row-major")
        bad = [i for i in self.used if not 0 <= i < len(cells)]
        if bad:
            raise ValueError(f"used indices out of range: {bad}")
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "used", frozenset(self.used))

    @classmethod
    def for_image(cls, height: int, width: int, rows: int, cols: int) -> "DesignGrid":
        """Grid cell (r, c) maps to pixel (floor((r+.5)H/rows), floor((c+.5)W/cols))."""
        if rows > height or cols > width:
            raise ValueError("grid cannot be finer than the image")
        prows = [int((r + 0.5) * height // rows) for r in range(rows)]
        pcols = [int((c + 0.5) * width // cols) for c in range(cols)]
        cells = tuple(Design(pr, pc) for pr in prows for pc in pcols)
        return cls(rows, cols, cells)

    @cached_property
    def pixel_rows(self) -> np.ndarray:
        return _frozen(np.array([d.row for d in self.cells], dtype=np.intp))

    @cached_property
    def pixel_cols(self) -> np.ndarray:
        return _frozen(np.array([d.col for d in self.cells], dtype=np.intp))

    def cell_index(self, design: Design) -> int | None:
        """Flat index of the cell at this exact pixel, or None."""
        try:
            return self.cells.index(design)
        except ValueError:
            return None

    def unused_indices(self) -> list[int]:
        return [i for i in range(len(self.cells)) if i not in self.used]

    def mark_used(self, index: int) -> "DesignGrid":
        if not 0 <= index < len(self.cells):
            raise ValueError(f"cell index {index} out of range")
        return DesignGrid(self.rows, self.cols, self.cells,
                          self.used | {index})


def binary_entropy(p):
    """Entropy in nats of a Bernoulli(p), elementwise; 0*ln(0) taken as 0.

    Accepts a scalar or array, returns float64 of the same shape.
    """
    arr = np.asarray(p, dtype=np.float64)
    if arr.size and (float(arr.min()) < 0.0 or float(arr.max()) > 1.0):
        raise ValueError("probability outside [0, 1]")
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -np.where(arr > 0.0, arr * np.log(arr), 0.0) \
            - np.where(arr < 1.0, (1.0 - arr) * np.log1p(-arr), 0.0)
    return float(h) if np.isscalar(p) or arr.ndim == 0 else h


def ensemble_mean(ensemble: BeliefEnsemble) -> ProbabilityMap:
    """Pixel-wise arithmetic mean of the heads (the marginal predictive)."""
    mean = ensemble.stacked.astype(np.float64).mean(axis=0)
    return ProbabilityMap(np.clip(mean, 0.0, 1.0))


def predictive_entropy_map(ensemble: BeliefEnsemble) -> np.ndarray:
    """Per-pixel entropy (nats, float64) of the ensemble mean."""
    return binary_entropy(ensemble_mean(ensemble).values)


def dice(a: BinaryMask, b: BinaryMask) -> float:
    """Dice overlap 2|a&b| / (|a|+|b|); both masks empty counts as 1.0."""
    if (a.height, a.width) != (b.height, b.width):
        raise ShapeError("dice requires masks of identical dimensions")
    total = a.foreground_count() + b.foreground_count()
    if total == 0:
        return 1.0
    inter = int(np.count_nonzero(a.values & b.values))
    return 2.0 * inter / total
