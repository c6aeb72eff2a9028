"""Prompt-sequence episodes against a segmenter session.

Both policies start from the same initialization prompt (the ground-truth
mask center, labeled by the noiseless annotator) and then diverge:

  * EIG-guided -- recompute the EIG map each step and prompt the max-EIG
    unused grid cell;
  * Oracle -- try every unused grid cell with its true label and commit the
    one whose proposal maximizes Dice (greedy, one step deep; a capacity
    measure, not a plausible user).

Grid cells already prompted (including a cell coinciding with the init
prompt) are never prompted again.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace

import numpy as np

from .backends import SegmenterSession
from .core import (
    BeliefEnsemble,
    BinaryMask,
    Design,
    DesignGrid,
    PointPrompt,
    PromptTrace,
    ShapeError,
    dice,
    ensemble_mean,
)
from .eig import EXACT, NMC, EigMap, NmcConfig, exact_eig_map, nmc_eig_map, select_design

POLICY_EIG = "eig_guided"
POLICY_ORACLE = "oracle"


@dataclass(frozen=True)
class EpisodeConfig:
    steps: int = 10
    grid: int = 30
    policy: str = POLICY_EIG
    estimator: str = EXACT
    nmc: NmcConfig | None = None
    seed: int = 0

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.grid < 1:
            raise ValueError("grid must be >= 1")
        if self.grid * self.grid < self.steps + 1:
            raise ValueError("grid^2 must be >= steps + 1")
        if self.policy not in (POLICY_EIG, POLICY_ORACLE):
            raise ValueError(f"unknown policy {self.policy!r}")
        if self.estimator not in (EXACT, NMC):
            raise ValueError(f"unknown estimator {self.estimator!r}")
        if self.estimator == NMC and self.nmc is None:
            object.__setattr__(self, "nmc", NmcConfig.auto(4096))


@dataclass(frozen=True)
class StepRecord:
    step: int
    design: Design
    label: int
    dice: float
    max_eig: float | None  # nats; None at step 0 and for oracle episodes
    wall_ms: float


@dataclass(frozen=True)
class EpisodeRecord:
    policy: str
    steps: tuple[StepRecord, ...]
    complete: bool = True
    error: str | None = None


def annotator_label(gt: BinaryMask, design: Design) -> int:
    """Noiseless observation: the ground-truth value at the design."""
    if not (0 <= design.row < gt.height and 0 <= design.col < gt.width):
        raise ShapeError(f"design {design} outside mask bounds")
    return int(gt.values[design.row, design.col])


def mask_center(gt: BinaryMask) -> Design:
    """Foreground centroid rounded half-up; snapped to the nearest foreground
    pixel (Euclidean, ties row-major) if the rounded pixel is background."""
    fg = np.argwhere(gt.values != 0)
    if fg.shape[0] == 0:
        raise ValueError("mask has no foreground")
    centroid = fg.mean(axis=0)
    row = int(np.floor(centroid[0] + 0.5))
    col = int(np.floor(centroid[1] + 0.5))
    if gt.values[row, col]:
        return Design(row, col)
    d2 = ((fg[:, 0] - row) ** 2 + (fg[:, 1] - col) ** 2)
    nearest = fg[int(np.argmin(d2))]  # argwhere is row-major, argmin keeps first
    return Design(int(nearest[0]), int(nearest[1]))


def proposal_mask(ensemble: BeliefEnsemble) -> BinaryMask:
    """Binarized proposal: best-scoring head if scores exist, else the mean;
    thresholded at 0.5 with >= mapping to foreground."""
    if ensemble.scores is not None:
        head = ensemble.heads[int(np.argmax(ensemble.scores))].values
    else:
        head = ensemble_mean(ensemble).values
    return BinaryMask((head >= 0.5).astype(np.uint8))


def _eig_map_for(ensemble: BeliefEnsemble, grid: DesignGrid,
                 cfg: EpisodeConfig, step: int) -> EigMap:
    if cfg.estimator == EXACT:
        return exact_eig_map(ensemble, grid)
    # Per-step seed keeps estimates independent across steps yet reproducible.
    nmc = replace(cfg.nmc, seed=cfg.nmc.seed + 1_000_003 * step + cfg.seed)
    return nmc_eig_map(ensemble, grid, nmc)


def _init_state(session: SegmenterSession, image: np.ndarray, gt: BinaryMask,
                cfg: EpisodeConfig):
    session.set_image(image)
    grid = DesignGrid.for_image(gt.height, gt.width, cfg.grid, cfg.grid)
    t0 = time.perf_counter()
    center = mask_center(gt)
    trace = PromptTrace((PointPrompt(center, annotator_label(gt, center)),))
    ensemble = session.predict(trace)
    score = dice(proposal_mask(ensemble), gt)
    wall = (time.perf_counter() - t0) * 1000.0
    hit = grid.cell_index(center)
    if hit is not None:
        grid = grid.mark_used(hit)
    record = StepRecord(0, center, trace.prompts[0].label, score, None, wall)
    return grid, trace, ensemble, record


def run_eig_guided_episode(session: SegmenterSession, image: np.ndarray,
                           gt: BinaryMask, cfg: EpisodeConfig,
                           on_eig_map=None) -> EpisodeRecord:
    """Max-EIG prompting. ``on_eig_map(step, EigMap)`` sees each step's map."""
    records: list[StepRecord] = []
    try:
        grid, trace, ensemble, rec0 = _init_state(session, image, gt, cfg)
        records.append(rec0)
        for step in range(1, cfg.steps + 1):
            t0 = time.perf_counter()
            eig_map = _eig_map_for(ensemble, grid, cfg, step)
            if on_eig_map is not None:
                on_eig_map(step, eig_map)
            design = select_design(eig_map, grid)
            idx = grid.cell_index(design)
            max_eig = float(eig_map.flat[idx])
            grid = grid.mark_used(idx)
            label = annotator_label(gt, design)
            trace = trace.with_prompt(PointPrompt(design, label))
            ensemble = session.predict(trace)
            score = dice(proposal_mask(ensemble), gt)
            wall = (time.perf_counter() - t0) * 1000.0
            records.append(StepRecord(step, design, label, score, max_eig, wall))
    except Exception as exc:  # partial record, flagged incomplete
        return EpisodeRecord(POLICY_EIG, tuple(records), complete=False,
                             error=f"{type(exc).__name__}: {exc}")
    return EpisodeRecord(POLICY_EIG, tuple(records))


def oracle_step(session: SegmenterSession, gt: BinaryMask, grid: DesignGrid,
                trace: PromptTrace) -> tuple[int, int, float]:
    """Best single prompt: exhaustively evaluate every unused cell with its
    true label and return (cell index, label, committed Dice); ties row-major."""
    best_idx = -1
    best_label = 0
    best_score = -1.0
    for idx in grid.unused_indices():
        design = grid.cells[idx]
        label = annotator_label(gt, design)
        candidate = trace.with_prompt(PointPrompt(design, label))
        score = dice(proposal_mask(session.predict(candidate)), gt)
        if score > best_score:
            best_idx, best_label, best_score = idx, label, score
    return best_idx, best_label, best_score


def run_oracle_episode(session: SegmenterSession, image: np.ndarray,
                       gt: BinaryMask, cfg: EpisodeConfig) -> EpisodeRecord:
    """Greedy max-Dice prompting; always commits the best candidate, even when
    every candidate lowers Dice."""
    records: list[StepRecord] = []
    try:
        grid, trace, _ensemble, rec0 = _init_state(session, image, gt, cfg)
        records.append(rec0)
        for step in range(1, cfg.steps + 1):
            t0 = time.perf_counter()
            idx, label, score = oracle_step(session, gt, grid, trace)
            design = grid.cells[idx]
            grid = grid.mark_used(idx)
            trace = trace.with_prompt(PointPrompt(design, label))
            wall = (time.perf_counter() - t0) * 1000.0
            records.append(StepRecord(step, design, label, score, None, wall))
    except Exception as exc:
        return EpisodeRecord(POLICY_ORACLE, tuple(records), complete=False,
                             error=f"{type(exc).__name__}: {exc}")
    return EpisodeRecord(POLICY_ORACLE, tuple(records))


def run_episode(session: SegmenterSession, image: np.ndarray, gt: BinaryMask,
                cfg: EpisodeConfig, on_eig_map=None) -> EpisodeRecord:
    if cfg.policy == POLICY_ORACLE:
        return run_oracle_episode(session, image, gt, cfg)
    return run_eig_guided_episode(session, image, gt, cfg, on_eig_map=on_eig_map)
