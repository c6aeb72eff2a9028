"""Benchmark harness that characterizes point-prompt interactive segmenters
by the expected information gain of their belief ensembles."""

from .backends import (
    KernelBackend,
    KernelBackendConfig,
    OverconfidentBackend,
    PromptBlindBackend,
    SegmenterSession,
    SessionStateError,
)
from .core import (
    LN2,
    BeliefEnsemble,
    BinaryMask,
    Design,
    DesignGrid,
    PointPrompt,
    ProbabilityMap,
    PromptTrace,
    ShapeError,
    binary_entropy,
    dice,
    ensemble_mean,
    predictive_entropy_map,
)
from .eig import (
    DesignsExhaustedError,
    EigMap,
    NmcConfig,
    exact_eig_map,
    nmc_eig_map,
    sample_theta_and_y,
    select_design,
)
from .simulation import (
    EpisodeConfig,
    EpisodeRecord,
    StepRecord,
    annotator_label,
    mask_center,
    proposal_mask,
    run_eig_guided_episode,
    run_episode,
    run_oracle_episode,
)

__version__ = "0.1.0"
