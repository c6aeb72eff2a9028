"""Segmenter session contract plus three deterministic synthetic backends.

The synthetic backends ignore image content on purpose: the harness measures
prompt understanding, and each backend reproduces one qualitative regime at
desk scale:

  * ``KernelBackend`` -- prompt-responsive multi-scale ensemble (the
    well-behaved regime: informative head disagreement, EIG guidance works);
  * ``OverconfidentBackend`` -- collapsed, sharpened ensemble (high capacity,
    zero EIG signal);
  * ``PromptBlindBackend`` -- fixed output regardless of prompts (no point
    prompt understanding at all).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol, runtime_checkable

import numpy as np

from .core import BeliefEnsemble, ProbabilityMap, PromptTrace


class SessionStateError(RuntimeError):
    """Session driven out of order (e.g. predict before set_image)."""


@runtime_checkable
class SegmenterSession(Protocol):
    """Behavioral contract every backend (built-in or wire-attached) satisfies."""

    name: str
    num_heads: int

    def set_image(self, image: np.ndarray) -> None: ...

    def predict(self, trace: PromptTrace) -> BeliefEnsemble: ...


@dataclass(frozen=True)
class KernelBackendConfig:
    bandwidths: tuple[float, ...] = (4.0, 8.0, 16.0, 32.0)
    prior_weight: float = 0.1
    prior: float = 0.5

    def __post_init__(self):
        if not self.bandwidths or any(s <= 0 for s in self.bandwidths):
            raise ValueError("bandwidths must be positive")
        if self.prior_weight <= 0:
            raise ValueError("prior_weight must be positive")
        if not 0.0 < self.prior < 1.0:
            raise ValueError("prior must lie strictly inside (0, 1)")


def _image_shape(image: np.ndarray) -> tuple[int, int]:
    image = np.asarray(image)
    if image.ndim not in (2, 3):
        raise ValueError(f"image must be 2-D or 3-D, got shape {image.shape}")
    return image.shape[0], image.shape[1]


def _kernel_head(shape: tuple[int, int], trace: PromptTrace, sigma: float,
                 alpha: float, prior: float) -> np.ndarray:
    """Nadaraya-Watson style label smoothing with a Gaussian kernel.

    theta(p) = (sum_i w_i(p) l_i + alpha*prior) / (sum_i w_i(p) + alpha),
    w_i(p) = exp(-|p - x_i|^2 / (2 sigma^2)). Separable, so each prompt's
    weight map is an outer product of 1-D Gaussians.
    """
    h, w = shape
    if not trace.prompts:
        return np.full((h, w), prior, dtype=np.float64)
    rows = np.arange(h, dtype=np.float64)
    cols = np.arange(w, dtype=np.float64)
    prows = np.array([p.design.row for p in trace.prompts], dtype=np.float64)
    pcols = np.array([p.design.col for p in trace.prompts], dtype=np.float64)
    labels = np.array([p.label for p in trace.prompts], dtype=np.float64)
    inv = 1.0 / (2.0 * sigma * sigma)
    gr = np.exp(-((rows[None, :] - prows[:, None]) ** 2) * inv)  # (T, H)
    gc = np.exp(-((cols[None, :] - pcols[:, None]) ** 2) * inv)  # (T, W)
    wsum = np.einsum("tr,tc->rc", gr, gc)
    lsum = np.einsum("tr,tc->rc", gr * labels[:, None], gc)
    return (lsum + alpha * prior) / (wsum + alpha)


class KernelBackend:
    """Multi-bandwidth kernel smoother; one head per bandwidth."""

    def __init__(self, config: KernelBackendConfig | None = None):
        self.config = config or KernelBackendConfig()
        self.name = "kernel"
        self.num_heads = len(self.config.bandwidths)
        self._shape: tuple[int, int] | None = None

    def set_image(self, image: np.ndarray) -> None:
        self._shape = _image_shape(image)

    def predict(self, trace: PromptTrace) -> BeliefEnsemble:
        if self._shape is None:
            raise SessionStateError("predict called before set_image")
        c = self.config
        heads = [ProbabilityMap(_kernel_head(self._shape, trace, s,
                                             c.prior_weight, c.prior))
                 for s in c.bandwidths]
        return BeliefEnsemble(tuple(heads))


class OverconfidentBackend:
    """One kernel head sharpened through a logit temperature, copied K times.

    The copies are bit-identical, so the exact EIG map is zero everywhere:
    the backend expresses masks well but gives no usable prompt feedback.
    """

    def __init__(self, num_heads: int = 4, bandwidth: float = 8.0,
                 temperature: float = 6.0, prior_weight: float = 0.1,
                 prior: float = 0.5):
        if num_heads < 1:
            raise ValueError("num_heads must be >= 1")
        self.name = "overconfident"
        self.num_heads = num_heads
        self.bandwidth = float(bandwidth)
        self.temperature = float(temperature)
        self.prior_weight = float(prior_weight)
        self.prior = float(prior)
        self._shape: tuple[int, int] | None = None

    def set_image(self, image: np.ndarray) -> None:
        self._shape = _image_shape(image)

    def predict(self, trace: PromptTrace) -> BeliefEnsemble:
        if self._shape is None:
            raise SessionStateError("predict called before set_image")
        theta = _kernel_head(self._shape, trace, self.bandwidth,
                             self.prior_weight, self.prior)
        theta = np.clip(theta, 1e-12, 1.0 - 1e-12)
        sharp = 1.0 / (1.0 + np.exp(-self.temperature * np.log(theta / (1.0 - theta))))
        head = ProbabilityMap(sharp)
        return BeliefEnsemble((head,) * self.num_heads)


def _value_noise(rng: np.random.Generator, shape: tuple[int, int],
                 lattice: int = 6) -> np.ndarray:
    """Low-frequency value noise: a coarse random lattice upsampled bilinearly."""
    h, w = shape
    lr = min(lattice, h)
    lc = min(lattice, w)
    coarse = rng.normal(size=(lr, lc))
    ri = np.linspace(0.0, lr - 1.0, h)
    ci = np.linspace(0.0, lc - 1.0, w)
    r0 = np.clip(np.floor(ri).astype(int), 0, lr - 2) if lr > 1 else np.zeros(h, int)
    c0 = np.clip(np.floor(ci).astype(int), 0, lc - 2) if lc > 1 else np.zeros(w, int)
    fr = (ri - r0)[:, None]
    fc = (ci - c0)[None, :]
    a = coarse[np.ix_(r0, c0)]
    b = coarse[np.ix_(r0, np.minimum(c0 + 1, lc - 1))]
    c = coarse[np.ix_(np.minimum(r0 + 1, lr - 1), c0)]
    d = coarse[np.ix_(np.minimum(r0 + 1, lr - 1), np.minimum(c0 + 1, lc - 1))]
    return (a * (1 - fr) * (1 - fc) + b * (1 - fr) * fc
            + c * fr * (1 - fc) + d * fr * fc)


class PromptBlindBackend:
    """Fixed seeded smooth random ensemble, identical for every trace."""

    def __init__(self, num_heads: int = 4, seed: int = 0):
        if num_heads < 1:
            raise ValueError("num_heads must be >= 1")
        self.name = "blind"
        self.num_heads = num_heads
        self.seed = int(seed)
        self._ensemble: BeliefEnsemble | None = None

    def set_image(self, image: np.ndarray) -> None:
        shape = _image_shape(image)
        rng = np.random.default_rng(self.seed)
        heads = []
        for _ in range(self.num_heads):
            field = _value_noise(rng, shape)
            heads.append(ProbabilityMap(1.0 / (1.0 + np.exp(-1.5 * field))))
        self._ensemble = BeliefEnsemble(tuple(heads))

    def predict(self, trace: PromptTrace) -> BeliefEnsemble:
        if self._ensemble is None:
            raise SessionStateError("predict called before set_image")
        return self._ensemble
