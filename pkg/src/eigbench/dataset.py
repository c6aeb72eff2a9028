"""Dataset ingestion (paired image/mask rasters) and synthetic blob data.

A dataset directory holds pairs ``<id>.img.pgm`` + ``<id>.mask.pgm``
(binary P5, maxval 255); ``.png`` is accepted as an optional extension when
Pillow is installed. Masks binarize at nonzero.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import BinaryMask
from .pgm import read_pnm, write_pnm

IMG_SUFFIXES = (".img.pgm", ".img.png")
MASK_SUFFIXES = (".mask.pgm", ".mask.png")


class DatasetError(ValueError):
    """Dataset directory violates the pairing contract."""


@dataclass(frozen=True, eq=False)
class DatasetItem:
    id: str
    image: np.ndarray  # uint8, (H, W) gray or (H, W, 3) RGB
    gt: BinaryMask


@dataclass(frozen=True)
class SkippedItem:
    id: str
    reason: str


def _read_raster(path: str | os.PathLike) -> np.ndarray:
    path = Path(path)
    if path.suffix == ".png":
        try:
            from PIL import Image
        except ImportError as exc:
            raise DatasetError(f"{path.name}: PNG support needs Pillow") from exc
        return np.asarray(Image.open(path))
    return read_pnm(path)


def _find(directory: Path, item_id: str, suffixes: tuple[str, ...]) -> Path | None:
    for suffix in suffixes:
        candidate = directory / f"{item_id}{suffix}"
        if candidate.exists():
            return candidate
    return None


def load_dataset(directory: str | os.PathLike,
                 ) -> tuple[list[DatasetItem], list[SkippedItem]]:
    """Load all pairs, sorted by id.

    A missing pair member raises DatasetError naming the id; a per-item
    defect (e.g. dimension mismatch) skips that item and reports it in the
    returned SkippedItem list so the run manifest can record it.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise DatasetError(f"dataset directory does not exist: {directory}")
    ids = set()
    for entry in directory.iterdir():
        for suffix in IMG_SUFFIXES + MASK_SUFFIXES:
            if entry.name.endswith(suffix):
                ids.add(entry.name[:-len(suffix)])
    items: list[DatasetItem] = []
    skipped: list[SkippedItem] = []
    for item_id in sorted(ids):
        img_path = _find(directory, item_id, IMG_SUFFIXES)
        mask_path = _find(directory, item_id, MASK_SUFFIXES)
        if img_path is None or mask_path is None:
            missing = "image" if img_path is None else "mask"
            raise DatasetError(f"item {item_id!r} is missing its {missing} file")
        try:
            image = _read_raster(img_path)
            mask_raw = _read_raster(mask_path)
            if mask_raw.ndim != 2:
                raise DatasetError(f"mask for {item_id!r} must be single-channel")
            if image.shape[:2] != mask_raw.shape:
                raise DatasetError(
                    f"item {item_id!r}: image {image.shape[:2]} vs mask {mask_raw.shape}")
            gt = BinaryMask((mask_raw != 0).astype(np.uint8))
        except ValueError as exc:  # DatasetError, PnmError, bad mask values
            skipped.append(SkippedItem(item_id, str(exc)))
            continue
        items.append(DatasetItem(item_id, image, gt))
    return items, skipped


def _blob_mask(rng: np.random.Generator, size: int,
               rmin: float, rmax: float) -> np.ndarray:
    """One random ellipse near the image center."""
    rr, cc = np.mgrid[0:size, 0:size]
    cy = rng.uniform(0.32, 0.68) * size
    cx = rng.uniform(0.32, 0.68) * size
    ry = rng.uniform(rmin, rmax) * size
    rx = rng.uniform(rmin, rmax) * size
    angle = rng.uniform(0.0, np.pi)
    dy, dx = rr - cy, cc - cx
    u = dy * np.cos(angle) + dx * np.sin(angle)
    v = -dy * np.sin(angle) + dx * np.cos(angle)
    return ((u / ry) ** 2 + (v / rx) ** 2 <= 1.0).astype(np.uint8)


def make_blob_dataset(directory: str | os.PathLike, count: int = 10,
                      size: int = 64, seed: int = 0,
                      rmin: float = 0.14, rmax: float = 0.20) -> list[str]:
    """Write ``count`` synthetic image/mask PGM pairs; returns the ids.

    Masks are random ellipses spanning rmin..rmax of the image side; images
    are the mask brightened over a noisy background (the synthetic backends
    ignore image content, but the files look like real pairs).
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    ids = []
    for i in range(count):
        item_id = f"blob{i:03d}"
        mask = _blob_mask(rng, size, rmin, rmax)
        noise = rng.integers(40, 90, size=(size, size))
        image = np.clip(noise + mask.astype(np.int64) * 120, 0, 255).astype(np.uint8)
        write_pnm(directory / f"{item_id}.img.pgm", image)
        write_pnm(directory / f"{item_id}.mask.pgm", mask * 255)
        ids.append(item_id)
    return ids
