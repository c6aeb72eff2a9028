"""Experiment orchestration: backend construction, episode runs, results CSV,
run manifest, and EIG heatmap export.

Output contract per run directory:
  results.csv   one row per (item, policy, step), append-ordered by sorted
                item id, declared policy order, ascending step;
  manifest.json full resolved config, run id, dataset inventory; re-running
                from a manifest reproduces the run;
  heatmaps/     (optional) per-step EIG map triplets <stem>.f32/.json/.pgm.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .backends import (
    KernelBackend,
    KernelBackendConfig,
    OverconfidentBackend,
    PromptBlindBackend,
    SegmenterSession,
)
from .core import LN2
from .dataset import load_dataset
from .eig import EXACT, NMC, EigMap, NmcConfig
from .pgm import write_pnm
from .protocol import ProtocolClient
from .simulation import POLICY_EIG, POLICY_ORACLE, EpisodeConfig, run_episode

BACKEND_CMD_ENV = "EIGBENCH_BACKEND_CMD"

RESULT_COLUMNS = ("run_id", "image_id", "backend", "policy", "step",
                  "design_row", "design_col", "prompt_label", "dice",
                  "max_eig_nats", "wall_ms")


class ConfigError(ValueError):
    """Run configuration is invalid or incomplete."""


@dataclass(frozen=True)
class BackendSpec:
    type: str = "kernel"
    cmd: str | None = None
    num_heads: int = 4
    seed: int = 0

    def __post_init__(self):
        if self.type not in ("kernel", "overconfident", "blind", "external"):
            raise ConfigError(f"unknown backend type {self.type!r}")

    def resolved_cmd(self) -> str:
        cmd = os.environ.get(BACKEND_CMD_ENV) or self.cmd
        if not cmd:
            raise ConfigError("external backend requires a launch command "
                              f"(backend.cmd or ${BACKEND_CMD_ENV})")
        return cmd


@dataclass(frozen=True)
class RunConfig:
    dataset_dir: str
    output_dir: str
    backend: BackendSpec = field(default_factory=BackendSpec)
    policies: tuple[str, ...] = (POLICY_EIG, POLICY_ORACLE)
    steps: int = 10
    grid: int = 30
    estimator: str = EXACT
    nmc_outer_n: int = 4096
    nmc_inner_m: int | None = None  # None = auto schedule
    seed: int = 0
    export_heatmaps: bool = False
    run_id: str | None = None

    def __post_init__(self):
        for policy in self.policies:
            if policy not in (POLICY_EIG, POLICY_ORACLE):
                raise ConfigError(f"unknown policy {policy!r}")
        if self.estimator not in (EXACT, NMC):
            raise ConfigError(f"unknown estimator {self.estimator!r}")

    def nmc_config(self, seed: int) -> NmcConfig:
        if self.nmc_inner_m is None:
            return NmcConfig.auto(self.nmc_outer_n, seed=seed)
        return NmcConfig(self.nmc_outer_n, self.nmc_inner_m, seed=seed)


def run_config_from_dict(raw: dict) -> RunConfig:
    """Build a RunConfig from a parsed JSON config or manifest."""
    if "config" in raw and isinstance(raw["config"], dict):
        inner = dict(raw["config"])
        inner.setdefault("run_id", raw.get("run_id"))
        raw = inner
    raw = dict(raw)
    backend = raw.pop("backend", {})
    if isinstance(backend, str):
        backend = {"type": backend}
    try:
        spec = BackendSpec(**backend)
        known = RunConfig.__dataclass_fields__
        unknown = [k for k in raw if k not in known]
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        if "policies" in raw:
            raw["policies"] = tuple(raw["policies"])
        return RunConfig(backend=spec, **raw)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_run_config(path: str | os.PathLike) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return run_config_from_dict(json.load(fh))


def make_session(spec: BackendSpec) -> SegmenterSession:
    if spec.type == "kernel":
        return KernelBackend(KernelBackendConfig())
    if spec.type == "overconfident":
        return OverconfidentBackend(num_heads=spec.num_heads)
    if spec.type == "blind":
        return PromptBlindBackend(num_heads=spec.num_heads, seed=spec.seed)
    return ProtocolClient.launch(spec.resolved_cmd())


def episode_seed(master_seed: int, image_id: str, policy: str) -> int:
    digest = hashlib.sha256(f"{master_seed}:{image_id}:{policy}".encode()).digest()
    return int.from_bytes(digest[:8], "big") >> 1


def derive_run_id(cfg: RunConfig) -> str:
    payload = asdict(replace(cfg, run_id=None))
    blob = json.dumps(payload, sort_keys=True).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:12]


def export_heatmap(eig_map: EigMap, path_prefix: str | os.PathLike) -> dict:
    """Write <prefix>.f32 (raw LE float32), .json sidecar, and .pgm preview.

    The PGM rescales linearly so 0 maps to 0 and ln 2 maps to 255 (clamped,
    floor rounding). The sidecar min/max describe the persisted float32 data.
    """
    prefix = Path(path_prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    data32 = np.ascontiguousarray(eig_map.values, dtype="<f4")
    with open(f"{prefix}.f32", "wb") as fh:
        fh.write(data32.tobytes())
    sidecar = {
        "rows": int(data32.shape[0]),
        "cols": int(data32.shape[1]),
        "units": "nats",
        "min": float(data32.min()),
        "max": float(data32.max()),
    }
    with open(f"{prefix}.json", "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, sort_keys=True, indent=2)
        fh.write("\n")
    scaled = np.clip(data32.astype(np.float64), 0.0, LN2) / LN2 * 255.0
    write_pnm(f"{prefix}.pgm", np.floor(scaled).astype(np.uint8))
    return sidecar


def _fmt(value) -> str:
    if value is None:
        return ""
    return repr(float(value))


@dataclass(frozen=True)
class RunResult:
    run_id: str
    results_path: str
    manifest_path: str
    failures: tuple[dict, ...] = ()


def run_experiment(cfg: RunConfig) -> RunResult:
    """Run every (item, policy) episode and write results.csv + manifest.json.

    Item-level failures (incomplete episodes) are recorded in the manifest and
    the run continues; configuration errors abort.
    """
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    items, skipped = load_dataset(cfg.dataset_dir)
    run_id = cfg.run_id or derive_run_id(cfg)

    rows: list[list[str]] = []
    failures: list[dict] = []
    for item in items:
        for policy in cfg.policies:
            seed = episode_seed(cfg.seed, item.id, policy)
            episode_cfg = EpisodeConfig(
                steps=cfg.steps, grid=cfg.grid, policy=policy,
                estimator=cfg.estimator,
                nmc=cfg.nmc_config(seed) if cfg.estimator == NMC else None,
                seed=seed)
            on_eig_map = None
            if cfg.export_heatmaps and policy == POLICY_EIG:
                heat_dir = out_dir / "heatmaps"

                def on_eig_map(step, eig_map, _id=item.id):
                    export_heatmap(eig_map, heat_dir / f"{_id}_step{step:02d}")

            session = make_session(cfg.backend)
            try:
                record = run_episode(session, item.image, item.gt, episode_cfg,
                                     on_eig_map=on_eig_map)
            finally:
                close = getattr(session, "close", None)
                if close is not None:
                    close()
            if not record.complete:
                failures.append({"image_id": item.id, "policy": policy,
                                 "error": record.error})
            for step in record.steps:
                rows.append([
                    run_id, item.id, cfg.backend.type, policy, str(step.step),
                    str(step.design.row), str(step.design.col), str(step.label),
                    _fmt(step.dice), _fmt(step.max_eig), f"{step.wall_ms:.3f}",
                ])

    results_path = out_dir / "results.csv"
    with open(results_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RESULT_COLUMNS)
        writer.writerows(rows)

    manifest = {
        "run_id": run_id,
        "config": asdict(replace(cfg, run_id=run_id)),
        "dataset": {
            "items": [item.id for item in items],
            "skipped": [asdict(s) for s in skipped],
        },
        "failures": failures,
    }
    manifest_path = out_dir / "manifest.json"
    with open(manifest_path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return RunResult(run_id, str(results_path), str(manifest_path),
                     tuple(failures))
