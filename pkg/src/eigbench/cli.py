"""Command-line interface.

Subcommands:
  run            execute a full experiment from a JSON config (or manifest)
  eig-map        compute one EIG map for a given image, mask, and prompt list
  validate-nmc   check NMC-vs-exact convergence and exit nonzero on failure
  protocol-check drive an external backend through the wire protocol
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .core import BinaryMask, Design, DesignGrid, PointPrompt, PromptTrace
from .dataset import _read_raster  # same raster loaders the dataset uses
from .eig import EXACT, NMC, exact_eig_map, nmc_eig_map, NmcConfig
from .experiment import (
    BackendSpec,
    export_heatmap,
    load_run_config,
    make_session,
    run_experiment,
)
from .protocol import ProtocolClient
from .simulation import annotator_label
from .validate import default_schedule, full_grid, rmse_over_seeds

RMSE_TOLERANCE_NATS = 0.05


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="eigbench",
        description="Expected-information-gain benchmark for point-prompt "
                    "interactive segmenters")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment from a JSON config")
    p_run.add_argument("--config", required=True)

    p_map = sub.add_parser("eig-map", help="export one EIG map for a prompt trace")
    p_map.add_argument("--image", required=True)
    p_map.add_argument("--mask", required=True)
    p_map.add_argument("--backend", required=True,
                       choices=["kernel", "overconfident", "blind", "external"])
    p_map.add_argument("--backend-cmd", default=None)
    p_map.add_argument("--prompts", required=True,
                       help="JSON file: list of {row, col[, label]}; a missing "
                            "label is filled in from the mask")
    p_map.add_argument("--out", required=True, help="output path prefix")
    p_map.add_argument("--grid", type=int, default=30)
    p_map.add_argument("--estimator", choices=[EXACT, NMC], default=EXACT)
    p_map.add_argument("--n", type=int, default=4096)
    p_map.add_argument("--m", default="auto")
    p_map.add_argument("--seed", type=int, default=0)

    p_val = sub.add_parser("validate-nmc",
                           help="RMSE of NMC vs exact along a sample schedule")
    p_val.add_argument("--seeds", type=int, default=50)
    p_val.add_argument("--n", type=int, default=4096)
    p_val.add_argument("--m", default="auto")

    p_chk = sub.add_parser("protocol-check",
                           help="conformance-check an external backend")
    p_chk.add_argument("--backend-cmd", required=True)
    return parser


def _parse_inner_m(text: str) -> int | None:
    if text == "auto":
        return None
    return int(text)


def _cmd_run(args) -> int:
    result = run_experiment(load_run_config(args.config))
    print(f"run {result.run_id}: wrote {result.results_path}")
    for failure in result.failures:
        print(f"  incomplete: {failure['image_id']}/{failure['policy']}: "
              f"{failure['error']}", file=sys.stderr)
    return 0


def _cmd_eig_map(args) -> int:
    image = _read_raster(args.image)
    mask_raw = _read_raster(args.mask)
    gt = BinaryMask((np.asarray(mask_raw) != 0).astype(np.uint8))
    with open(args.prompts, "r", encoding="utf-8") as fh:
        entries = json.load(fh)
    prompts = []
    for entry in entries:
        design = Design(int(entry["row"]), int(entry["col"]))
        label = entry.get("label")
        if label is None:
            label = annotator_label(gt, design)
        prompts.append(PointPrompt(design, int(label)))
    trace = PromptTrace(tuple(prompts))

    session = make_session(BackendSpec(type=args.backend, cmd=args.backend_cmd))
    try:
        session.set_image(image)
        ensemble = session.predict(trace)
    finally:
        close = getattr(session, "close", None)
        if close is not None:
            close()
    grid = DesignGrid.for_image(gt.height, gt.width, args.grid, args.grid)
    if args.estimator == EXACT:
        eig_map = exact_eig_map(ensemble, grid)
    else:
        inner = _parse_inner_m(args.m)
        cfg = (NmcConfig.auto(args.n, seed=args.seed) if inner is None
               else NmcConfig(args.n, inner, seed=args.seed))
        eig_map = nmc_eig_map(ensemble, grid, cfg)
    sidecar = export_heatmap(eig_map, args.out)
    print(f"wrote {args.out}.f32/.json/.pgm "
          f"(min={sidecar['min']:.6f}, max={sidecar['max']:.6f} nats)")
    return 0


def _cmd_validate_nmc(args) -> int:
    schedule = default_schedule(args.n, _parse_inner_m(args.m))
    means = rmse_over_seeds(args.seeds, schedule)
    for (n, m), rmse in zip(schedule, means):
        print(f"N={n:<6d} M={m:<4d} mean RMSE = {rmse:.6f} nats")
    decreasing = all(a > b for a, b in zip(means, means[1:]))
    ok = decreasing and means[-1] <= RMSE_TOLERANCE_NATS
    print(f"decreasing={decreasing} final<={RMSE_TOLERANCE_NATS}: "
          f"{means[-1] <= RMSE_TOLERANCE_NATS} -> {'PASS' if ok else 'FAIL'}")
    return 0 if ok else 1


def _cmd_protocol_check(args) -> int:
    checks: list[tuple[str, str]] = []
    with ProtocolClient.launch(args.backend_cmd) as session:
        checks.append(("handshake",
                       f"name={session.name!r} num_heads={session.num_heads}"))
        rng = np.random.default_rng(0)
        image = rng.integers(0, 256, size=(8, 8), dtype=np.uint8)
        session.set_image(image)
        checks.append(("set_image", "8x8 grayscale acknowledged"))
        for label, trace in (("empty trace", PromptTrace()),
                             ("two prompts", PromptTrace((
                                 PointPrompt(Design(1, 2), 1),
                                 PointPrompt(Design(5, 6), 0))))):
            ensemble = session.predict(trace)
            if (ensemble.height, ensemble.width) != (8, 8):
                raise RuntimeError("prediction shape mismatch")
            checks.append((f"predict ({label})",
                           f"{ensemble.num_heads} heads, values in "
                           f"[{ensemble.stacked.min():.3f}, "
                           f"{ensemble.stacked.max():.3f}]"))
    for name, detail in checks:
        print(f"ok: {name}: {detail}")
    print("protocol-check PASS")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on usage errors
        return int(exc.code or 0)
    handlers = {
        "run": _cmd_run,
        "eig-map": _cmd_eig_map,
        "validate-nmc": _cmd_validate_nmc,
        "protocol-check": _cmd_protocol_check,
    }
    try:
        return handlers[args.command](args)
    except BrokenPipeError:
        return 1
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
