import json
import sys
from pathlib import Path

import numpy as np
import pytest

from eigbench.cli import main
from eigbench.dataset import make_blob_dataset
from eigbench.pgm import read_pnm, write_pnm

STUB = str(Path(__file__).with_name("backend_stub.py"))


def test_usage_error_exit_2(capsys):
    assert main(["definitely-not-a-command"]) == 2
    assert main([]) == 2


def test_run_subcommand(tmp_path, capsys):
    data = tmp_path / "data"
    make_blob_dataset(data, count=1, size=16, seed=0, rmin=0.2, rmax=0.3)
    cfg = {"dataset_dir": str(data), "output_dir": str(tmp_path / "out"),
           "backend": {"type": "kernel"}, "steps": 2, "grid": 8,
           "policies": ["eig_guided"]}
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(cfg))
    assert main(["run", "--config", str(cfg_path)]) == 0
    assert (tmp_path / "out" / "results.csv").exists()
    assert (tmp_path / "out" / "manifest.json").exists()


def test_run_missing_dataset_exit_1(tmp_path, capsys):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps({"dataset_dir": str(tmp_path / "missing"),
                                    "output_dir": str(tmp_path / "out")}))
    assert main(["run", "--config", str(cfg_path)]) == 1
    assert "missing" in capsys.readouterr().err


def test_eig_map_subcommand(tmp_path, capsys):
    img = tmp_path / "i.pgm"
    mask = tmp_path / "m.pgm"
    write_pnm(img, np.zeros((16, 16), dtype=np.uint8))
    m = np.zeros((16, 16), dtype=np.uint8)
    m[5:11, 5:11] = 255
    write_pnm(mask, m)
    prompts = tmp_path / "p.json"
    prompts.write_text(json.dumps([{"row": 8, "col": 8},
                                   {"row": 1, "col": 1, "label": 0}]))
    out = tmp_path / "map"
    rc = main(["eig-map", "--image", str(img), "--mask", str(mask),
               "--backend", "kernel", "--prompts", str(prompts),
               "--out", str(out), "--grid", "8"])
    assert rc == 0
    raw = np.fromfile(f"{out}.f32", dtype="<f4")
    assert raw.shape == (64,)
    meta = json.loads(Path(f"{out}.json").read_text())
    assert meta["rows"] == meta["cols"] == 8
    assert read_pnm(f"{out}.pgm").shape == (8, 8)


def test_validate_nmc_small(capsys):
    rc = main(["validate-nmc", "--seeds", "3", "--n", "1024", "--m", "auto"])
    out = capsys.readouterr().out
    assert rc == 0
    assert "PASS" in out
    assert out.count("mean RMSE") == 3


def test_protocol_check_against_echo(capsys):
    rc = main(["protocol-check", "--backend-cmd",
               f"{sys.executable} {STUB} echo"])
    out = capsys.readouterr().out
    assert rc == 0
    assert "protocol-check PASS" in out


def test_protocol_check_failure(capsys):
    rc = main(["protocol-check", "--backend-cmd",
               f"{sys.executable} {STUB} bad-version"])
    assert rc == 1
    assert "version" in capsys.readouterr().err


def test_eig_map_nmc_estimator(tmp_path):
    img = tmp_path / "i.pgm"
    mask = tmp_path / "m.pgm"
    write_pnm(img, np.zeros((8, 8), dtype=np.uint8))
    m = np.zeros((8, 8), dtype=np.uint8)
    m[2:6, 2:6] = 255
    write_pnm(mask, m)
    prompts = tmp_path / "p.json"
    prompts.write_text(json.dumps([{"row": 4, "col": 4}]))
    out = tmp_path / "map"
    rc = main(["eig-map", "--image", str(img), "--mask", str(mask),
               "--backend", "kernel", "--prompts", str(prompts),
               "--out", str(out), "--grid", "4", "--estimator", "nmc",
               "--n", "128", "--m", "auto", "--seed", "3"])
    assert rc == 0
    assert np.fromfile(f"{out}.f32", dtype="<f4").shape == (16,)
