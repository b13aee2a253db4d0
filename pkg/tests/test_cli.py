from __future__ import annotations

import csv
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest
from pypdf import PdfReader

import leafkit
import pipeline
import qmat
from foliation import load_leaf
from operator_core import PureState
from run_manifest import verify_checksums

REPO_ROOT = Path(__file__).resolve().parents[1]

UNIFORM = {"model": {"L": 4}, "state": {"uniform": True}}
THERMAL = {
    "model": {"L": 4},
    "state": {"h0": {"h": 1.5}, "beta": 0.5},
    "diagnostics": {"shell_size": 2, "delta_points": 11},
    "evolve": {"t_max": 1.0, "dt": 0.5},
}


def _config(tmp_path: Path, doc: dict, name: str = "cfg.json") -> str:
    path = tmp_path / name
    path.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    return str(path)


def _files(out: Path) -> list[tuple[str, str]]:
    manifest = json.loads((out / "manifest.json").read_text(encoding="utf-8"))
    return [(f["path"], f["sha256"]) for f in manifest["files"]]


def test_foliate_uniform_state(tmp_path: Path) -> None:
    out = tmp_path / "out"
    code = leafkit.main(["foliate", "--config", _config(tmp_path, UNIFORM), "--out", str(out), "--allow-degenerate"])
    assert code == 0

    summary = json.loads((out / "foliation" / "summary.json").read_text(encoding="utf-8"))
    (row,) = summary["points"]
    assert row["tag"] == "L4_uniform"
    assert row["dim"] == 16
    assert row["incoherence_ratio"] == pytest.approx(1.0, abs=1e-9)
    assert row["qfi"] == pytest.approx(0.0, abs=1e-12)

    leaf = json.loads((out / "leaf" / "L4_uniform" / "leaf.json").read_text(encoding="utf-8"))
    assert leaf["dim"] == 16
    assert leaf["populations"] == pytest.approx([1 / 16] * 16)
    kind, states = qmat.read(str(out / "leaf" / "L4_uniform" / "states.qmat"))
    assert kind == "unitary" and states.shape == (16, 16)

    assert verify_checksums(str(out)) == []
    paths = [p for p, _ in _files(out)]
    assert "manifest.json" not in paths
    assert "leaf/L4_uniform/h_rho.qmat" in paths

    loaded = load_leaf(str(out / "leaf" / "L4_uniform"))
    assert np.allclose(loaded.populations, 1 / 16)
    assert np.array_equal(loaded.states, states)


def test_foliate_decomposition_check_follows_the_seed(tmp_path: Path) -> None:
    cfg = _config(tmp_path, dict(THERMAL, foliation={"oracle_samples": 200}))
    margins = []
    for name, seed in (("a", "5"), ("b", "5"), ("c", "6")):
        out = tmp_path / name
        assert leafkit.main(["foliate", "--config", cfg, "--out", str(out), "--allow-degenerate", "--seed", seed]) == 0
        (row,) = json.loads((out / "foliation" / "summary.json").read_text(encoding="utf-8"))["points"]
        margins.append(row["oracle_margin"])
    assert margins[0] == margins[1]
    assert all(m >= -1e-9 for m in margins)
    manifest = json.loads((tmp_path / "c" / "manifest.json").read_text(encoding="utf-8"))
    assert manifest["config"]["seed"] == 6
    assert manifest["config"]["foliation"]["oracle_samples"] == 200

    out = tmp_path / "off"
    assert leafkit.main(["foliate", "--config", _config(tmp_path, THERMAL, "off.json"), "--out", str(out), "--allow-degenerate"]) == 0
    (row,) = json.loads((out / "foliation" / "summary.json").read_text(encoding="utf-8"))["points"]
    assert row["oracle_margin"] is None


def test_diagnostics_run_is_reproducible(tmp_path: Path) -> None:
    cfg = _config(tmp_path, dict(THERMAL, output={"emit": ["leaf", "diagnostics", "report"]}))
    runs = []
    for name, extra in (("a", ["--threads", "1"]), ("b", ["--threads", "3"]), ("c", ["--no-cache"])):
        out = tmp_path / name
        assert leafkit.main(["diagnostics", "--config", cfg, "--out", str(out), "--allow-degenerate", *extra]) == 0
        runs.append(_files(out))
    assert runs[0] == runs[1] == runs[2]

    out = tmp_path / "a"
    base = out / "diagnostics" / "L4_beta0.5"
    assert sorted(p.name for p in base.glob("*.csv"))[:3] == ["x_1.csv", "xx_1-2.csv", "xy_1-2.csv"]
    with open(base / "zz_1-2.csv", newline="", encoding="utf-8") as f:
        rows = list(csv.reader(f))
    assert rows[0] == ["delta", "N", "log_d_N"]
    assert len(rows) == 12
    assert 0 <= int(rows[1][1]) <= 16
    assert rows[-1][1] == "0" and rows[-1][2] == ""
    sidecar = json.loads((base / "zz_1-2.json").read_text(encoding="utf-8"))
    assert sidecar["shell_size"] == 2 and sidecar["L"] == 4

    reader = PdfReader(str(out / "report.pdf"))
    assert "leafkit run summary" in reader.pages[0].extract_text()


def test_evolve_zero_time_writes_identity_sentinel(tmp_path: Path) -> None:
    doc = dict(THERMAL, evolve={"t_max": 0.0, "dt": 0.5, "observables": "main"})
    out = tmp_path / "out"
    assert leafkit.main(["evolve", "--config", _config(tmp_path, doc), "--out", str(out), "--allow-degenerate"]) == 0
    base = out / "evolution" / "L4_beta0.5"
    assert (base / "id.csv").read_text(encoding="utf-8") == "t,exact,representative,band_low,band_high\n0,1,1,1,1\n"
    assert sorted(p.name for p in base.glob("*.csv")) == ["id.csv", "z_1.csv", "zz_1-2.csv"]
    summary = json.loads((base / "summary.json").read_text(encoding="utf-8"))
    assert summary["band_coverage"]["id"] == 1.0


def test_benchmarks_are_written_next_to_the_leaf_curves(tmp_path: Path) -> None:
    doc = dict(THERMAL, diagnostics={"shell_size": 4, "delta_points": 5, "observables": "main", "benchmarks": True})
    out = tmp_path / "out"
    assert leafkit.main(["diagnostics", "--config", _config(tmp_path, doc), "--out", str(out), "--allow-degenerate"]) == 0
    for name in ("benchmark_commuting", "benchmark_integrable"):
        assert (out / "diagnostics" / name / "L4" / "z_1.csv").is_file()


def test_config_errors_exit_1(tmp_path: Path, capsys: pytest.CaptureFixture[str]) -> None:
    bad = tmp_path / "bad.json"
    bad.write_text('{\n  "model": {"L": 4},\n  "state": {"uniform": true},\n  "diagnostics": {"shelll_size": 3}\n}\n', encoding="utf-8")
    assert leafkit.main(["diagnostics", "--config", str(bad), "--out", str(tmp_path / "o")]) == 1
    err = capsys.readouterr().err
    assert "config_error" in err and "line 4" in err and "shelll_size" in err

    assert leafkit.main(["foliate"]) == 1
    assert leafkit.main(["figure", "--out", str(tmp_path / "o")]) == 1
    assert leafkit.main(["figure", "nope", "--out", str(tmp_path / "o")]) == 1
    assert leafkit.main(["explode"]) == 1


def test_state_file_errors(tmp_path: Path, capsys: pytest.CaptureFixture[str]) -> None:
    corrupt = tmp_path / "corrupt.qmat"
    corrupt.write_bytes(b"QMAT1 d=16 kind=density\n" + bytes(100))
    cfg = _config(tmp_path, {"model": {"L": 4}, "state": {"file": "corrupt.qmat"}})
    assert leafkit.main(["foliate", "--config", cfg, "--out", str(tmp_path / "o")]) == 3
    assert "corrupt.qmat" in capsys.readouterr().err

    psi = PureState.normalized(np.ones(16))
    qmat.write(str(tmp_path / "pure.qmat"), psi.projector(), "density")
    cfg = _config(tmp_path, {"model": {"L": 4}, "state": {"file": "pure.qmat"}}, "pure.json")
    assert leafkit.main(["foliate", "--config", cfg, "--out", str(tmp_path / "p")]) == 2
    assert "rank_deficient" in capsys.readouterr().err

    qmat.write(str(tmp_path / "small.qmat"), np.eye(4) / 4, "density")
    cfg = _config(tmp_path, {"model": {"L": 4}, "state": {"file": "small.qmat"}}, "small.json")
    assert leafkit.main(["foliate", "--config", cfg, "--out", str(tmp_path / "s")]) == 1


def test_figure_fig1_with_coarse_grid(tmp_path: Path) -> None:
    cfg = _config(tmp_path, {"fig1": {"grid_step": 0.4, "curve_leaves": 2, "beta_max": 5.0, "beta_points": 3}})
    out = tmp_path / "fig1"
    assert leafkit.main(["figure", "fig1", "--config", cfg, "--out", str(out)]) == 0
    with open(out / "figures" / "fig1_points.csv", newline="", encoding="utf-8") as f:
        points = list(csv.reader(f))
    assert points[0] == ["n1", "n3", "n8", "incoherence", "leaf_id"]
    assert len(points) > 1
    with open(out / "figures" / "fig1_curves.csv", newline="", encoding="utf-8") as f:
        curves = list(csv.reader(f))
    assert curves[0] == ["leaf_id", "beta", "n1", "n3", "n8", "energy", "purity"]
    assert len(curves) - 1 in (3, 6)


def test_figure_command_dispatch(tmp_path: Path, monkeypatch: pytest.MonkeyPatch) -> None:
    seen = {}

    def fake_figure(name, cfg, options=None):
        seen["name"] = name
        seen["L"] = cfg.sweep_L
        seen["threads"] = options.threads
        return pipeline.RunResult(cfg.out_dir, str(tmp_path / "manifest.json"), [])

    monkeypatch.setattr(pipeline, "cmd_figure", fake_figure)
    code = leafkit.main(["figure", "s2", "--L", "6,8", "--threads", "2", "--out", str(tmp_path / "s2")])
    assert code == 0
    assert seen == {"name": "s2", "L": (6, 8), "threads": 2}


def test_cli_subprocess_exit_codes(tmp_path: Path) -> None:
    script = REPO_ROOT / "leafkit.py"
    proc = subprocess.run(
        [sys.executable, str(script), "figure", "nope", "--out", str(tmp_path / "nope")],
        capture_output=True,
        text=True,
        cwd=str(tmp_path),
    )
    assert proc.returncode == 1
    assert "invalid_parameter" in proc.stderr

    cfg = _config(tmp_path, {"model": {"L": 2}, "state": {"uniform": True}})
    proc = subprocess.run(
        [sys.executable, str(script), "foliate", "--config", cfg, "--out", str(tmp_path / "run"), "--no-cache", "--allow-degenerate"],
        capture_output=True,
        text=True,
        cwd=str(tmp_path),
    )
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "run" / "manifest.json").is_file()
