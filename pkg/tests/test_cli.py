import json
import subprocess
import sys
from pathlib import Path

import pytest

from scorelab.cli import main
from scorelab.runner import default_output_root


def tree_files(root: Path) -> dict[str, bytes]:
    return {
        str(p.relative_to(root)): p.read_bytes()
        for p in sorted(root.rglob("*"))
        if p.is_file()
    }


def test_list_scenarios(capsys):
    assert main(["list-scenarios"]) == 0
    out = capsys.readouterr().out
    for name in ("two-deltas", "five-points", "gaussian-subspace", "repro-mini"):
        assert name in out


def test_validate_bundled_ok(capsys):
    assert main(["validate", "two-deltas"]) == 0
    assert capsys.readouterr().out.strip() == "ok"


def test_validate_reports_every_error(tmp_path, capsys):
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({
        "name": "bad name!",
        "sigma2_grid": {"min": -1.0, "max": 2.0, "n": 0},
        "outputs": [{"kind": "mystery", "path": "x.csv"}],
    }))
    assert main(["validate", str(cfg)]) == 2
    err = capsys.readouterr().err
    lines = [l for l in err.splitlines() if l.startswith("error: ")]
    assert len(lines) >= 4
    assert any("name:" in l for l in lines)
    assert any("distribution: required" in l for l in lines)
    assert any("mystery" in l for l in lines)


def test_unknown_scenario_reference(capsys):
    assert main(["validate", "never-bundled"]) == 2
    assert "no such file or bundled scenario" in capsys.readouterr().err


def test_run_repro_mini_writes_all_artifacts(tmp_path, capsys):
    assert main(["run", "repro-mini", "--out", str(tmp_path / "a")]) == 0
    out = capsys.readouterr().out
    run_dir = tmp_path / "a" / "repro-mini"
    expected = [
        "profile.csv", "tree.json", "divergence.csv", "fisher.csv",
        "trajectories.csv", "game.csv",
    ]
    for name in expected:
        assert (run_dir / name).is_file(), name
        fig = run_dir / (Path(name).stem + ".svg")
        assert fig.is_file(), fig
        assert fig.read_bytes().lstrip().startswith(b"<?xml")
    manifest = json.loads((run_dir / "manifest.json").read_text())
    assert manifest["scenario"] == "repro-mini"
    assert manifest["master_seed"] == 1
    assert len(manifest["config_hash"]) == 64
    assert {e["kind"] for e in manifest["outputs"]} == {
        "entropy-profile", "fixed-point-tree", "divergence-sweep",
        "fisher-sweep", "trajectory-ensemble", "twentyq",
    }
    assert "manifest:" in out and "repro-mini" in out


def test_rerun_is_byte_identical_across_thread_counts(tmp_path):
    assert main(["run", "repro-mini", "--out", str(tmp_path / "a"), "--threads", "1"]) == 0
    assert main(["run", "repro-mini", "--out", str(tmp_path / "b"), "--threads", "3"]) == 0
    fa = tree_files(tmp_path / "a")
    fb = tree_files(tmp_path / "b")
    assert set(fa) == set(fb)
    for rel in fa:
        if rel.endswith("manifest.json"):
            continue
        assert fa[rel] == fb[rel], f"{rel} differs between runs"


def test_output_root_resolution(tmp_path, monkeypatch, capsys):
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv("SCORELAB_OUTPUT_ROOT", raising=False)
    assert default_output_root() == Path("scorelab-out")
    monkeypatch.setenv("SCORELAB_OUTPUT_ROOT", str(tmp_path / "envroot"))
    assert default_output_root() == tmp_path / "envroot"
    assert default_output_root("explicit") == Path("explicit")
    # a cheap scenario exercises the env root end to end
    cfg = tmp_path / "tiny.json"
    cfg.write_text(json.dumps({
        "name": "tiny",
        "distribution": {"kind": "delta-mixture", "points": [[1.0], [-1.0]]},
        "outputs": [{"kind": "twentyq", "path": "game.csv"}],
    }))
    assert main(["run", str(cfg)]) == 0
    capsys.readouterr()
    assert (tmp_path / "envroot" / "tiny" / "game.csv").is_file()


def test_render_every_artifact_kind(tmp_path, capsys):
    assert main(["run", "repro-mini", "--out", str(tmp_path / "a")]) == 0
    run_dir = tmp_path / "a" / "repro-mini"
    for name in ("profile.csv", "divergence.csv", "fisher.csv",
                 "trajectories.csv", "game.csv", "tree.json"):
        out = tmp_path / f"fig-{Path(name).stem}.svg"
        assert main(["render", str(run_dir / name), "--out", str(out)]) == 0
        assert out.read_bytes().lstrip().startswith(b"<?xml")
    # re-rendering is byte-stable
    out = tmp_path / "fig-profile.svg"
    first = out.read_bytes()
    assert main(["render", str(run_dir / "profile.csv"), "--out", str(out)]) == 0
    assert out.read_bytes() == first
    # tree rendering accepts a scenario for density context
    assert main([
        "render", str(run_dir / "tree.json"),
        "--out", str(tmp_path / "tree-ctx.svg"),
        "--scenario", "repro-mini",
    ]) == 0
    assert (tmp_path / "tree-ctx.svg").is_file()
    capsys.readouterr()


def test_render_rejects_unknown_artifacts(tmp_path, capsys):
    bad = tmp_path / "noise.csv"
    bad.write_text("a,b,c\n1,2,3\n")
    assert main(["render", str(bad)]) == 2
    assert "unrecognized artifact header" in capsys.readouterr().err
    assert main(["render", str(tmp_path / "missing.csv")]) == 2


def test_numeric_failure_exits_3_and_cleans_up(tmp_path, capsys):
    cfg = tmp_path / "critical.json"
    # the sweep ends exactly at the critical variance, so the spawned branch
    # never separates and the tracer asks for a finer grid
    cfg.write_text(json.dumps({
        "name": "critical",
        "distribution": {"kind": "delta-mixture", "points": [[1.0], [-1.0]]},
        "outputs": [{
            "kind": "fixed-point-tree", "path": "tree.json",
            "sigma2_hi": 100.0, "sigma2_lo": 0.9999999999999,
            "n_grid": 50,
        }],
    }))
    assert main(["run", str(cfg), "--out", str(tmp_path / "out")]) == 3
    assert "numeric failure" in capsys.readouterr().err
    run_dir = tmp_path / "out" / "critical"
    if run_dir.exists():
        assert [p for p in run_dir.rglob("*") if p.is_file()] == []


def test_twentyq_stdout_and_file(tmp_path, capsys):
    assert main(["twentyq", "--n", "16", "--seed", "3"]) == 0
    out = capsys.readouterr().out
    assert out.startswith("step,N_j,answer,delta_H_bits")
    assert "4.0 expected bits" in out and "4 questions" in out
    dest = tmp_path / "game.csv"
    assert main([
        "twentyq", "--n", "16", "--policy", "fixed-element", "--element", "5",
        "--out-file", str(dest),
    ]) == 0
    capsys.readouterr()
    body = dest.read_text()
    assert body.startswith("step,N_j,answer,delta_H_bits\n")
    assert len(body.strip().splitlines()) == 5


def test_twentyq_validation(capsys):
    assert main(["twentyq", "--n", "12"]) == 2
    assert "power of 2" in capsys.readouterr().err
    assert main(["twentyq", "--n", "16", "--policy", "fixed-element",
                 "--element", "99"]) == 2
    capsys.readouterr()
    with pytest.raises(SystemExit):
        main(["twentyq", "--n", "0"])


def test_console_entry_point_subprocess(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "scorelab.cli", "list-scenarios"],
        capture_output=True, text=True, cwd=tmp_path,
    )
    assert proc.returncode == 0
    assert "repro-mini" in proc.stdout
