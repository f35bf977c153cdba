"""Scenario execution: computes outputs, writes artifacts, records a manifest.

Every artifact is written atomically (temp file in the same directory, then
rename) and each delimited output gets a sibling SVG figure rendered next to
it.  On any failure the files created by the partial run are removed.  The
manifest is written last and records the config hash, seed, library
versions, and wall time; since it contains the wall time it is the one file
excluded from byte-identical reproducibility comparisons.
"""

from __future__ import annotations

import json
import os
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .discretegame import balanced_universe, play_oracle, write_game_csv
from .dynamics import ensemble_trajectories, write_trajectory_csv
from .infotheory import (
    divergence_report,
    entropy_profile,
    fisher_spectrum,
    write_divergence_csv,
    write_fisher_csv,
    write_profile_csv,
)
from .fixedpoints import trace_tree, write_tree_json
from .scenario import Scenario
from .score import _check_sigma2

__all__ = ["RunResult", "run_scenario", "default_output_root"]


@dataclass(frozen=True)
class RunResult:
    out_dir: Path
    manifest: dict
    files: tuple[str, ...]


def default_output_root(cli_value: str | None = None) -> Path:
    if cli_value:
        return Path(cli_value)
    env = os.environ.get("SCORELAB_OUTPUT_ROOT")
    return Path(env) if env else Path("scorelab-out")


def _atomic(path: Path, write_fn) -> None:
    tmp = path.with_name(path.name + ".tmp")
    write_fn(tmp)
    os.replace(tmp, path)


def _figure_path(path: Path) -> Path:
    return path.with_suffix(".svg")


def run_scenario(scenario: Scenario, out_root, threads: int = 1) -> RunResult:
    """Execute every output of a validated scenario under out_root/<name>."""
    from . import report

    out_dir = Path(out_root) / scenario.name
    out_dir.mkdir(parents=True, exist_ok=True)
    dist = scenario.distribution
    schedule = scenario.schedule
    seed = scenario.master_seed
    created: list[Path] = []
    manifest_outputs: list[dict] = []
    t0 = time.perf_counter()

    def emit(rel_path: str, write_fn, render_fn) -> dict:
        path = out_dir / rel_path
        path.parent.mkdir(parents=True, exist_ok=True)
        _atomic(path, write_fn)
        created.append(path)
        fig = _figure_path(path)
        _atomic(fig, lambda tmp: render_fn(path, tmp))
        created.append(fig)
        return {"path": rel_path, "figure": fig.name if fig.parent == out_dir else str(fig.relative_to(out_dir))}

    try:
        for out in scenario.outputs:
            opts = out.options
            if out.kind == "entropy-profile":
                profile = entropy_profile(
                    dist,
                    scenario.sigma2_grid,
                    estimators=scenario.estimators,
                    n_samples=scenario.n_samples,
                    master_seed=seed,
                    threads=threads,
                )
                entry = emit(
                    out.path,
                    lambda p: write_profile_csv(profile, p),
                    report.render_profile,
                )
            elif out.kind == "divergence-sweep":
                reports = [
                    divergence_report(
                        dist,
                        schedule,
                        schedule.t_of_sigma2(float(s2)),
                        scenario.n_samples,
                        seed,
                        threads=threads,
                    )
                    for s2 in scenario.sigma2_grid
                ]
                entry = emit(
                    out.path,
                    lambda p: write_divergence_csv(reports, p),
                    report.render_divergence,
                )
            elif out.kind == "fisher-sweep":
                probe = opts.get("probe")
                x = (
                    np.zeros(dist.dim)
                    if probe is None
                    else np.array(probe, dtype=np.float64)
                )
                spectra = [
                    fisher_spectrum(dist, x, _check_sigma2(float(s2)))
                    for s2 in scenario.sigma2_grid
                ]
                entry = emit(
                    out.path,
                    lambda p: write_fisher_csv(spectra, p),
                    report.render_fisher,
                )
            elif out.kind == "fixed-point-tree":
                tree = trace_tree(
                    dist,
                    schedule,
                    t_hi=schedule.t_of_sigma2(float(opts["sigma2_hi"])),
                    t_lo=schedule.t_of_sigma2(float(opts["sigma2_lo"])),
                    n_grid=int(opts["n_grid"]),
                )
                entry = emit(
                    out.path,
                    lambda p: write_tree_json(tree, p),
                    lambda src, dst: report.render_tree(
                        src, dst, dist=dist, schedule=schedule
                    ),
                )
            elif out.kind == "trajectory-ensemble":
                times, states = ensemble_trajectories(
                    dist,
                    schedule,
                    t_start=schedule.t_of_sigma2(float(opts["sigma2_start"])),
                    t_end=schedule.t_of_sigma2(float(opts["sigma2_end"])),
                    n_steps=int(opts["n_steps"]),
                    n_trajectories=int(opts["n_trajectories"]),
                    mode=opts["mode"],
                    master_seed=seed,
                )
                entry = emit(
                    out.path,
                    lambda p: write_trajectory_csv(times, states, opts["mode"], p),
                    report.render_trajectories,
                )
            else:  # twentyq
                universe = balanced_universe(int(opts["n_elements"]))
                policy = opts["policy"]
                element = None
                if policy == "fixed-element":
                    element = universe.elements[0]
                result = play_oracle(universe, element, policy, seed=seed)
                entry = emit(
                    out.path,
                    lambda p: write_game_csv(result, p),
                    report.render_game,
                )
            entry["kind"] = out.kind
            manifest_outputs.append(entry)
    except BaseException:
        for p in created:
            try:
                p.unlink()
            except OSError:
                pass
        raise

    manifest = {
        "scenario": scenario.name,
        "config_hash": scenario.hash,
        "master_seed": scenario.master_seed,
        "versions": {
            "scorelab": __version__,
            "python": ".".join(str(v) for v in sys.version_info[:3]),
            "numpy": _module_version("numpy"),
            "scipy": _module_version("scipy"),
            "matplotlib": _module_version("matplotlib"),
        },
        "wall_time_s": round(time.perf_counter() - t0, 6),
        "outputs": manifest_outputs,
    }
    manifest_path = out_dir / "manifest.json"
    _atomic(
        manifest_path,
        lambda tmp: Path(tmp).write_text(json.dumps(manifest, indent=2) + "\n"),
    )
    created.append(manifest_path)
    return RunResult(
        out_dir=out_dir,
        manifest=manifest,
        files=tuple(str(p.relative_to(out_dir)) for p in created),
    )


def _module_version(name: str) -> str:
    import importlib

    return getattr(importlib.import_module(name), "__version__", "unknown")
