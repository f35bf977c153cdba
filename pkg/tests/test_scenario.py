import json

import numpy as np
import pytest

from scorelab.errors import ValidationError
from scorelab.model import DeltaMixture, GaussianSubspace
from scorelab.scenario import (
    OUTPUT_KINDS,
    bundled_scenario,
    bundled_scenarios,
    config_hash,
    parse_scenario,
    scenario_from_file,
    validate_scenario,
)


def minimal_doc(**over):
    doc = {
        "name": "mini",
        "distribution": {"kind": "delta-mixture", "points": [[1.0], [-1.0]]},
        "sigma2_grid": {"min": 0.1, "max": 10.0, "n": 5},
        "n_samples": 500,
        "outputs": [{"kind": "entropy-profile", "path": "profile.csv"}],
    }
    doc.update(over)
    return doc


def test_bundled_scenarios_all_validate():
    names = bundled_scenarios()
    assert set(names) == {"two-deltas", "five-points", "gaussian-subspace", "repro-mini"}
    for name in names:
        doc = bundled_scenario(name)
        assert validate_scenario(doc) == []
        sc = parse_scenario(doc)
        assert sc.name == name
        assert len(sc.hash) == 64


def test_parse_two_deltas_fields():
    sc = parse_scenario(bundled_scenario("two-deltas"))
    assert isinstance(sc.distribution, DeltaMixture)
    assert sc.distribution.dim == 1
    assert sc.sigma2_grid.size == 40
    assert sc.sigma2_grid[0] == pytest.approx(0.01)
    assert sc.sigma2_grid[-1] == pytest.approx(100.0)
    # log spacing has a constant ratio
    ratios = sc.sigma2_grid[1:] / sc.sigma2_grid[:-1]
    assert np.allclose(ratios, ratios[0], rtol=1e-12)
    assert sc.n_samples == 20000
    assert sc.master_seed == 7
    assert [o.kind for o in sc.outputs] == [
        "entropy-profile", "fixed-point-tree", "divergence-sweep",
        "fisher-sweep", "trajectory-ensemble",
    ]


def test_defaults_applied():
    doc = minimal_doc()
    del doc["sigma2_grid"]
    doc["outputs"] = [{"kind": "fixed-point-tree", "path": "tree.json"}]
    del doc["n_samples"]
    sc = parse_scenario(doc)
    assert sc.schedule.kind == "constant" and sc.schedule.nu0 == 1.0
    assert sc.estimators == ("norm", "variance", "divergence", "fisher", "finite-difference")
    assert sc.master_seed == 0
    assert sc.sigma2_grid is None
    opts = sc.outputs[0].options
    # data scale of the unit pair is 1, so the window defaults span 1e-4..100
    assert opts == {"sigma2_hi": 100.0, "sigma2_lo": 1e-4, "n_grid": 400}


def test_trajectory_defaults():
    doc = minimal_doc()
    doc["outputs"].append({"kind": "trajectory-ensemble", "path": "traj.csv"})
    sc = parse_scenario(doc)
    opts = sc.outputs[1].options
    assert opts["n_trajectories"] == 50
    assert opts["n_steps"] == 300
    assert opts["mode"] == "reverse-sde"
    assert opts["sigma2_start"] == 100.0
    assert opts["sigma2_end"] == 1e-4


def test_multi_error_reporting_lists_every_field():
    doc = {
        "name": "bad name!",
        "distribution": {"kind": "delta-mixture", "points": [[1.0], [1.0, 2.0]]},
        "sigma2_grid": {"min": -1.0, "max": 0.5, "n": 0, "spacing": "cubic"},
        "estimators": ["norm", "norm", "median"],
        "n_samples": 10,
        "master_seed": -1,
        "outputs": [
            {"kind": "entropy-profile", "path": "/abs.csv"},
            {"kind": "mystery", "path": "x.csv"},
        ],
        "bogus": 1,
    }
    errs = validate_scenario(doc)
    joined = "\n".join(errs)
    for frag in (
        "config.bogus",
        "name:",
        "distribution.points",
        "sigma2_grid.min",
        "sigma2_grid.n",
        "sigma2_grid.spacing",
        "unknown estimator 'median'",
        "duplicates",
        "n_samples",
        "master_seed",
        "outputs[0].path",
        "outputs[1].kind",
    ):
        assert frag in joined, f"missing {frag!r} in:\n{joined}"
    with pytest.raises(ValidationError) as ei:
        parse_scenario(doc)
    assert ei.value.messages == errs


def test_output_path_rules():
    doc = minimal_doc()
    doc["outputs"] = [
        {"kind": "entropy-profile", "path": "a.csv"},
        {"kind": "divergence-sweep", "path": "a.csv"},
    ]
    assert any("duplicate output path" in e for e in validate_scenario(doc))
    doc["outputs"] = [{"kind": "entropy-profile", "path": "../escape.csv"}]
    assert any("relative path without '..'" in e for e in validate_scenario(doc))
    doc["outputs"] = []
    assert any("non-empty list" in e for e in validate_scenario(doc))


def test_grid_required_only_for_grid_outputs():
    doc = minimal_doc()
    del doc["sigma2_grid"]
    assert any("sigma2_grid: required" in e for e in validate_scenario(doc))
    doc["outputs"] = [{"kind": "twentyq", "path": "game.csv"}]
    del doc["n_samples"]
    assert validate_scenario(doc) == []


def test_n_samples_required_for_monte_carlo_outputs():
    doc = minimal_doc()
    del doc["n_samples"]
    assert any("n_samples" in e for e in validate_scenario(doc))
    # an explicit value is checked even for non-MC outputs
    doc = minimal_doc(n_samples=50)
    doc["outputs"] = [{"kind": "twentyq", "path": "game.csv"}]
    del doc["sigma2_grid"]
    assert any("n_samples" in e for e in validate_scenario(doc))


def test_grid_single_point_allows_any_max():
    doc = minimal_doc(sigma2_grid={"min": 2.0, "max": 1.0, "n": 1})
    assert validate_scenario(doc) == []
    sc = parse_scenario(doc)
    assert sc.sigma2_grid.tolist() == [2.0]
    doc = minimal_doc(sigma2_grid={"min": 2.0, "max": 1.0, "n": 3})
    assert any("must exceed min" in e for e in validate_scenario(doc))


def test_twentyq_option_validation():
    doc = minimal_doc()
    del doc["sigma2_grid"]
    doc["outputs"] = [{"kind": "twentyq", "path": "g.csv", "n_elements": 12}]
    assert any("power of 2" in e for e in validate_scenario(doc))
    doc["outputs"] = [{"kind": "twentyq", "path": "g.csv", "policy": "greedy"}]
    assert any("policy" in e for e in validate_scenario(doc))


def test_tree_and_trajectory_option_validation():
    doc = minimal_doc()
    doc["outputs"] = [
        {"kind": "fixed-point-tree", "path": "t.json", "n_grid": 1, "sigma2_hi": -3.0}
    ]
    errs = validate_scenario(doc)
    assert any("n_grid" in e for e in errs)
    assert any("sigma2_hi" in e for e in errs)
    doc["outputs"] = [
        {
            "kind": "trajectory-ensemble",
            "path": "t.csv",
            "n_trajectories": 0,
            "mode": "leapfrog",
            "sigma2_end": 0,
        }
    ]
    errs = validate_scenario(doc)
    assert any("n_trajectories" in e for e in errs)
    assert any("mode" in e for e in errs)
    assert any("sigma2_end" in e for e in errs)
    doc["outputs"] = [
        {"kind": "entropy-profile", "path": "p.csv", "n_grid": 5}
    ]
    assert any("unknown field" in e for e in validate_scenario(doc))


def test_fisher_probe_validation():
    doc = minimal_doc()
    doc["outputs"] = [{"kind": "fisher-sweep", "path": "f.csv", "probe": [0.0, 1.0]}]
    assert any("length must match" in e for e in validate_scenario(doc))
    doc["outputs"] = [{"kind": "fisher-sweep", "path": "f.csv", "probe": [0.5]}]
    assert validate_scenario(doc) == []
    sc = parse_scenario(doc)
    assert sc.outputs[0].options["probe"] == [0.5]


def test_gaussian_subspace_distribution_config():
    doc = minimal_doc()
    doc["distribution"] = {
        "kind": "gaussian-subspace", "dim": 6, "data_dim": 2, "h": 3.0, "basis": "random",
        "basis_seed": 4,
    }
    sc = parse_scenario(doc)
    assert isinstance(sc.distribution, GaussianSubspace)
    assert sc.distribution.dim == 6 and sc.distribution.data_dim == 2
    doc["distribution"]["dim"] = 0
    assert any("distribution.dim" in e for e in validate_scenario(doc))


def test_schedule_configs():
    doc = minimal_doc(schedule={"kind": "geometric", "sigma_min": 0.1, "sigma_max": 10.0})
    sc = parse_scenario(doc)
    assert sc.schedule.kind == "geometric"
    doc = minimal_doc(schedule={"kind": "table", "t": [0.0, 1.0], "nu2": [1.0, 2.0]})
    assert parse_scenario(doc).schedule.kind == "table"
    doc = minimal_doc(schedule={"kind": "sawtooth"})
    assert any("schedule.kind" in e for e in validate_scenario(doc))
    doc = minimal_doc(schedule={"kind": "geometric", "sigma_min": 5.0, "sigma_max": 1.0})
    assert any("schedule" in e for e in validate_scenario(doc))


def test_config_hash_invariances():
    base = parse_scenario(minimal_doc()).hash
    # key order does not matter
    doc = minimal_doc()
    reordered = {k: doc[k] for k in reversed(list(doc))}
    assert parse_scenario(reordered).hash == base
    # renaming the scenario or its artifact paths does not matter
    assert parse_scenario(minimal_doc(name="other")).hash == base
    doc = minimal_doc()
    doc["outputs"][0]["path"] = "renamed.csv"
    assert parse_scenario(doc).hash == base
    # semantic changes do
    assert parse_scenario(minimal_doc(master_seed=1)).hash != base
    assert parse_scenario(minimal_doc(n_samples=501)).hash != base
    assert parse_scenario(minimal_doc(estimators=["norm"])).hash != base
    doc = minimal_doc(sigma2_grid={"min": 0.1, "max": 10.0, "n": 6})
    assert parse_scenario(doc).hash != base
    assert config_hash({"a": 1}) == config_hash({"a": 1})


def test_scenario_from_file(tmp_path):
    p = tmp_path / "sc.json"
    p.write_text(json.dumps(minimal_doc()))
    sc = scenario_from_file(p)
    assert sc.name == "mini"
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ValidationError, match="not valid JSON"):
        scenario_from_file(bad)


def test_bundled_scenario_copies_are_independent():
    a = bundled_scenario("repro-mini")
    a["outputs"].clear()
    a["n_samples"] = 1
    b = bundled_scenario("repro-mini")
    assert b["n_samples"] == 500
    assert len(b["outputs"]) == 6
    with pytest.raises(ValidationError, match="unknown bundled scenario"):
        bundled_scenario("nope")


def test_output_kinds_constant_matches_validation():
    for kind in OUTPUT_KINDS:
        doc = minimal_doc()
        doc["outputs"] = [{"kind": kind, "path": "x.out"}]
        errs = validate_scenario(doc)
        assert not any(".kind" in e for e in errs)
