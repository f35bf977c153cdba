"""Scenario configs: strict JSON schema, validation, and bundled examples.

A scenario names a data distribution, a noise schedule, a sigma2 grid, the
estimator subset, sample counts, a master seed, and a list of outputs.  The
parser validates everything and reports every violated field at once rather
than stopping at the first.

config_hash covers exactly the semantic fields (distribution, schedule,
grid, estimators, n_samples, master_seed, output kinds and their options)
after defaults are applied; the scenario name and output file paths are
excluded, so renaming artifacts does not change the hash while any change
that can alter the numbers does.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .infotheory import ESTIMATORS
from .model import (
    DataDistribution,
    DeltaMixture,
    GaussianFull,
    GaussianSubspace,
    NoiseSchedule,
    axis_subspace_basis,
    constant_schedule,
    data_scale,
    geometric_schedule,
    random_subspace_basis,
    table_schedule,
)

__all__ = [
    "OUTPUT_KINDS",
    "OutputSpec",
    "Scenario",
    "parse_scenario",
    "validate_scenario",
    "scenario_from_file",
    "bundled_scenarios",
    "bundled_scenario",
    "config_hash",
]

OUTPUT_KINDS = (
    "entropy-profile",
    "fixed-point-tree",
    "trajectory-ensemble",
    "divergence-sweep",
    "fisher-sweep",
    "twentyq",
)

# output kinds whose numbers come from Monte Carlo sampling over n_samples
_MC_KINDS = ("entropy-profile", "divergence-sweep")
_GRID_KINDS = ("entropy-profile", "divergence-sweep", "fisher-sweep")

_TOP_KEYS = {
    "name",
    "distribution",
    "schedule",
    "sigma2_grid",
    "estimators",
    "n_samples",
    "master_seed",
    "outputs",
}


@dataclass(frozen=True)
class OutputSpec:
    kind: str
    path: str
    options: dict


@dataclass(frozen=True)
class Scenario:
    name: str
    distribution: DataDistribution
    schedule: NoiseSchedule
    sigma2_grid: np.ndarray | None
    estimators: tuple[str, ...]
    n_samples: int
    master_seed: int
    outputs: tuple[OutputSpec, ...]
    resolved: dict

    @property
    def hash(self) -> str:
        return config_hash(self.resolved)


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _is_num(v) -> bool:
    return (_is_int(v) or isinstance(v, float)) and math.isfinite(v)


def _matrix(v, errors, field) -> np.ndarray | None:
    a = None
    if (
        isinstance(v, list)
        and v
        and all(isinstance(r, list) and r and all(_is_num(x) for x in r) for r in v)
        and len({len(r) for r in v}) == 1
    ):
        a = np.array(v, dtype=np.float64)
    else:
        errors.append(f"{field}: must be a non-empty rectangular matrix of finite numbers")
    return a


def _vector(v, errors, field) -> np.ndarray | None:
    if isinstance(v, list) and v and all(_is_num(x) for x in v):
        return np.array(v, dtype=np.float64)
    errors.append(f"{field}: must be a non-empty list of finite numbers")
    return None


def _check_keys(doc: dict, allowed: set, field: str, errors: list) -> None:
    for k in doc:
        if k not in allowed:
            errors.append(f"{field}.{k}: unknown field")


def _build_distribution(doc, errors) -> DataDistribution | None:
    if not isinstance(doc, dict):
        errors.append("distribution: must be an object")
        return None
    kind = doc.get("kind")
    try:
        if kind == "delta-mixture":
            _check_keys(doc, {"kind", "points", "weights"}, "distribution", errors)
            pts = _matrix(doc.get("points"), errors, "distribution.points")
            w = None
            if "weights" in doc:
                w = _vector(doc["weights"], errors, "distribution.weights")
            if pts is None or ("weights" in doc and w is None):
                return None
            return DeltaMixture(points=pts, weights=w)
        if kind == "gaussian-full":
            _check_keys(doc, {"kind", "mean", "covariance"}, "distribution", errors)
            mean = _vector(doc.get("mean"), errors, "distribution.mean")
            cov = _matrix(doc.get("covariance"), errors, "distribution.covariance")
            if mean is None or cov is None:
                return None
            return GaussianFull(mean=mean, covariance=cov)
        if kind == "gaussian-subspace":
            _check_keys(
                doc, {"kind", "dim", "data_dim", "h", "basis", "basis_seed"},
                "distribution", errors,
            )
            ok = True
            if not (_is_int(doc.get("dim")) and doc["dim"] >= 1):
                errors.append("distribution.dim: must be a positive integer")
                ok = False
            if not (_is_int(doc.get("data_dim")) and doc["data_dim"] >= 1):
                errors.append("distribution.data_dim: must be a positive integer")
                ok = False
            if not (_is_num(doc.get("h")) and doc["h"] > 0):
                errors.append("distribution.h: must be a positive number")
                ok = False
            basis = doc.get("basis", "axis")
            if not ok:
                return None
            if basis == "axis":
                b = axis_subspace_basis(doc["dim"], doc["data_dim"])
            elif basis == "random":
                seed = doc.get("basis_seed", 0)
                if not _is_int(seed):
                    errors.append("distribution.basis_seed: must be an integer")
                    return None
                b = random_subspace_basis(doc["dim"], doc["data_dim"], seed)
            else:
                b = _matrix(basis, errors, "distribution.basis")
                if b is None:
                    return None
            return GaussianSubspace(basis=b, h=float(doc["h"]))
        errors.append(
            "distribution.kind: must be one of delta-mixture, gaussian-full, "
            f"gaussian-subspace, got {kind!r}"
        )
    except ValidationError as e:
        errors.append(f"distribution: {e}")
    return None


def _build_schedule(doc, errors) -> NoiseSchedule | None:
    if doc is None:
        return constant_schedule()
    if not isinstance(doc, dict):
        errors.append("schedule: must be an object")
        return None
    kind = doc.get("kind")
    try:
        if kind == "constant":
            _check_keys(doc, {"kind", "nu", "t_max"}, "schedule", errors)
            nu = doc.get("nu", 1.0)
            if not (_is_num(nu) and nu > 0):
                errors.append("schedule.nu: must be a positive number")
                return None
            return constant_schedule(nu=float(nu), t_max=float(doc.get("t_max", 1e9)))
        if kind == "geometric":
            _check_keys(doc, {"kind", "sigma_min", "sigma_max", "t_max"}, "schedule", errors)
            ok = True
            for f in ("sigma_min", "sigma_max"):
                if not (_is_num(doc.get(f)) and doc[f] > 0):
                    errors.append(f"schedule.{f}: must be a positive number")
                    ok = False
            if not ok:
                return None
            return geometric_schedule(
                sigma_min=float(doc["sigma_min"]),
                sigma_max=float(doc["sigma_max"]),
                t_max=float(doc.get("t_max", 1.0)),
            )
        if kind == "table":
            _check_keys(doc, {"kind", "t", "nu2"}, "schedule", errors)
            t = _vector(doc.get("t"), errors, "schedule.t")
            nu2 = _vector(doc.get("nu2"), errors, "schedule.nu2")
            if t is None or nu2 is None:
                return None
            return table_schedule(t, nu2)
        errors.append(
            f"schedule.kind: must be one of constant, geometric, table, got {kind!r}"
        )
    except ValidationError as e:
        errors.append(f"schedule: {e}")
    return None


def _build_grid(doc, errors) -> np.ndarray | None:
    if not isinstance(doc, dict):
        errors.append("sigma2_grid: must be an object with min, max, n, spacing")
        return None
    _check_keys(doc, {"min", "max", "n", "spacing"}, "sigma2_grid", errors)
    ok = True
    if not (_is_num(doc.get("min")) and doc["min"] > 0):
        errors.append("sigma2_grid.min: must be a positive number")
        ok = False
    if not (_is_num(doc.get("max"))):
        errors.append("sigma2_grid.max: must be a number")
        ok = False
    if not (_is_int(doc.get("n")) and doc["n"] >= 1):
        errors.append("sigma2_grid.n: must be an integer >= 1")
        ok = False
    spacing = doc.get("spacing", "log")
    if spacing not in ("linear", "log"):
        errors.append(f"sigma2_grid.spacing: must be linear or log, got {spacing!r}")
        ok = False
    if ok and doc["max"] <= doc["min"] and doc["n"] > 1:
        errors.append("sigma2_grid.max: must exceed min for n > 1")
        ok = False
    if not ok:
        return None
    lo, hi, n = float(doc["min"]), float(doc["max"]), int(doc["n"])
    if n == 1:
        return np.array([lo])
    if spacing == "log":
        return np.exp(np.linspace(math.log(lo), math.log(hi), n))
    return np.linspace(lo, hi, n)


_OUTPUT_OPTION_KEYS = {
    "entropy-profile": set(),
    "divergence-sweep": set(),
    "fisher-sweep": {"probe"},
    "fixed-point-tree": {"sigma2_hi", "sigma2_lo", "n_grid"},
    "trajectory-ensemble": {"n_trajectories", "n_steps", "mode", "sigma2_start", "sigma2_end"},
    "twentyq": {"n_elements", "policy"},
}


def _build_outputs(doc, dist, errors) -> tuple[OutputSpec, ...]:
    if not isinstance(doc, list) or not doc:
        errors.append("outputs: must be a non-empty list")
        return ()
    specs: list[OutputSpec] = []
    seen_paths: set[str] = set()
    scale2 = max(data_scale(dist), 1e-12) ** 2 if dist is not None else 1.0
    for i, out in enumerate(doc):
        f = f"outputs[{i}]"
        if not isinstance(out, dict):
            errors.append(f"{f}: must be an object")
            continue
        kind = out.get("kind")
        if kind not in OUTPUT_KINDS:
            errors.append(f"{f}.kind: must be one of {', '.join(OUTPUT_KINDS)}, got {kind!r}")
            continue
        _check_keys(out, {"kind", "path"} | _OUTPUT_OPTION_KEYS[kind], f, errors)
        path = out.get("path")
        if not isinstance(path, str) or not path or path.startswith("/") or ".." in path:
            errors.append(f"{f}.path: must be a relative path without '..'")
            continue
        if path in seen_paths:
            errors.append(f"{f}.path: duplicate output path {path!r}")
            continue
        seen_paths.add(path)
        opts: dict = {}
        if kind == "fisher-sweep":
            if "probe" in out:
                v = _vector(out["probe"], errors, f"{f}.probe")
                if v is None:
                    continue
                if dist is not None and v.size != dist.dim:
                    errors.append(f"{f}.probe: length must match distribution dim")
                    continue
                opts["probe"] = [float(x) for x in v]
            else:
                opts["probe"] = None
        elif kind == "fixed-point-tree":
            opts["sigma2_hi"] = out.get("sigma2_hi", 100.0 * scale2)
            opts["sigma2_lo"] = out.get("sigma2_lo", 1e-4 * scale2)
            opts["n_grid"] = out.get("n_grid", 400)
            if not (_is_num(opts["sigma2_hi"]) and opts["sigma2_hi"] > 0):
                errors.append(f"{f}.sigma2_hi: must be a positive number")
            if not (_is_num(opts["sigma2_lo"]) and opts["sigma2_lo"] > 0):
                errors.append(f"{f}.sigma2_lo: must be a positive number")
            if not (_is_int(opts["n_grid"]) and opts["n_grid"] >= 2):
                errors.append(f"{f}.n_grid: must be an integer >= 2")
        elif kind == "trajectory-ensemble":
            opts["n_trajectories"] = out.get("n_trajectories", 50)
            opts["n_steps"] = out.get("n_steps", 300)
            opts["mode"] = out.get("mode", "reverse-sde")
            opts["sigma2_start"] = out.get("sigma2_start", 100.0 * scale2)
            opts["sigma2_end"] = out.get("sigma2_end", 1e-4 * scale2)
            if not (_is_int(opts["n_trajectories"]) and 1 <= opts["n_trajectories"] <= 10000):
                errors.append(f"{f}.n_trajectories: must be an integer in [1, 10000]")
            if not (_is_int(opts["n_steps"]) and opts["n_steps"] >= 1):
                errors.append(f"{f}.n_steps: must be an integer >= 1")
            if opts["mode"] not in ("reverse-sde", "reverse-ode"):
                errors.append(f"{f}.mode: must be reverse-sde or reverse-ode")
            for g in ("sigma2_start", "sigma2_end"):
                if not (_is_num(opts[g]) and opts[g] > 0):
                    errors.append(f"{f}.{g}: must be a positive number")
        elif kind == "twentyq":
            opts["n_elements"] = out.get("n_elements", 16)
            opts["policy"] = out.get("policy", "lazy-random")
            n_el = opts["n_elements"]
            if not (_is_int(n_el) and n_el >= 1 and not (n_el & (n_el - 1))):
                errors.append(f"{f}.n_elements: must be a power of 2")
            if opts["policy"] not in ("lazy-random", "fixed-element"):
                errors.append(f"{f}.policy: must be lazy-random or fixed-element")
        specs.append(OutputSpec(kind=kind, path=path, options=opts))
    return tuple(specs)


def validate_scenario(doc) -> list[str]:
    """All schema violations in one list; empty means valid."""
    errors: list[str] = []
    if not isinstance(doc, dict):
        return ["config: must be a JSON object"]
    _check_keys(doc, _TOP_KEYS, "config", errors)
    name = doc.get("name")
    if not isinstance(name, str) or not name or not all(
        c.isalnum() or c in "-_" for c in name
    ):
        errors.append("name: must be a non-empty string of [A-Za-z0-9_-]")
    if "distribution" not in doc:
        errors.append("distribution: required")
        dist = None
    else:
        dist = _build_distribution(doc["distribution"], errors)
    _build_schedule(doc.get("schedule"), errors)
    outputs = _build_outputs(doc.get("outputs"), dist, errors)
    kinds = {o.kind for o in outputs}
    if kinds & set(_GRID_KINDS):
        if "sigma2_grid" not in doc:
            errors.append("sigma2_grid: required when grid-driven outputs are requested")
        else:
            _build_grid(doc["sigma2_grid"], errors)
    elif "sigma2_grid" in doc:
        _build_grid(doc["sigma2_grid"], errors)
    est = doc.get("estimators", list(ESTIMATORS))
    if not isinstance(est, list) or not est:
        errors.append("estimators: must be a non-empty list")
    else:
        for e in est:
            if e not in ESTIMATORS:
                errors.append(f"estimators: unknown estimator {e!r}")
        if len(set(est)) != len(est):
            errors.append("estimators: duplicates not allowed")
    if kinds & set(_MC_KINDS) or "n_samples" in doc:
        n = doc.get("n_samples")
        if not (_is_int(n) and n >= 100):
            errors.append("n_samples: must be an integer >= 100 for Monte Carlo outputs")
    seed = doc.get("master_seed", 0)
    if not (_is_int(seed) and seed >= 0):
        errors.append("master_seed: must be a non-negative integer")
    return errors


def parse_scenario(doc) -> Scenario:
    """Validated Scenario; raises ValidationError carrying every violation."""
    errors = validate_scenario(doc)
    if errors:
        raise ValidationError(
            "invalid scenario config:\n  " + "\n  ".join(errors), messages=errors
        )
    dist = _build_distribution(doc["distribution"], [])
    schedule = _build_schedule(doc.get("schedule"), [])
    grid = _build_grid(doc["sigma2_grid"], []) if "sigma2_grid" in doc else None
    est = tuple(doc.get("estimators", list(ESTIMATORS)))
    outputs = _build_outputs(doc["outputs"], dist, [])
    n_samples = int(doc.get("n_samples", 1000))
    seed = int(doc.get("master_seed", 0))
    resolved = {
        "distribution": doc["distribution"],
        "schedule": doc.get("schedule", {"kind": "constant", "nu": 1.0}),
        "sigma2_grid": doc.get("sigma2_grid"),
        "estimators": list(est),
        "n_samples": n_samples,
        "master_seed": seed,
        "outputs": [
            {"kind": o.kind, "options": o.options} for o in outputs
        ],
    }
    return Scenario(
        name=doc["name"],
        distribution=dist,
        schedule=schedule,
        sigma2_grid=grid,
        estimators=est,
        n_samples=n_samples,
        master_seed=seed,
        outputs=outputs,
        resolved=resolved,
    )


def scenario_from_file(path) -> Scenario:
    with open(path) as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as e:
            raise ValidationError(f"config is not valid JSON: {e}") from e
    return parse_scenario(doc)


def config_hash(resolved: dict) -> str:
    blob = json.dumps(resolved, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


# ---------------------------------------------------------------------------
# bundled scenarios
# ---------------------------------------------------------------------------

_BUNDLED: dict[str, dict] = {
    "two-deltas": {
        "name": "two-deltas",
        "distribution": {"kind": "delta-mixture", "points": [[1.0], [-1.0]]},
        "schedule": {"kind": "constant", "nu": 1.0},
        "sigma2_grid": {"min": 0.01, "max": 100.0, "n": 40, "spacing": "log"},
        "estimators": list(ESTIMATORS),
        "n_samples": 20000,
        "master_seed": 7,
        "outputs": [
            {"kind": "entropy-profile", "path": "profile.csv"},
            {"kind": "fixed-point-tree", "path": "tree.json", "n_grid": 400},
            {"kind": "divergence-sweep", "path": "divergence.csv"},
            {"kind": "fisher-sweep", "path": "fisher.csv"},
            {
                "kind": "trajectory-ensemble",
                "path": "trajectories.csv",
                "n_trajectories": 60,
                "n_steps": 300,
                "mode": "reverse-sde",
            },
        ],
    },
    "five-points": {
        "name": "five-points",
        "distribution": {
            "kind": "delta-mixture",
            "points": [
                [1.2, 0.0],
                [-0.8, 0.9],
                [0.0, -1.1],
                [0.7, 0.7],
                [-1.3, -0.4],
            ],
        },
        "schedule": {"kind": "constant", "nu": 1.0},
        "sigma2_grid": {"min": 0.01, "max": 100.0, "n": 40, "spacing": "log"},
        "estimators": list(ESTIMATORS),
        "n_samples": 20000,
        "master_seed": 11,
        "outputs": [
            {"kind": "entropy-profile", "path": "profile.csv"},
            {"kind": "divergence-sweep", "path": "divergence.csv"},
        ],
    },
    "gaussian-subspace": {
        "name": "gaussian-subspace",
        "distribution": {
            "kind": "gaussian-subspace",
            "dim": 10,
            "data_dim": 3,
            "h": 1000.0,
            "basis": "axis",
        },
        "schedule": {"kind": "constant", "nu": 1.0},
        "sigma2_grid": {"min": 0.01, "max": 100.0, "n": 40, "spacing": "log"},
        "estimators": ["norm", "variance", "divergence", "fisher", "finite-difference"],
        "n_samples": 10000,
        "master_seed": 3,
        "outputs": [
            {"kind": "entropy-profile", "path": "profile.csv"},
            {"kind": "fisher-sweep", "path": "fisher.csv"},
            {"kind": "divergence-sweep", "path": "divergence.csv"},
        ],
    },
    "repro-mini": {
        "name": "repro-mini",
        "distribution": {"kind": "delta-mixture", "points": [[1.0], [-1.0]]},
        "schedule": {"kind": "constant", "nu": 1.0},
        "sigma2_grid": {"min": 0.05, "max": 20.0, "n": 6, "spacing": "log"},
        "estimators": list(ESTIMATORS),
        "n_samples": 500,
        "master_seed": 1,
        "outputs": [
            {"kind": "entropy-profile", "path": "profile.csv"},
            {"kind": "fixed-point-tree", "path": "tree.json", "n_grid": 60},
            {"kind": "divergence-sweep", "path": "divergence.csv"},
            {"kind": "fisher-sweep", "path": "fisher.csv"},
            {
                "kind": "trajectory-ensemble",
                "path": "trajectories.csv",
                "n_trajectories": 8,
                "n_steps": 80,
                "mode": "reverse-sde",
            },
            {"kind": "twentyq", "path": "game.csv", "n_elements": 16},
        ],
    },
}

_BUNDLED_BLURBS = {
    "two-deltas": "two symmetric points in 1D: entropy-rate peak and pitchfork at sigma2 = 1",
    "five-points": "five-point 2D mixture for estimator cross-checks",
    "gaussian-subspace": "3D Gaussian data inside 10 dimensions: manifold bandwidth and Fisher spectrum",
    "repro-mini": "small fast scenario touching every output kind; used for reproducibility checks",
}


def bundled_scenarios() -> dict[str, str]:
    """Bundled scenario names with one-line descriptions."""
    return dict(_BUNDLED_BLURBS)


def bundled_scenario(name: str) -> dict:
    """A deep copy of the named bundled config document."""
    if name not in _BUNDLED:
        raise ValidationError(
            f"unknown bundled scenario {name!r}; available: {', '.join(sorted(_BUNDLED))}"
        )
    return json.loads(json.dumps(_BUNDLED[name]))
