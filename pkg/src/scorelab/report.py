"""Figure rendering for run artifacts.

Every renderer reads a file produced by the runner and writes an SVG.  The
output is byte-stable across runs: the Agg backend, a fixed svg.hashsalt,
text kept as text (no font paths), and no Date metadata.  Renderers never
look at wall time, environment, or RNG state.
"""

from __future__ import annotations

import json
import math

import matplotlib
import numpy as np

matplotlib.use("Agg", force=True)
matplotlib.rcParams["svg.hashsalt"] = "scorelab"
matplotlib.rcParams["svg.fonttype"] = "none"

import matplotlib.pyplot as plt

from .errors import ValidationError
from .fixedpoints import read_tree_json
from .score import log_density

__all__ = [
    "render_profile",
    "render_divergence",
    "render_fisher",
    "render_trajectories",
    "render_game",
    "render_tree",
]

_FIGSIZE = (7.2, 4.4)
_RATE_LABELS = {
    "rate_norm": "score norm",
    "rate_var": "posterior variance",
    "rate_div": "divergence",
    "rate_fisher": "fisher trace",
    "rate_fd": "finite difference",
}


def _read_csv(path) -> tuple[list[str], dict[str, list[str]]]:
    with open(path) as f:
        rows = [line.rstrip("\n").split(",") for line in f if line.strip()]
    if len(rows) < 2:
        raise ValidationError(f"{path}: no data rows")
    header = rows[0]
    cols = {h: [r[i] for r in rows[1:]] for i, h in enumerate(header)}
    return header, cols


def _f(cols: dict, name: str) -> np.ndarray:
    return np.array([float(v) for v in cols[name]])


def _save(fig, out_path) -> None:
    fig.savefig(out_path, format="svg", metadata={"Date": None})
    plt.close(fig)


def render_profile(in_path, out_path) -> None:
    """Entropy-rate curves per estimator vs sigma2, with the conditional
    entropy overlaid on a second axis."""
    _, cols = _read_csv(in_path)
    s2 = _f(cols, "sigma2")
    fig, ax = plt.subplots(figsize=_FIGSIZE)
    for key, label in _RATE_LABELS.items():
        if key not in cols:
            continue
        r = _f(cols, key)
        if np.all(np.isnan(r)):
            continue
        se = _f(cols, key.replace("rate_", "stderr_"))
        ax.plot(s2, r * s2, label=label, linewidth=1.4)
        ax.fill_between(s2, (r - 2 * se) * s2, (r + 2 * se) * s2, alpha=0.15)
    ax.set_xscale("log")
    ax.set_xlabel("sigma2")
    ax.set_ylabel("entropy rate x sigma2 (nats)")
    ax.legend(loc="upper left", fontsize=8)
    h = _f(cols, "H_cond")
    if not np.all(np.isnan(h)):
        ax2 = ax.twinx()
        ax2.plot(s2, h, color="0.3", linestyle="--", linewidth=1.0)
        ax2.set_ylabel("conditional entropy (nats)")
    ax.set_title("entropy profile")
    _save(fig, out_path)


def render_divergence(in_path, out_path) -> None:
    _, cols = _read_csv(in_path)
    s2 = _f(cols, "sigma2")
    fig, ax = plt.subplots(figsize=_FIGSIZE)
    ax.plot(s2, _f(cols, "div") * s2, label="div x sigma2", linewidth=1.4)
    ax.plot(s2, _f(cols, "div1") * s2, label="div1 x sigma2", linestyle="--")
    ax.plot(s2, _f(cols, "delta_div") * s2, label="delta_div x sigma2", linewidth=1.4)
    ax.axhline(0.0, color="0.7", linewidth=0.7)
    ax.set_xscale("log")
    ax.set_xlabel("sigma2")
    ax.set_ylabel("scaled divergence")
    ax.legend(loc="center right", fontsize=8)
    ax.set_title("divergence decomposition")
    _save(fig, out_path)


def render_fisher(in_path, out_path) -> None:
    """Fisher eigenvalues scaled by sigma2 (so active directions sit near 1)
    plus the estimated manifold dimension."""
    header, cols = _read_csv(in_path)
    s2 = _f(cols, "sigma2")
    eig_names = [h for h in header if h.startswith("eig_")]
    fig, ax = plt.subplots(figsize=_FIGSIZE)
    for name in eig_names:
        ax.plot(s2, _f(cols, name) * s2, linewidth=1.1)
    ax.set_xscale("log")
    ax.set_xlabel("sigma2")
    ax.set_ylabel("eigenvalue x sigma2")
    ax.set_title("fisher spectrum")
    ax2 = ax.twinx()
    ax2.step(s2, _f(cols, "est_manifold_dim"), where="mid", color="0.2", linewidth=1.0)
    ax2.set_ylabel("est. manifold dim")
    _save(fig, out_path)


def render_trajectories(in_path, out_path) -> None:
    header, cols = _read_csv(in_path)
    x_names = [h for h in header if h.startswith("x_")]
    d = len(x_names)
    t = _f(cols, "t")
    ids = np.array(cols["trajectory_id"])
    fig, ax = plt.subplots(figsize=_FIGSIZE)
    for tid in sorted(set(ids), key=int):
        sel = ids == tid
        if d == 1:
            ax.plot(t[sel], _f(cols, "x_1")[sel], linewidth=0.8, alpha=0.6)
        elif d == 2:
            ax.plot(_f(cols, "x_1")[sel], _f(cols, "x_2")[sel], linewidth=0.8, alpha=0.6)
        else:
            norm = np.sqrt(sum(_f(cols, n)[sel] ** 2 for n in x_names))
            ax.plot(t[sel], norm, linewidth=0.8, alpha=0.6)
    if d == 2:
        ax.set_xlabel("x_1")
        ax.set_ylabel("x_2")
    else:
        if np.all(t > 0) and t.max() / max(t.min(), 1e-300) > 100:
            ax.set_xscale("log")
        ax.set_xlabel("t")
        ax.set_ylabel("x" if d == 1 else "|x|")
    ax.set_title(f"{cols['mode'][0]} ensemble")
    _save(fig, out_path)


def render_game(in_path, out_path) -> None:
    _, cols = _read_csv(in_path)
    steps = _f(cols, "step")
    fig, ax = plt.subplots(figsize=_FIGSIZE)
    ax.bar(steps, _f(cols, "delta_H_bits"), width=0.6, color="C0", label="delta H (bits)")
    ax.set_xlabel("step")
    ax.set_ylabel("expected reduction (bits)")
    ax2 = ax.twinx()
    ax2.step(steps, _f(cols, "N_j"), where="mid", color="C3", label="consistent count")
    ax2.set_ylabel("N_j")
    ax.set_title("twenty questions")
    _save(fig, out_path)


def _project(states: np.ndarray, direction) -> np.ndarray:
    w = np.asarray(direction, dtype=np.float64)
    n = float(np.linalg.norm(w))
    if n == 0:
        raise ValidationError("projection direction must be nonzero")
    return states @ (w / n)


def render_tree(in_path, out_path, dist=None, schedule=None, direction=None) -> None:
    """Fixed-point paths over (sigma2, coordinate).

    1D trees get a log-density heat strip when the data distribution is
    supplied; trees in more than 2 dimensions need a projection direction.
    """
    tree = read_tree_json(in_path)
    if not tree.paths:
        raise ValidationError(f"{in_path}: tree has no paths")
    d = tree.paths[0].nodes[0].x_star.size
    if d > 2 and direction is None:
        raise ValidationError(
            f"tree rendering in {d} dimensions requires a projection direction"
        )
    fig, ax = plt.subplots(figsize=_FIGSIZE)
    if d == 2:
        for p in tree.paths:
            xy = np.array([n.x_star for n in p.nodes])
            stable = np.array([n.stable for n in p.nodes])
            ax.plot(xy[:, 0], xy[:, 1], linewidth=1.2, color="C0")
            if np.any(~stable):
                ax.plot(
                    xy[~stable, 0], xy[~stable, 1], linewidth=0.0, marker=".",
                    markersize=2, color="C3",
                )
        for e in tree.branch_events:
            ax.plot(
                [e.parent_x[0]], [e.parent_x[1]],
                marker="o" if e.kind == "continuous" else "D",
                color="k", markersize=5, linestyle="",
            )
        ax.set_xlabel("x_1")
        ax.set_ylabel("x_2")
    else:
        def coord(states: np.ndarray) -> np.ndarray:
            return states[:, 0] if d == 1 else _project(states, direction)

        all_c: list[float] = []
        for p in tree.paths:
            all_c.extend(coord(np.array([n.x_star for n in p.nodes])))
        lo_c, hi_c = min(all_c), max(all_c)
        pad = 0.35 * max(hi_c - lo_c, 1.0)
        if d == 1 and dist is not None:
            s2s = np.exp(
                np.linspace(math.log(tree.sigma2_lo), math.log(tree.sigma2_hi), 90)
            )
            xs = np.linspace(lo_c - pad, hi_c + pad, 140)
            z = np.empty((xs.size, s2s.size))
            for i, v in enumerate(s2s):
                for j, x in enumerate(xs):
                    z[j, i] = log_density(dist, np.array([x]), float(v))
            z = np.maximum(z, z.max() - 12.0)
            ax.contourf(s2s, xs, z, levels=18, cmap="magma", zorder=0)
        first_stable = True
        first_unstable = True
        for p in tree.paths:
            s2 = np.array([n.sigma2 for n in p.nodes])
            c = coord(np.array([n.x_star for n in p.nodes]))
            stable = np.array([n.stable for n in p.nodes])
            # split into alternating stable/unstable runs so line styles match
            start = 0
            for k in range(1, len(s2) + 1):
                if k == len(s2) or stable[k] != stable[start]:
                    seg = slice(start, k)
                    if stable[start]:
                        label = "stable" if first_stable else None
                        first_stable = False
                        ax.plot(s2[seg], c[seg], color="C0", linewidth=1.6, label=label)
                    else:
                        label = "unstable" if first_unstable else None
                        first_unstable = False
                        ax.plot(
                            s2[seg], c[seg], color="C3", linewidth=1.2,
                            linestyle=":", label=label,
                        )
                    start = k
        for e in tree.branch_events:
            cc = e.parent_x[0] if d == 1 else float(_project(e.parent_x[None, :], direction)[0])
            ax.plot(
                [e.sigma2_branch], [cc],
                marker="o" if e.kind == "continuous" else "D",
                color="w", markeredgecolor="k", markersize=6, linestyle="", zorder=5,
            )
        ax.set_xscale("log")
        ax.set_xlabel("sigma2")
        ax.set_ylabel("fixed-point coordinate")
        ax.legend(loc="upper right", fontsize=8)
    ax.set_title("fixed-point paths")
    _save(fig, out_path)
