"""Fixed-point paths of the score field, branch events, and the 1D reduction.

trace_tree sweeps sigma2 downward on a log ladder from a variance far above
the data scale, warm-starting a damped Newton solve per tracked path at each
node.  Two event kinds are recorded:

    continuous  the minimal Jacobian eigenvalue of a tracked root crosses 0;
                the crossing variance is refined by bisection and two children
                are spawned by perturbing along the critical eigenvector,
                escaping with self-consistency (mean-map) iteration, then
                polishing with Newton.
    jump        a warm-started solution snaps much farther than the grid
                predicts, or a brand-new root appears away from every tracked
                path (detected by re-seeding from the data points each step).

The parent of a pitchfork keeps existing below the event as an unstable path;
generative trajectories land on the stable leaves.

The 1D Curie-Weiss reduction x = tanh((x + phi)/sigma2) is solved separately
with bracketed root finding; phi is the constant (zeroth order) interference
of all other data points and is exposed as a free parameter.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .errors import (
    ConvergenceError,
    DomainError,
    InsufficientDataError,
    RefinementError,
)
from .model import (
    DataDistribution,
    DeltaMixture,
    NoiseSchedule,
    data_scale,
)
from .score import _check_sigma2, posterior_batch, score_at

__all__ = [
    "FixedPointNode",
    "BranchEvent",
    "FixedPointPath",
    "FixedPointTree",
    "CurieWeissSolution",
    "CriticalFit",
    "solve_fixed_point",
    "mean_map",
    "trace_tree",
    "curie_weiss_solve",
    "critical_exponent",
    "default_exponent_window",
    "equivalence_classes",
    "class_weight_margins",
    "write_tree_json",
    "read_tree_json",
    "write_tree_csv",
]

# stability threshold scales with the natural Jacobian magnitude 1/sigma2
EPS_STAB_FRAC = 1e-8
# residual target ||score|| <= RESID_FRAC * data_scale / sigma2
RESID_FRAC = 1e-9
# child seeds sit at 1e-4 sigma along the critical eigenvector; children
# closer than 10x the seed offset are treated as unresolved
CHILD_SEED_FRAC = 1e-4
CHILD_SEP_FRAC = 1e-3
MEAN_MAP_MAX_ITER = 20000
SEED_MAP_ITER = 300
JUMP_FACTOR = 10.0
MAX_BRANCH_DEFER = 8
SEED_MATCH_FRAC = 1e-2


@dataclass(frozen=True)
class FixedPointNode:
    t: float | None
    sigma2: float
    x_star: np.ndarray
    residual: float
    eigenvalues: np.ndarray
    stable: bool


@dataclass(frozen=True)
class BranchEvent:
    t_branch: float
    sigma2_branch: float
    parent_path: int
    child_paths: tuple[int, ...]
    kind: str
    direction: np.ndarray
    gap: float
    parent_lambda_min: float
    parent_x: np.ndarray


@dataclass(frozen=True)
class FixedPointPath:
    path_id: int
    parent: int | None
    nodes: tuple[FixedPointNode, ...]


@dataclass(frozen=True)
class FixedPointTree:
    paths: tuple[FixedPointPath, ...]
    branch_events: tuple[BranchEvent, ...]
    sigma2_hi: float
    sigma2_lo: float
    n_grid: int


@dataclass(frozen=True)
class CurieWeissSolution:
    sigma2: float
    phi: float
    magnetizations: tuple[float, ...]
    stabilities: tuple[bool, ...]


@dataclass(frozen=True)
class CriticalFit:
    exponent: float
    amplitude: float
    fit_residual: float
    n_points: int


# ---------------------------------------------------------------------------
# solvers
# ---------------------------------------------------------------------------


def _eps_stab(sigma2: float) -> float:
    return EPS_STAB_FRAC / sigma2


def _residual_tol(dist: DataDistribution, sigma2: float) -> float:
    return RESID_FRAC * max(data_scale(dist), 1e-12) / sigma2


def _posterior_mean(dist: DataDistribution, x: np.ndarray, sigma2: float) -> np.ndarray:
    mean, _, _ = posterior_batch(dist, x[None, :], sigma2)
    return mean[0]


def mean_map(
    dist: DataDistribution,
    x0: np.ndarray,
    sigma2: float,
    max_iter: int = MEAN_MAP_MAX_ITER,
) -> tuple[np.ndarray, bool]:
    """Self-consistency iteration x <- E[y | x].

    Contracts onto stable roots and escapes unstable ones (the multiplier is
    I + sigma2 J).  Returns (x, converged); non-convergence is expected when
    used as an escape phase, the caller polishes with Newton.
    """
    sigma2 = _check_sigma2(sigma2)
    x = np.atleast_1d(np.asarray(x0, dtype=np.float64)).copy()
    scale = max(data_scale(dist), 1e-12)
    for _ in range(max_iter):
        x_next = _posterior_mean(dist, x, sigma2)
        if float(np.linalg.norm(x_next - x)) <= 1e-13 * (scale + float(np.linalg.norm(x))):
            return x_next, True
        x = x_next
    return x, False


def _newton_solve(
    dist: DataDistribution,
    x_init: np.ndarray,
    sigma2: float,
    max_iter: int = 100,
    t: float | None = None,
) -> FixedPointNode:
    """Damped Newton on the score with a mean-map fallback step.

    Converges to whichever root owns the Newton basin of x_init, stable or
    not, which is what warm-started path continuation needs.  Converged when
    ||score|| <= 1e-9 * data_scale / sigma2; the returned node carries the
    Jacobian spectrum and the stability flag (all eigenvalues below
    -1e-8/sigma2).
    """
    sigma2 = _check_sigma2(sigma2)
    x = np.atleast_1d(np.asarray(x_init, dtype=np.float64)).copy()
    tol = _residual_tol(dist, sigma2)
    ev = score_at(dist, x, sigma2)
    resid = float(np.linalg.norm(ev.score))
    for _ in range(max_iter):
        if resid <= tol:
            break
        try:
            step = np.linalg.solve(ev.jacobian, -ev.score)
        except np.linalg.LinAlgError:
            step, *_ = np.linalg.lstsq(ev.jacobian, -ev.score, rcond=None)
        alpha = 1.0
        improved = False
        for _ in range(30):
            x_try = x + alpha * step
            ev_try = score_at(dist, x_try, sigma2)
            r_try = float(np.linalg.norm(ev_try.score))
            if r_try < resid:
                x, ev, resid = x_try, ev_try, r_try
                improved = True
                break
            alpha *= 0.5
        if not improved:
            # Newton stalled (e.g. near-singular Jacobian at a critical
            # point); a single mean-map step always moves toward a root
            x = _posterior_mean(dist, x, sigma2)
            ev = score_at(dist, x, sigma2)
            resid = float(np.linalg.norm(ev.score))
    if resid > tol:
        raise ConvergenceError(
            f"fixed-point solve stalled at residual {resid:.3e} (tol {tol:.3e}) "
            f"at sigma2={sigma2}",
            residual=resid,
        )
    eig = np.linalg.eigvalsh(ev.jacobian)
    return FixedPointNode(
        t=t,
        sigma2=sigma2,
        x_star=x,
        residual=resid,
        eigenvalues=eig,
        stable=bool(eig[-1] < -_eps_stab(sigma2)),
    )


def solve_fixed_point(
    dist: DataDistribution,
    x_init: np.ndarray,
    sigma2: float,
    max_iter: int = 100,
    t: float | None = None,
) -> FixedPointNode:
    """Self-consistency escape followed by damped Newton polish.

    The iteration x <- E[y | x] contracts into the basin of a stable root
    from a generic start (its multiplier is I + sigma2 J), so a cold start
    near an unstable root walks away from it instead of refining it; Newton
    then converges quadratically.  A start lying exactly on an unstable
    root is a fixed point of both phases and is returned as-is with its
    stability flag.  max_iter bounds the Newton phase; non-convergence
    raises with the last residual attached.
    """
    sigma2 = _check_sigma2(sigma2)
    x = np.atleast_1d(np.asarray(x_init, dtype=np.float64))
    x, _ = mean_map(dist, x, sigma2)
    return _newton_solve(dist, x, sigma2, max_iter=max_iter, t=t)


# ---------------------------------------------------------------------------
# tree sweep
# ---------------------------------------------------------------------------


class _PendingBranch:
    """A detected stability crossing whose children are not yet resolvable
    at the current grid spacing; spawning is retried on later nodes."""

    def __init__(self, s2_c: float, node_c: FixedPointNode, v: np.ndarray):
        self.s2_c = s2_c
        self.node_c = node_c
        self.v = v
        self.wait = 0


class _PathState:
    def __init__(self, path_id: int, parent: int | None):
        self.path_id = path_id
        self.parent = parent
        self.nodes: list[FixedPointNode] = []
        self.alive = True
        self.crossed = False
        self.pending: _PendingBranch | None = None

    @property
    def x(self) -> np.ndarray:
        return self.nodes[-1].x_star

    def drift(self) -> float | None:
        if len(self.nodes) < 2:
            return None
        return float(np.linalg.norm(self.nodes[-1].x_star - self.nodes[-2].x_star))


def _lambda_min_at(dist, x_warm, sigma2, max_iter=100):
    node = _newton_solve(dist, x_warm, sigma2, max_iter=max_iter)
    return float(node.eigenvalues[0]), node


def _refine_crossing(
    dist: DataDistribution,
    sigma2_hi: float,
    sigma2_lo: float,
    x_warm: np.ndarray,
    n_iter: int = 80,
) -> tuple[float, FixedPointNode]:
    """Bisect sigma2 for the lambda_min = 0 crossing along a tracked root."""
    lo, hi = sigma2_lo, sigma2_hi
    node_mid = None
    for _ in range(n_iter):
        mid = math.sqrt(lo * hi)
        lam, node_mid = _lambda_min_at(dist, x_warm, mid)
        x_warm = node_mid.x_star
        if lam > 0:
            lo = mid
        else:
            hi = mid
        if (hi - lo) < 1e-15 * hi:
            break
    mid = math.sqrt(lo * hi)
    _, node_mid = _lambda_min_at(dist, x_warm, mid)
    return mid, node_mid


def trace_tree(
    dist: DataDistribution,
    schedule: NoiseSchedule,
    t_hi: float,
    t_lo: float,
    n_grid: int,
) -> FixedPointTree:
    """Sweep fixed-point paths from sigma2(t_hi) down to sigma2(t_lo).

    Requires sigma2(t_hi) >= 10 (data scale)^2 so the sweep starts on the
    unique near-origin root of the asymptotic Gaussian.  The grid is
    log-uniform in sigma2 with n_grid nodes.
    """
    if t_lo <= 0 or t_hi <= t_lo:
        raise DomainError(f"need t_hi > t_lo > 0, got {t_hi} and {t_lo}")
    if n_grid < 2:
        raise DomainError(f"n_grid must be >= 2, got {n_grid}")
    s2_hi = schedule.sigma2(t_hi)
    s2_lo = schedule.sigma2(t_lo)
    scale = max(data_scale(dist), 1e-12)
    if s2_hi < 10 * scale**2:
        raise DomainError(
            f"sigma2(t_hi) = {s2_hi:.3e} must be at least 10x the squared data "
            f"scale {scale**2:.3e} so the sweep starts on the unique root"
        )
    grid = np.exp(np.linspace(math.log(s2_hi), math.log(s2_lo), n_grid))

    if isinstance(dist, DeltaMixture):
        x_start = (dist.weights @ dist.points).astype(np.float64)
        seeds = [dist.points[j] for j in range(dist.k)]
    else:
        from .model import data_mean

        x_start = data_mean(dist)
        seeds = []

    paths: list[_PathState] = []
    events: list[BranchEvent] = []

    def new_path(parent: int | None) -> _PathState:
        p = _PathState(len(paths), parent)
        paths.append(p)
        return p

    def nearest_path_id(x: np.ndarray, exclude: set[int]) -> int:
        best, best_d = -1, math.inf
        for p in paths:
            if p.alive and p.path_id not in exclude and p.nodes:
                d = float(np.linalg.norm(p.x - x))
                if d < best_d:
                    best, best_d = p.path_id, d
        return best

    root = new_path(None)
    node0 = _newton_solve(
        dist, x_start, float(grid[0]), t=schedule.t_of_sigma2(float(grid[0]))
    )
    root.nodes.append(node0)

    match_tol = 1e-5 * scale

    for k in range(1, n_grid):
        s2 = float(grid[k])
        t_k = schedule.t_of_sigma2(s2)
        pre_existing = [p for p in paths if p.alive]

        # advance every live path with a warm-started solve
        for p in pre_existing:
            prev = p.nodes[-1]
            drift_prev = p.drift()
            node = _newton_solve(dist, prev.x_star, s2, t=t_k)
            moved = float(np.linalg.norm(node.x_star - prev.x_star))
            if (
                drift_prev is not None
                and moved > JUMP_FACTOR * max(drift_prev, 1e-4 * scale)
                and moved > 0.05 * scale
            ):
                gap_dir = (node.x_star - prev.x_star) / moved
                events.append(
                    BranchEvent(
                        t_branch=t_k,
                        sigma2_branch=s2,
                        parent_path=p.path_id,
                        child_paths=(p.path_id,),
                        kind="jump",
                        direction=gap_dir,
                        gap=moved,
                        parent_lambda_min=float(prev.eigenvalues[0]),
                        parent_x=prev.x_star,
                    )
                )
            p.nodes.append(node)

        # dedup paths that merged onto the same root (lowest id wins)
        for i, p in enumerate(pre_existing):
            if not p.alive:
                continue
            for q in pre_existing[i + 1 :]:
                if q.alive and float(np.linalg.norm(p.x - q.x)) < match_tol:
                    q.alive = False
                    q.nodes.pop()

        # continuous branching, step 1: detect a lambda_min sign change
        # between the last two nodes of a path.  A grid node can land exactly
        # on the crossing (lambda == 0), so zero endpoints count as crossed
        # and the per-path flag stops the same crossing firing twice.
        for p in pre_existing:
            if not p.alive or len(p.nodes) < 2:
                continue
            lam_prev = float(p.nodes[-2].eigenvalues[0])
            lam_cur = float(p.nodes[-1].eigenvalues[0])
            if lam_cur < 0:
                p.crossed = False
            fired = (lam_prev < 0 and lam_cur >= 0) or (lam_prev == 0.0 and lam_cur > 0.0)
            if not fired or p.crossed or p.pending is not None:
                continue
            p.crossed = True
            s2_prev = p.nodes[-2].sigma2
            if lam_cur == 0.0:
                s2_c, node_c = s2, p.nodes[-1]
            elif lam_prev == 0.0:
                s2_c, node_c = s2_prev, p.nodes[-2]
            else:
                s2_c, node_c = _refine_crossing(dist, s2_prev, s2, p.nodes[-2].x_star)
            ev = score_at(dist, node_c.x_star, s2_c)
            _, eig_vec = np.linalg.eigh(ev.jacobian)
            v = eig_vec[:, 0]
            nz = np.flatnonzero(np.abs(v) > 1e-12)
            if nz.size and v[nz[0]] < 0:
                v = -v
            p.pending = _PendingBranch(s2_c=s2_c, node_c=node_c, v=v)

        # continuous branching, step 2: spawn the children of any pending
        # crossing once they separate beyond the resolution floor.  Right at
        # the crossing the split is below floating-point resolution, so the
        # attempt is retried on later (smaller sigma2) nodes.
        for p in pre_existing:
            if not p.alive or p.pending is None:
                continue
            pend = p.pending
            sig_cur = math.sqrt(s2)
            delta = CHILD_SEED_FRAC * sig_cur
            parent_x_cur = p.nodes[-1].x_star
            children = []
            for sign in (+1.0, -1.0):
                x_seed, _ = mean_map(dist, parent_x_cur + sign * delta * pend.v, s2)
                try:
                    child_node = _newton_solve(dist, x_seed, s2, t=t_k)
                except ConvergenceError:
                    continue
                children.append(child_node)
            sep_min = CHILD_SEP_FRAC * sig_cur
            distinct = (
                len(children) == 2
                and float(np.linalg.norm(children[0].x_star - parent_x_cur)) > sep_min
                and float(np.linalg.norm(children[1].x_star - parent_x_cur)) > sep_min
                and float(np.linalg.norm(children[0].x_star - children[1].x_star)) > sep_min
            )
            if not distinct:
                pend.wait += 1
                if pend.wait >= MAX_BRANCH_DEFER:
                    raise RefinementError(
                        f"children of the branch event near sigma2={pend.s2_c:.6g} "
                        f"did not separate within {MAX_BRANCH_DEFER} grid nodes; "
                        f"rerun with n_grid >= {2 * n_grid}",
                        suggested_n_grid=2 * n_grid,
                    )
                continue
            ids = []
            for child_node in children:
                c = new_path(p.path_id)
                c.nodes.append(child_node)
                ids.append(c.path_id)
            events.append(
                BranchEvent(
                    t_branch=schedule.t_of_sigma2(pend.s2_c),
                    sigma2_branch=pend.s2_c,
                    parent_path=p.path_id,
                    child_paths=tuple(ids),
                    kind="continuous",
                    direction=pend.v,
                    gap=0.0,
                    parent_lambda_min=float(pend.node_c.eigenvalues[0]),
                    parent_x=pend.node_c.x_star,
                )
            )
            p.pending = None

        # re-seed from the data points to catch roots that appear with no
        # stability warning (first-order / fold events).  Near a critical
        # point the residual basin is wide and Newton can stop anywhere
        # inside it, so a seeded root only counts as new when it clears a
        # sigma-scaled absorption radius around every live path.
        seed_tol = max(match_tol, SEED_MATCH_FRAC * math.sqrt(s2))
        for j, y in enumerate(seeds):
            x_seed, _ = mean_map(dist, y, s2, max_iter=SEED_MAP_ITER)
            try:
                node = _newton_solve(dist, x_seed, s2, t=t_k)
            except ConvergenceError:
                continue
            if any(
                p.alive and float(np.linalg.norm(p.x - node.x_star)) < seed_tol
                for p in paths
            ):
                continue
            parent_id = nearest_path_id(node.x_star, exclude=set())
            parent_x = paths[parent_id].x
            gap = float(np.linalg.norm(node.x_star - parent_x))
            direction = (node.x_star - parent_x) / max(gap, 1e-300)
            c = new_path(parent_id)
            c.nodes.append(node)
            events.append(
                BranchEvent(
                    t_branch=t_k,
                    sigma2_branch=s2,
                    parent_path=parent_id,
                    child_paths=(c.path_id,),
                    kind="jump",
                    direction=direction,
                    gap=gap,
                    parent_lambda_min=float(paths[parent_id].nodes[-1].eigenvalues[0]),
                    parent_x=parent_x,
                )
            )

    for p in paths:
        if p.alive and p.pending is not None:
            raise RefinementError(
                f"branch event near sigma2={p.pending.s2_c:.6g} detected but its "
                f"children never separated before the end of the grid; rerun with "
                f"n_grid >= {2 * n_grid}",
                suggested_n_grid=2 * n_grid,
            )

    frozen = tuple(
        FixedPointPath(path_id=p.path_id, parent=p.parent, nodes=tuple(p.nodes))
        for p in paths
        if p.nodes
    )
    return FixedPointTree(
        paths=frozen,
        branch_events=tuple(events),
        sigma2_hi=float(s2_hi),
        sigma2_lo=float(s2_lo),
        n_grid=int(n_grid),
    )


# ---------------------------------------------------------------------------
# Curie-Weiss reduction
# ---------------------------------------------------------------------------


def curie_weiss_solve(sigma2: float, phi: float = 0.0, n_scan: int = 8001) -> CurieWeissSolution:
    """All real roots of x = tanh((x + phi)/sigma2) with map-stability flags.

    Roots lie in [-1 - |phi|, 1 + |phi|]; a dense scan brackets sign changes
    of f(x) = x - tanh((x + phi)/sigma2) and each bracket is closed with
    Brent's method.  A root is stable when |d/dx tanh((x + phi)/sigma2)| < 1.
    """
    sigma2 = _check_sigma2(sigma2)

    def f(x: float) -> float:
        return x - math.tanh((x + phi) / sigma2)

    lo, hi = -1.0 - abs(phi) - 0.1, 1.0 + abs(phi) + 0.1
    xs = np.linspace(lo, hi, n_scan)
    fs = np.array([f(float(x)) for x in xs])
    roots: list[float] = []
    for i in range(n_scan - 1):
        a, b = fs[i], fs[i + 1]
        if a == 0.0:
            roots.append(float(xs[i]))
        elif a * b < 0:
            roots.append(float(brentq(f, float(xs[i]), float(xs[i + 1]), xtol=1e-15)))
    if fs[-1] == 0.0:
        roots.append(float(xs[-1]))
    # Newton polish to push residuals to machine precision, then dedup
    polished = []
    for r in roots:
        x = r
        for _ in range(3):
            th = math.tanh((x + phi) / sigma2)
            fp = 1.0 - (1.0 - th * th) / sigma2
            if fp != 0.0:
                x = x - (x - th) / fp
        polished.append(x)
    polished.sort()
    dedup: list[float] = []
    for x in polished:
        if not dedup or abs(x - dedup[-1]) > 1e-9:
            dedup.append(x)
    stab = []
    for x in dedup:
        th = math.tanh((x + phi) / sigma2)
        stab.append(bool((1.0 - th * th) / sigma2 < 1.0))
    return CurieWeissSolution(
        sigma2=sigma2,
        phi=float(phi),
        magnetizations=tuple(dedup),
        stabilities=tuple(stab),
    )


# ---------------------------------------------------------------------------
# critical exponent
# ---------------------------------------------------------------------------


def default_exponent_window(
    t_branch: float, n: int = 12, u_lo_frac: float = 1e-4, u_hi_frac: float = 1e-2
) -> np.ndarray:
    """Log-spaced t values below a branch time, u/t_c in [u_lo, u_hi]."""
    u = t_branch * np.logspace(math.log10(u_lo_frac), math.log10(u_hi_frac), n)
    return t_branch - u


def critical_exponent(
    dist: DataDistribution,
    schedule: NoiseSchedule,
    event: BranchEvent,
    window: np.ndarray | None = None,
) -> CriticalFit:
    """Least-squares fit of log(child separation) vs log(t_c - t).

    Continuation runs from the farthest window point toward the branch time,
    warm-starting each solve with square-root-scaled separation predictions,
    so no solve has to escape a nearly-marginal root.  The amplitude is the
    prefactor of (t_c - t)^(1/2) in time units.
    """
    if event.kind != "continuous":
        raise DomainError(
            f"critical_exponent applies to continuous branch events, got {event.kind!r}"
        )
    t_c = event.t_branch
    if window is None:
        window = default_exponent_window(t_c)
    ts = np.sort(np.asarray(window, dtype=np.float64))
    ts = ts[(ts > 0) & (ts < t_c)]
    if ts.size < 5:
        raise InsufficientDataError(
            f"need at least 5 usable window points below t_branch, got {ts.size}"
        )
    v = event.direction
    us: list[float] = []
    gaps: list[float] = []
    x_child: np.ndarray | None = None
    u_prev: float | None = None
    x_parent = event.parent_x
    for t in ts:  # farthest from t_c first
        s2 = schedule.sigma2(float(t))
        u = t_c - float(t)
        parent_node = _newton_solve(dist, x_parent, s2, t=float(t))
        x_parent = parent_node.x_star
        if x_child is None:
            seed = x_parent + CHILD_SEED_FRAC * math.sqrt(s2) * v
            x_escape, _ = mean_map(dist, seed, s2)
            guess = x_escape
        else:
            guess = x_parent + (x_child - x_parent_prev) * math.sqrt(u / u_prev)
        try:
            child_node = _newton_solve(dist, guess, s2, t=float(t))
        except ConvergenceError:
            continue
        gap = float(np.linalg.norm(child_node.x_star - x_parent))
        if gap <= 0:
            continue
        x_child, x_parent_prev, u_prev = child_node.x_star, x_parent, u
        us.append(u)
        gaps.append(gap)
    if len(us) < 5:
        raise InsufficientDataError(
            f"only {len(us)} window solves converged; need at least 5"
        )
    logs_u = np.log(np.array(us))
    logs_g = np.log(np.array(gaps))
    slope, intercept = np.polyfit(logs_u, logs_g, 1)
    resid = logs_g - (slope * logs_u + intercept)
    return CriticalFit(
        exponent=float(slope),
        amplitude=float(math.exp(intercept)),
        fit_residual=float(np.sqrt(np.mean(resid**2))),
        n_points=len(us),
    )


# ---------------------------------------------------------------------------
# equivalence classes
# ---------------------------------------------------------------------------


def _children_map(tree: FixedPointTree) -> dict[int, list[int]]:
    kids: dict[int, list[int]] = {p.path_id: [] for p in tree.paths}
    for ev in tree.branch_events:
        for c in ev.child_paths:
            if c != ev.parent_path:
                kids[ev.parent_path].append(c)
    return kids


def leaf_path_ids(tree: FixedPointTree) -> list[int]:
    lo = tree.sigma2_lo
    return [
        p.path_id
        for p in tree.paths
        if p.nodes and abs(p.nodes[-1].sigma2 - lo) <= 1e-9 * lo
    ]


def equivalence_classes(tree: FixedPointTree, dist: DeltaMixture) -> dict[int, tuple[int, ...]]:
    """Data-point classes per path: each point goes to the nearest leaf, and
    internal paths inherit the union over their descendants."""
    if not isinstance(dist, DeltaMixture):
        raise DomainError("equivalence classes are defined for DeltaMixture data")
    by_id = {p.path_id: p for p in tree.paths}
    leaves = leaf_path_ids(tree)
    if not leaves:
        raise DomainError("tree has no leaf paths at sigma2_lo")
    assign: dict[int, list[int]] = {p.path_id: [] for p in tree.paths}
    for j in range(dist.k):
        dists = [float(np.linalg.norm(by_id[l].nodes[-1].x_star - dist.points[j])) for l in leaves]
        assign[leaves[int(np.argmin(dists))]].append(j)
    kids = _children_map(tree)

    def collect(pid: int) -> list[int]:
        out = list(assign[pid])
        for c in kids.get(pid, []):
            out.extend(collect(c))
        return out

    return {p.path_id: tuple(sorted(collect(p.path_id))) for p in tree.paths}


def class_weight_margins(tree: FixedPointTree, dist: DeltaMixture) -> list[float]:
    """Per node with a nonempty class: summed posterior weight of the node's
    class minus the largest other-class weight (positive = dominance)."""
    classes = equivalence_classes(tree, dist)
    margins: list[float] = []
    from .score import posterior

    for p in tree.paths:
        members = set(classes[p.path_id])
        if not members or len(members) == dist.k:
            continue
        for node in p.nodes:
            w = posterior(dist, node.x_star, node.sigma2).weights
            w_in = float(sum(w[j] for j in members))
            others: dict[int, float] = {}
            for q in tree.paths:
                if q.path_id == p.path_id:
                    continue
                other = set(classes[q.path_id]) - members
                if other:
                    others[q.path_id] = float(sum(w[j] for j in other))
            if others:
                margins.append(w_in - max(others.values()))
    return margins


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def _node_dict(n: FixedPointNode) -> dict:
    return {
        "t": None if n.t is None else float(n.t),
        "sigma2": float(n.sigma2),
        "x": [float(v) for v in n.x_star],
        "residual": float(n.residual),
        "eigenvalues": [float(v) for v in n.eigenvalues],
        "stable": bool(n.stable),
    }


def write_tree_json(tree: FixedPointTree, path) -> None:
    doc = {
        "sigma2_hi": float(tree.sigma2_hi),
        "sigma2_lo": float(tree.sigma2_lo),
        "n_grid": int(tree.n_grid),
        "paths": [
            {
                "path_id": p.path_id,
                "parent": p.parent,
                "nodes": [_node_dict(n) for n in p.nodes],
            }
            for p in tree.paths
        ],
        "branch_events": [
            {
                "t_branch": float(e.t_branch),
                "sigma2_branch": float(e.sigma2_branch),
                "parent_path": int(e.parent_path),
                "child_paths": [int(c) for c in e.child_paths],
                "kind": e.kind,
                "direction": [float(v) for v in e.direction],
                "gap": float(e.gap),
                "parent_lambda_min": float(e.parent_lambda_min),
                "parent_x": [float(v) for v in e.parent_x],
            }
            for e in tree.branch_events
        ],
    }
    with open(path, "w") as f:
        json.dump(doc, f, indent=2)
        f.write("\n")


def read_tree_json(path) -> FixedPointTree:
    with open(path) as f:
        doc = json.load(f)
    paths = tuple(
        FixedPointPath(
            path_id=int(p["path_id"]),
            parent=None if p["parent"] is None else int(p["parent"]),
            nodes=tuple(
                FixedPointNode(
                    t=None if n["t"] is None else float(n["t"]),
                    sigma2=float(n["sigma2"]),
                    x_star=np.array(n["x"], dtype=np.float64),
                    residual=float(n["residual"]),
                    eigenvalues=np.array(n["eigenvalues"], dtype=np.float64),
                    stable=bool(n["stable"]),
                )
                for n in p["nodes"]
            ),
        )
        for p in doc["paths"]
    )
    events = tuple(
        BranchEvent(
            t_branch=float(e["t_branch"]),
            sigma2_branch=float(e["sigma2_branch"]),
            parent_path=int(e["parent_path"]),
            child_paths=tuple(int(c) for c in e["child_paths"]),
            kind=str(e["kind"]),
            direction=np.array(e["direction"], dtype=np.float64),
            gap=float(e["gap"]),
            parent_lambda_min=float(e["parent_lambda_min"]),
            parent_x=np.array(e["parent_x"], dtype=np.float64),
        )
        for e in doc["branch_events"]
    )
    return FixedPointTree(
        paths=paths,
        branch_events=events,
        sigma2_hi=float(doc["sigma2_hi"]),
        sigma2_lo=float(doc["sigma2_lo"]),
        n_grid=int(doc["n_grid"]),
    )


def write_tree_csv(tree: FixedPointTree, path) -> None:
    """Flattened per-node rows for plotting."""
    d = tree.paths[0].nodes[0].x_star.size if tree.paths else 0
    cols = (
        ["path_id", "t", "sigma2"]
        + [f"x_{i + 1}" for i in range(d)]
        + ["lambda_min", "stable"]
    )
    lines = [",".join(cols)]
    for p in tree.paths:
        for n in p.nodes:
            row = [str(p.path_id), repr(float(n.t)) if n.t is not None else "nan"]
            row.append(repr(float(n.sigma2)))
            row += [repr(float(v)) for v in n.x_star]
            row.append(repr(float(n.eigenvalues[0])))
            row.append("1" if n.stable else "0")
            lines.append(",".join(row))
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")
