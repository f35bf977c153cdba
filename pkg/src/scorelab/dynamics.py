"""Forward/reverse SDE and probability-flow ODE integration.

Time convention: forward time runs 0 -> t_max and reverse integration is
expressed as decreasing t on the same axis.  All stepping happens in the
sigma2 clock, where the reverse SDE step from variance v to v' < v is

    x <- x + score(x, v) (v - v') + sqrt(v - v') xi,    xi ~ N(0, I)

and the probability-flow ODE drops the noise and halves the drift.  Reverse
grids are log-uniform in sigma2: the per-step contraction factor of the
score drift is delta/sigma2, so a log grid keeps every step equally stiff
while a uniform grid goes unstable near the floor long before it resolves
it.  Forward integration uses exact Gaussian increments on a uniform time
grid, so it is never Euler-error limited.

Reverse integration stops at a floor sigma2 ~ 1e-6 (data scale)^2 rather
than 0 because score stiffness grows like 1/sigma2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    DomainError,
    EigensolveError,
    IntegrationBlowupError,
    ValidationError,
)
from .model import DataDistribution, NoiseSchedule, data_scale, draw_data
from .rng import map_chunks, substream
from .score import _check_sigma2, score_at, score_batch

__all__ = [
    "MODES",
    "T_FLOOR_FRAC",
    "Trajectory",
    "LyapunovReport",
    "EnsembleResult",
    "sigma2_floor",
    "reverse_sigma2_grid",
    "integrate_reverse",
    "integrate_forward",
    "reverse_ensemble",
    "ensemble_trajectories",
    "lyapunov_at",
    "separation_rate",
    "write_trajectory_csv",
]

MODES = ("forward-sde", "reverse-sde", "reverse-ode")

# reverse integration floor: sigma2 >= T_FLOOR_FRAC * (data scale)^2
T_FLOOR_FRAC = 1e-6

SEPARATION_EPS = 1e-6


@dataclass(frozen=True)
class Trajectory:
    """Time-indexed states of one integration run.

    times are strictly increasing for forward-sde and strictly decreasing
    for the reverse modes; states[k] is the state at times[k].
    """

    times: np.ndarray
    states: np.ndarray
    mode: str
    seed: int | None


@dataclass(frozen=True)
class LyapunovReport:
    """Local Lyapunov spectrum: eigenvalues of the score Jacobian at (x, sigma2).

    Eigenvalues sorted ascending; positive eigenvalues mark directions in
    which the reverse dynamics amplify perturbations.
    """

    sigma2: float
    x: np.ndarray
    eigenvalues: np.ndarray
    min_eigenvalue: float
    unstable_subspace_dim: int


@dataclass(frozen=True)
class EnsembleResult:
    t_start: float
    t_end: float
    mode: str
    final_states: np.ndarray
    n_steps: int
    seed: int


def sigma2_floor(dist: DataDistribution) -> float:
    return T_FLOOR_FRAC * max(data_scale(dist), 1e-12) ** 2


def reverse_sigma2_grid(sigma2_start: float, sigma2_end: float, n_steps: int) -> np.ndarray:
    """Descending log-uniform sigma2 ladder with n_steps+1 nodes."""
    if not (sigma2_start > sigma2_end > 0):
        raise DomainError(
            f"need sigma2_start > sigma2_end > 0, got {sigma2_start} and {sigma2_end}"
        )
    if n_steps < 1:
        raise DomainError(f"n_steps must be >= 1, got {n_steps}")
    return np.exp(np.linspace(math.log(sigma2_start), math.log(sigma2_end), n_steps + 1))


def _check_finite(X: np.ndarray, step: int) -> None:
    if not np.all(np.isfinite(X)):
        raise IntegrationBlowupError(
            f"non-finite state at step {step}", step=step
        )


def _reverse_sweep(
    dist: DataDistribution,
    X: np.ndarray,
    grid: np.ndarray,
    mode: str,
    rng: np.random.Generator | None,
    record: bool = False,
) -> np.ndarray:
    """Advance a batch down the sigma2 ladder; returns final or full states."""
    n, d = X.shape
    out = np.empty((len(grid), n, d)) if record else None
    if record:
        out[0] = X
    for k in range(len(grid) - 1):
        v, v_next = grid[k], grid[k + 1]
        delta = v - v_next
        s = score_batch(dist, X, float(v))
        if mode == "reverse-sde":
            X = X + s * delta + math.sqrt(delta) * rng.standard_normal((n, d))
        else:
            X = X + 0.5 * delta * s
        _check_finite(X, k + 1)
        if record:
            out[k + 1] = X
    return out if record else X


def _resolve_reverse_window(
    dist: DataDistribution, schedule: NoiseSchedule, t_start: float, t_end: float
) -> tuple[float, float]:
    if not (t_start > t_end):
        raise DomainError(f"need t_start > t_end, got {t_start} and {t_end}")
    s2_start = schedule.sigma2(t_start)
    s2_end = schedule.sigma2(t_end)
    if s2_end <= 0:
        raise DomainError(
            f"sigma2(t_end) = {s2_end} is not positive; stop above the floor "
            f"{sigma2_floor(dist):.3e}"
        )
    return s2_start, s2_end


def integrate_reverse(
    dist: DataDistribution,
    schedule: NoiseSchedule,
    t_start: float,
    t_end: float,
    n_steps: int,
    mode: str = "reverse-sde",
    seed: int = 0,
    x0: np.ndarray | None = None,
) -> Trajectory:
    """One reverse trajectory from t_start down to t_end.

    The initial state is N(0, sigma2(t_start) I) unless x0 is given.  The
    SDE mode is Euler-Maruyama; reverse-ode integrates dx = -nu^2/2 s dt
    backward.  States are recorded at every ladder node.
    """
    if mode not in ("reverse-sde", "reverse-ode"):
        raise ValidationError(f"mode must be reverse-sde or reverse-ode, got {mode!r}")
    s2_start, s2_end = _resolve_reverse_window(dist, schedule, t_start, t_end)
    grid = reverse_sigma2_grid(s2_start, s2_end, n_steps)
    d = dist.dim
    rng = substream(seed, "reverse", mode)
    if x0 is None:
        X = math.sqrt(s2_start) * rng.standard_normal((1, d))
    else:
        X = np.atleast_1d(np.asarray(x0, dtype=np.float64)).reshape(1, d).copy()
    states = _reverse_sweep(dist, X, grid, mode, rng, record=True)[:, 0, :]
    times = np.array([schedule.t_of_sigma2(float(v)) for v in grid])
    return Trajectory(times=times, states=states, mode=mode, seed=seed)


def integrate_forward(
    dist: DataDistribution,
    schedule: NoiseSchedule,
    t_end: float,
    n_steps: int,
    seed: int = 0,
) -> Trajectory:
    """Forward noising trajectory on a uniform time grid, by exact increments.

    Brownian self-similarity makes each increment N(0, delta sigma2 I), so a
    single step already lands exactly on x = y + sigma(t_end) z.
    """
    if t_end <= 0:
        raise DomainError(f"t_end must be positive, got {t_end}")
    if n_steps < 1:
        raise DomainError(f"n_steps must be >= 1, got {n_steps}")
    rng = substream(seed, "forward-traj")
    d = dist.dim
    times = np.linspace(0.0, t_end, n_steps + 1)
    y = draw_data(dist, rng, 1)[0]
    states = np.empty((n_steps + 1, d))
    states[0] = y
    s2_prev = 0.0
    for k in range(1, n_steps + 1):
        s2 = schedule.sigma2(float(times[k]))
        states[k] = states[k - 1] + math.sqrt(s2 - s2_prev) * rng.standard_normal(d)
        s2_prev = s2
    _check_finite(states, n_steps)
    return Trajectory(times=times, states=states, mode="forward-sde", seed=seed)


def reverse_ensemble(
    dist: DataDistribution,
    schedule: NoiseSchedule,
    t_start: float,
    t_end: float,
    n_steps: int,
    n_trajectories: int,
    mode: str = "reverse-sde",
    master_seed: int = 0,
    threads: int = 1,
) -> EnsembleResult:
    """Terminal states of many reverse trajectories, chunk-deterministic.

    Trajectories are integrated in fixed-size chunks with per-chunk
    substreams, so results are identical for any thread count.
    """
    if mode not in ("reverse-sde", "reverse-ode"):
        raise ValidationError(f"mode must be reverse-sde or reverse-ode, got {mode!r}")
    s2_start, s2_end = _resolve_reverse_window(dist, schedule, t_start, t_end)
    grid = reverse_sigma2_grid(s2_start, s2_end, n_steps)
    d = dist.dim
    sig0 = math.sqrt(s2_start)

    def worker(rng, m):
        X = sig0 * rng.standard_normal((m, d))
        return (_reverse_sweep(dist, X, grid, mode, rng),)

    (final,) = map_chunks(
        n_trajectories, worker, master_seed, ("ensemble", mode), threads=threads
    )
    return EnsembleResult(
        t_start=float(t_start),
        t_end=float(t_end),
        mode=mode,
        final_states=final,
        n_steps=int(n_steps),
        seed=int(master_seed),
    )


def ensemble_trajectories(
    dist: DataDistribution,
    schedule: NoiseSchedule,
    t_start: float,
    t_end: float,
    n_steps: int,
    n_trajectories: int,
    mode: str = "reverse-sde",
    master_seed: int = 0,
) -> tuple[np.ndarray, np.ndarray]:
    """Fully recorded small ensemble: (times, states[n_traj, n_times, D]).

    Draws noise in the same order as reverse_ensemble so the two agree for
    equal seeds, but keeps every intermediate state; meant for plotting, not
    for statistics (memory grows as n_trajectories * n_steps * D).
    """
    if mode not in ("reverse-sde", "reverse-ode"):
        raise ValidationError(f"mode must be reverse-sde or reverse-ode, got {mode!r}")
    s2_start, s2_end = _resolve_reverse_window(dist, schedule, t_start, t_end)
    grid = reverse_sigma2_grid(s2_start, s2_end, n_steps)
    d = dist.dim

    def worker(rng, m):
        X = math.sqrt(s2_start) * rng.standard_normal((m, d))
        rec = _reverse_sweep(dist, X, grid, mode, rng, record=True)
        return (np.swapaxes(rec, 0, 1),)

    (states,) = map_chunks(
        n_trajectories, worker, master_seed, ("ensemble", mode), threads=1
    )
    times = np.array([schedule.t_of_sigma2(float(v)) for v in grid])
    return times, states


def lyapunov_at(dist: DataDistribution, x: np.ndarray, sigma2: float) -> LyapunovReport:
    """Local Lyapunov spectrum: the eigenvalues of the score Jacobian."""
    sigma2 = _check_sigma2(sigma2)
    ev = score_at(dist, x, sigma2)
    try:
        eig = np.linalg.eigvalsh(ev.jacobian)
    except np.linalg.LinAlgError as e:  # pragma: no cover - eigh on symmetric input
        raise EigensolveError(f"Jacobian eigensolve failed: {e}") from e
    return LyapunovReport(
        sigma2=sigma2,
        x=ev.x,
        eigenvalues=eig,
        min_eigenvalue=float(eig[0]),
        unstable_subspace_dim=int(np.sum(eig > 0)),
    )


def separation_rate(
    dist: DataDistribution,
    schedule: NoiseSchedule,
    x: np.ndarray,
    t: float,
    direction: np.ndarray,
    tau_window: float,
    epsilon: float = SEPARATION_EPS,
    n_steps: int = 400,
) -> float:
    """Finite-window separation rate of two reverse-ODE trajectories.

    Starts at x and x + epsilon * direction, integrates down over the window
    and returns log(final separation / epsilon) / tau_window.  Negative
    rates mean perturbations along the direction are contracted; the sign
    matches the relevant score-Jacobian eigenvalue in the linear regime.
    Runs both trajectories through the same ladder so the difference is
    purely the initial offset.
    """
    w = np.atleast_1d(np.asarray(direction, dtype=np.float64))
    norm = float(np.linalg.norm(w))
    if not math.isclose(norm, 1.0, rel_tol=0, abs_tol=1e-8):
        raise ValidationError(f"direction must be a unit vector, got norm {norm}")
    if tau_window <= 0:
        raise DomainError(f"tau_window must be positive, got {tau_window}")
    if epsilon <= 0:
        raise DomainError(f"epsilon must be positive, got {epsilon}")
    t_end = t - tau_window
    s2_start, s2_end = _resolve_reverse_window(dist, schedule, t, t_end)
    grid = reverse_sigma2_grid(s2_start, s2_end, n_steps)
    x0 = np.atleast_1d(np.asarray(x, dtype=np.float64))
    X = np.stack([x0, x0 + epsilon * w])
    X = _reverse_sweep(dist, X, grid, "reverse-ode", rng=None)
    sep = float(np.linalg.norm(X[1] - X[0]))
    if sep == 0.0:
        return -math.inf
    return math.log(sep / epsilon) / tau_window


def write_trajectory_csv(times: np.ndarray, states: np.ndarray, mode: str, path) -> None:
    """Trajectory dump: columns t, x_1..x_D, trajectory_id, mode."""
    if states.ndim == 2:
        states = states[None, :, :]
    n_traj, n_times, d = states.shape
    cols = ["t"] + [f"x_{i + 1}" for i in range(d)] + ["trajectory_id", "mode"]
    lines = [",".join(cols)]
    for i in range(n_traj):
        for k in range(n_times):
            row = [repr(float(times[k]))]
            row += [repr(float(v)) for v in states[i, k]]
            row += [str(i), mode]
            lines.append(",".join(row))
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")
