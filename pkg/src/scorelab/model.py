"""Noise schedules, tractable data distributions, and the forward noising process.

Forward time runs from 0 to ``t_max``.  The accumulated noise variance
``sigma2(t) = int_0^t nu(tau)^2 dtau`` is the natural clock for everything
downstream; reverse-time generation is expressed as decreasing t on the same
axis.  A forward sample is ``x_t = y + sigma(t) * z`` with ``y`` drawn from
the data distribution and ``z`` standard normal.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import brentq

from .errors import DomainError, ParseError, ValidationError
from .rng import map_chunks, substream

__all__ = [
    "NoiseSchedule",
    "constant_schedule",
    "geometric_schedule",
    "table_schedule",
    "default_schedule",
    "DeltaMixture",
    "GaussianFull",
    "GaussianSubspace",
    "DataDistribution",
    "axis_subspace_basis",
    "random_subspace_basis",
    "dim",
    "data_scale",
    "data_mean",
    "ForwardSample",
    "draw_data",
    "sample_forward",
    "sample_forward_batch",
    "load_pointcloud",
]


def _readonly(a: np.ndarray) -> np.ndarray:
    out = np.array(a, dtype=np.float64)
    out.setflags(write=False)
    return out


# ---------------------------------------------------------------------------
# noise schedules
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NoiseSchedule:
    """Noise-rate schedule nu(t) with accumulated variance sigma2(t).

    kinds:
      ``constant``   nu(t) = nu0, so sigma2(t) = nu0^2 t.
      ``geometric``  sigma2(t) = sigma_min^2 (exp(2 kappa t) - 1) with
                     kappa = log(sigma_max / sigma_min) / t_max;
                     variance-exploding with sigma2(0) = 0 and
                     sigma2(t_max) = sigma_max^2 - sigma_min^2.
      ``table``      nu^2 given at increasing time nodes starting at 0 and
                     interpolated linearly; sigma2 is the exact integral of
                     the interpolant.

    sigma2 is zero at t = 0 and strictly increasing on [0, t_max].
    """

    kind: str
    t_max: float
    nu0: float = 0.0
    sigma_min: float = 0.0
    sigma_max: float = 0.0
    t_nodes: np.ndarray | None = None
    nu2_nodes: np.ndarray | None = None
    cum_nodes: np.ndarray | None = field(default=None, repr=False)

    @property
    def t_min(self) -> float:
        return 0.0

    def _check_t(self, t: float) -> float:
        t = float(t)
        if not (0.0 <= t <= self.t_max) or not math.isfinite(t):
            raise DomainError(f"t={t} outside schedule domain [0, {self.t_max}]")
        return t

    def nu2(self, t: float) -> float:
        """Squared noise rate nu(t)^2."""
        t = self._check_t(t)
        if self.kind == "constant":
            return self.nu0**2
        if self.kind == "geometric":
            kappa = math.log(self.sigma_max / self.sigma_min) / self.t_max
            return 2.0 * kappa * self.sigma_min**2 * math.exp(2.0 * kappa * t)
        return float(np.interp(t, self.t_nodes, self.nu2_nodes))

    def sigma2(self, t: float) -> float:
        """Accumulated variance int_0^t nu^2."""
        t = self._check_t(t)
        if self.kind == "constant":
            return self.nu0**2 * t
        if self.kind == "geometric":
            kappa = math.log(self.sigma_max / self.sigma_min) / self.t_max
            return self.sigma_min**2 * math.expm1(2.0 * kappa * t)
        i = int(np.searchsorted(self.t_nodes, t, side="right") - 1)
        i = min(max(i, 0), len(self.t_nodes) - 2)
        t0, t1 = self.t_nodes[i], self.t_nodes[i + 1]
        a, b = self.nu2_nodes[i], self.nu2_nodes[i + 1]
        dt = t - t0
        # exact integral of the linear segment a + (b-a)(tau-t0)/(t1-t0)
        return float(self.cum_nodes[i] + a * dt + 0.5 * (b - a) * dt**2 / (t1 - t0))

    def sigma(self, t: float) -> float:
        return math.sqrt(self.sigma2(t))

    def t_of_sigma2(self, v: float) -> float:
        """Inverse clock: the time at which the accumulated variance equals v."""
        v = float(v)
        top = self.sigma2(self.t_max)
        if not (0.0 <= v <= top):
            raise DomainError(f"sigma2={v} outside schedule range [0, {top}]")
        if self.kind == "constant":
            return v / self.nu0**2
        if self.kind == "geometric":
            kappa = math.log(self.sigma_max / self.sigma_min) / self.t_max
            return math.log1p(v / self.sigma_min**2) / (2.0 * kappa)
        if v == 0.0:
            return 0.0
        return float(brentq(lambda t: self.sigma2(t) - v, 0.0, self.t_max, xtol=1e-15, rtol=1e-15))


def constant_schedule(nu: float = 1.0, t_max: float = 1e9) -> NoiseSchedule:
    if nu <= 0:
        raise ValidationError("schedule requires nu > 0")
    return NoiseSchedule(kind="constant", t_max=float(t_max), nu0=float(nu))


def geometric_schedule(sigma_min: float, sigma_max: float, t_max: float = 1.0) -> NoiseSchedule:
    if not (0 < sigma_min < sigma_max):
        raise ValidationError("geometric schedule requires 0 < sigma_min < sigma_max")
    return NoiseSchedule(
        kind="geometric", t_max=float(t_max), sigma_min=float(sigma_min), sigma_max=float(sigma_max)
    )


def table_schedule(t_nodes, nu2_nodes) -> NoiseSchedule:
    t = np.asarray(t_nodes, dtype=np.float64)
    nu2 = np.asarray(nu2_nodes, dtype=np.float64)
    if t.ndim != 1 or t.shape != nu2.shape or t.size < 2:
        raise ValidationError("table schedule needs matching 1-d t and nu2 arrays, length >= 2")
    if t[0] != 0.0 or np.any(np.diff(t) <= 0):
        raise ValidationError("table times must start at 0 and be strictly increasing")
    if np.any(nu2 < 0) or not np.all(np.isfinite(nu2)) or not np.all(np.isfinite(t)):
        raise ValidationError("table nu2 values must be finite and non-negative")
    seg = 0.5 * (nu2[:-1] + nu2[1:]) * np.diff(t)
    if np.any(seg <= 0):
        raise ValidationError("sigma2 must be strictly increasing across every table segment")
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    return NoiseSchedule(
        kind="table",
        t_max=float(t[-1]),
        t_nodes=_readonly(t),
        nu2_nodes=_readonly(nu2),
        cum_nodes=_readonly(cum),
    )


def default_schedule() -> NoiseSchedule:
    """Unit-rate schedule: sigma2(t) = t."""
    return constant_schedule(nu=1.0)


# ---------------------------------------------------------------------------
# data distributions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DeltaMixture:
    """Finite weighted mixture of point masses at ``points`` (K, D)."""

    points: np.ndarray
    weights: np.ndarray | None = None

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=np.float64))
        if pts.ndim != 2 or pts.size == 0:
            raise ValidationError("points must form a non-empty (K, D) array")
        if not np.all(np.isfinite(pts)):
            raise ValidationError("points must be finite")
        k = pts.shape[0]
        for i in range(k):
            for j in range(i + 1, k):
                if np.array_equal(pts[i], pts[j]):
                    raise ValidationError(f"points {i} and {j} are identical")
        if self.weights is None:
            w = np.full(k, 1.0 / k)
        else:
            w = np.asarray(self.weights, dtype=np.float64)
            if w.shape != (k,):
                raise ValidationError("weights must have one entry per point")
            if np.any(w < 0) or not np.all(np.isfinite(w)) or w.sum() <= 0:
                raise ValidationError("weights must be non-negative with positive sum")
            w = w / w.sum()
        object.__setattr__(self, "points", _readonly(pts))
        object.__setattr__(self, "weights", _readonly(w))

    @property
    def k(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]


@dataclass(frozen=True)
class GaussianFull:
    """Gaussian data with arbitrary SPD covariance."""

    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        mu = np.atleast_1d(np.asarray(self.mean, dtype=np.float64))
        cov = np.asarray(self.covariance, dtype=np.float64)
        if cov.shape != (mu.size, mu.size):
            raise ValidationError("covariance must be (D, D) matching mean")
        if not np.all(np.isfinite(mu)) or not np.all(np.isfinite(cov)):
            raise ValidationError("mean and covariance must be finite")
        scale = max(float(np.abs(cov).max()), 1e-300)
        if float(np.abs(cov - cov.T).max()) > 1e-12 * scale:
            raise ValidationError("covariance must be symmetric")
        cov = 0.5 * (cov + cov.T)
        if np.linalg.eigvalsh(cov)[0] <= 0:
            raise ValidationError("covariance must be positive definite")
        object.__setattr__(self, "mean", _readonly(mu))
        object.__setattr__(self, "covariance", _readonly(cov))

    @property
    def dim(self) -> int:
        return self.mean.size


@dataclass(frozen=True)
class GaussianSubspace:
    """Isotropic Gaussian of scale h supported on a D_data-dimensional subspace.

    ``basis`` is (D, D_data) with orthonormal columns; data is
    y = basis @ u with u ~ N(0, h^2 I).
    """

    basis: np.ndarray
    h: float

    def __post_init__(self):
        b = np.asarray(self.basis, dtype=np.float64)
        if b.ndim != 2 or b.shape[1] > b.shape[0] or b.shape[1] < 1:
            raise ValidationError("basis must be (D, D_data) with 1 <= D_data <= D")
        gram = b.T @ b
        if float(np.abs(gram - np.eye(b.shape[1])).max()) > 1e-10:
            raise ValidationError("basis columns must be orthonormal (within 1e-10)")
        if not (self.h > 0 and math.isfinite(self.h)):
            raise ValidationError("h must be positive and finite")
        object.__setattr__(self, "basis", _readonly(b))
        object.__setattr__(self, "h", float(self.h))

    @property
    def dim(self) -> int:
        return self.basis.shape[0]

    @property
    def data_dim(self) -> int:
        return self.basis.shape[1]


DataDistribution = DeltaMixture | GaussianFull | GaussianSubspace


def axis_subspace_basis(d: int, d_data: int) -> np.ndarray:
    """Orthonormal basis spanning the first d_data coordinate axes."""
    return np.eye(d)[:, :d_data]


def random_subspace_basis(d: int, d_data: int, seed: int) -> np.ndarray:
    """Haar-ish random orthonormal basis from a QR factorization."""
    rng = substream(seed, "subspace-basis")
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    q = q * np.sign(np.diag(r))
    return q[:, :d_data]


def dim(dist: DataDistribution) -> int:
    return dist.dim


def data_scale(dist: DataDistribution) -> float:
    """Characteristic data magnitude, used for tolerances and floors."""
    if isinstance(dist, DeltaMixture):
        return float(np.max(np.linalg.norm(dist.points, axis=1)))
    if isinstance(dist, GaussianFull):
        return float(math.sqrt(np.linalg.eigvalsh(dist.covariance)[-1]))
    return dist.h


def data_mean(dist: DataDistribution) -> np.ndarray:
    if isinstance(dist, DeltaMixture):
        return dist.weights @ dist.points
    if isinstance(dist, GaussianFull):
        return np.array(dist.mean)
    return np.zeros(dist.dim)


# ---------------------------------------------------------------------------
# forward process
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ForwardSample:
    """One realization of the forward corruption x = y + sigma(t) z."""

    y: np.ndarray
    z: np.ndarray
    t: float
    sigma2: float
    x: np.ndarray


def draw_data(dist: DataDistribution, rng: np.random.Generator, n: int) -> np.ndarray:
    """n exact samples from the data distribution, shape (n, D)."""
    if isinstance(dist, DeltaMixture):
        idx = rng.choice(dist.k, size=n, p=dist.weights)
        return dist.points[idx]
    if isinstance(dist, GaussianFull):
        chol = np.linalg.cholesky(dist.covariance)
        return dist.mean + rng.standard_normal((n, dist.dim)) @ chol.T
    u = dist.h * rng.standard_normal((n, dist.data_dim))
    return u @ dist.basis.T


def sample_forward(dist: DataDistribution, schedule: NoiseSchedule, t: float, seed: int) -> ForwardSample:
    """Draw one forward sample at time t, deterministic given the seed."""
    s2 = schedule.sigma2(t)
    rng = substream(seed, "forward")
    y = draw_data(dist, rng, 1)[0]
    z = rng.standard_normal(dist.dim)
    x = y + math.sqrt(s2) * z
    return ForwardSample(y=_readonly(y), z=_readonly(z), t=float(t), sigma2=s2, x=_readonly(x))


def sample_forward_batch(
    dist: DataDistribution,
    schedule: NoiseSchedule,
    t: float,
    n: int,
    seed: int,
    threads: int = 1,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(Y, Z, X) arrays of n forward samples at time t."""
    s2 = schedule.sigma2(t)
    sig = math.sqrt(s2)

    def worker(rng, m):
        y = draw_data(dist, rng, m)
        z = rng.standard_normal((m, dist.dim))
        return y, z, y + sig * z

    return map_chunks(n, worker, seed, ("forward-batch", repr(float(t))), threads=threads)


# ---------------------------------------------------------------------------
# point cloud loading
# ---------------------------------------------------------------------------


def _parse_float(token: str, row: int) -> float:
    try:
        v = float(token)
    except ValueError:
        raise ParseError(f"row {row}: non-numeric field {token!r}", row=row) from None
    if not math.isfinite(v):
        raise ParseError(f"row {row}: non-finite value {token!r}", row=row)
    return v


def load_pointcloud(path: str | Path, format: str | None = None) -> DeltaMixture:
    """Load a delta mixture from a CSV or JSON point cloud.

    CSV: one row per point.  An optional header row names the columns; when
    the last header is ``weight`` that column carries point weights.
    JSON: an object with ``points`` (list of coordinate lists) and optional
    ``weights``.  Weights are normalized; omitted weights mean uniform.
    """
    path = Path(path)
    fmt = format or path.suffix.lstrip(".").lower()
    if fmt not in ("csv", "json"):
        raise ValidationError(f"unsupported point cloud format: {fmt!r}")
    if fmt == "json":
        try:
            obj = json.loads(path.read_text())
        except json.JSONDecodeError as e:
            raise ParseError(f"invalid JSON: {e}") from None
        if not isinstance(obj, dict) or "points" not in obj:
            raise ParseError("JSON point cloud must be an object with a 'points' key")
        rows = obj["points"]
        if not isinstance(rows, list) or not rows:
            raise ParseError("'points' must be a non-empty list")
        width = len(rows[0]) if isinstance(rows[0], list) else -1
        pts = []
        for i, r in enumerate(rows):
            if not isinstance(r, list) or len(r) != width:
                raise ParseError(f"row {i}: ragged or non-list point", row=i)
            pts.append([_parse_float(str(v), i) for v in r])
        weights = obj.get("weights")
        return DeltaMixture(points=np.array(pts), weights=weights)

    lines = [ln.strip() for ln in path.read_text().splitlines()]
    lines = [ln for ln in lines if ln]
    if not lines:
        raise ParseError("empty point cloud file")
    header: list[str] | None = None
    first = [tok.strip() for tok in lines[0].split(",")]
    try:
        [float(tok) for tok in first]
    except ValueError:
        header = [tok.lower() for tok in first]
        lines = lines[1:]
        if not lines:
            raise ParseError("point cloud has a header but no data rows")
    has_weight = header is not None and header[-1] == "weight"
    pts, wts = [], []
    width = None
    for i, ln in enumerate(lines):
        toks = [tok.strip() for tok in ln.split(",")]
        if width is None:
            width = len(toks)
        elif len(toks) != width:
            raise ParseError(f"row {i}: expected {width} fields, got {len(toks)}", row=i)
        vals = [_parse_float(tok, i) for tok in toks]
        if has_weight:
            pts.append(vals[:-1])
            wts.append(vals[-1])
        else:
            pts.append(vals)
    return DeltaMixture(points=np.array(pts), weights=np.array(wts) if has_weight else None)
