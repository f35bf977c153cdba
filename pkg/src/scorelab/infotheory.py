"""Entropy rates, divergence decompositions, and Fisher spectra.

Five routes to the conditional entropy rate dH(y | x_t)/dt are implemented
against the same exact-score machinery:

    norm               nu^2/2 * (D/sigma2 - E||score||^2)
    variance           nu^2/(2 sigma2^2) * E[tr var(y|x)]
    divergence         nu^2/2 * (E[tr J] + D/sigma2)
    fisher             C_FISHER * nu^2 * E[tr I_t],  I_t = (I + sigma2 J)/sigma2
    finite-difference  numerical dH/dt with common random numbers

The first is Stein's identity applied to the score norm, the middle three are
algebraically one identity chain (tr I_t = tr J + D/sigma2 = tr var/sigma2^2),
and the finite-difference route is a model-free ground truth.  Profile rates
are stored per unit sigma2, which makes them schedule independent; the
``entropy_rate`` operation applies the nu^2(t) factor of a schedule.

Internally entropy is in nats.  The discrete-game module works in bits; the
conversion is a single factor log(2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ValidationError
from .model import (
    DataDistribution,
    DeltaMixture,
    GaussianFull,
    GaussianSubspace,
    NoiseSchedule,
    draw_data,
)
from .rng import map_chunks, mean_and_stderr
from .score import _check_sigma2, _mixture_log_weights, posterior_batch, score_at

__all__ = [
    "C_FISHER",
    "ESTIMATORS",
    "EntropyEstimate",
    "RateEstimate",
    "EntropyProfile",
    "DivergenceReport",
    "FisherSpectrum",
    "ActiveSetCheck",
    "FactorDiagnostic",
    "BandwidthLimitDiagnostic",
    "conditional_entropy",
    "gaussian_conditional_entropy",
    "entropy_rate",
    "entropy_profile",
    "divergence_report",
    "marginal_entropy_rate",
    "thermodynamic_identity_residual",
    "fisher_spectrum",
    "active_set_norm_check",
    "fisher_factor_diagnostic",
    "bandwidth_limit_diagnostic",
    "write_profile_csv",
    "write_divergence_csv",
    "write_fisher_csv",
]

# Fisher-route prefactor relating the entropy rate to nu^2 E[tr I_t].  The
# identity chain fixes it to one half; fisher_factor_diagnostic measures it.
C_FISHER = 0.5

ESTIMATORS = ("norm", "variance", "divergence", "fisher", "finite-difference")

_SHORT = {
    "norm": "norm",
    "variance": "var",
    "divergence": "div",
    "fisher": "fisher",
    "finite-difference": "fd",
}

# relative sigma2 step for the common-random-number finite difference
FD_DELTA_FRAC = 1e-3


@dataclass(frozen=True)
class EntropyEstimate:
    h: float
    stderr: float


@dataclass(frozen=True)
class RateEstimate:
    rate: float
    stderr: float


@dataclass(frozen=True)
class DivergenceReport:
    """Score-field divergence split div = div1 + delta_div.

    div is E[tr J] <= 0; div1 = -D/sigma2 is the single-point baseline;
    delta_div >= 0 is the data-geometry excess, equal to E[tr I_t].
    """

    t: float
    sigma2: float
    div: float
    div1: float
    delta_div: float
    stderr: float


@dataclass(frozen=True)
class FisherSpectrum:
    """Spectrum of the Fisher matrix I_t(x) = (I + sigma2 J(x)) / sigma2.

    ``est_manifold_dim`` counts eigenvalues inside band * (1/sigma2); active
    data directions sit near 1/sigma2 while resolved or empty directions
    collapse to 0.
    """

    x: np.ndarray
    sigma2: float
    matrix: np.ndarray
    eigenvalues: np.ndarray
    est_manifold_dim: int
    band: tuple[float, float]


@dataclass(frozen=True)
class ActiveSetCheck:
    """Exact score norm at a probe against the active-set prediction 1/(sigma2 m)."""

    m: int
    sigma2: float
    dim: int
    measured_norm2: float
    predicted_norm2: float


@dataclass(frozen=True)
class FactorDiagnostic:
    """Measured Fisher-route prefactor dH/dsigma2 / E[tr I_t]."""

    name: str
    sigma2: float
    measured_ratio: float
    stderr: float
    reference: float


@dataclass(frozen=True)
class BandwidthLimitDiagnostic:
    """Entropy rate of isotropic Gaussians relative to the D nu^2/(2 sigma2) ceiling.

    The ceiling is approached as the data scale h grows (h >> sigma); small h
    suppresses the rate by h^2/(h^2 + sigma2).
    """

    name: str
    sigma2: float
    dim: int
    h_large: float
    h_small: float
    ratio_large_h: float
    ratio_small_h: float


# ---------------------------------------------------------------------------
# per-sample statistics shared by the estimators
# ---------------------------------------------------------------------------


@dataclass
class _EstimatorSamples:
    sigma2: float
    delta_sigma2: float
    dim: int
    snorm2: np.ndarray
    trvar: np.ndarray
    h: np.ndarray | None      # per-sample posterior entropy (mixtures)
    h_pair: np.ndarray | None  # same samples at sigma2 + delta (mixtures)
    h_exact: float | None      # closed form (Gaussians)
    h_exact_up: float | None


def _mixture_entropy_rows(logw: np.ndarray) -> np.ndarray:
    w = np.exp(logw)
    return -np.sum(w * logw, axis=1)


def _sample_stats(
    dist: DataDistribution,
    sigma2: float,
    n_samples: int,
    seed: int,
    threads: int = 1,
    delta_frac: float = FD_DELTA_FRAC,
) -> _EstimatorSamples:
    sigma2 = _check_sigma2(sigma2)
    d = dist.dim
    sig = math.sqrt(sigma2)
    sigma2_up = sigma2 * (1.0 + delta_frac)
    sig_up = math.sqrt(sigma2_up)

    if isinstance(dist, DeltaMixture):

        def worker(rng, m):
            y = draw_data(dist, rng, m)
            z = rng.standard_normal((m, d))
            x = y + sig * z
            logw = _mixture_log_weights(dist, x, sigma2)
            w = np.exp(logw)
            mean = w @ dist.points
            y2 = np.sum(dist.points * dist.points, axis=1)
            m2 = np.sum(mean * mean, axis=1)
            sq = np.maximum(y2[None, :] - 2.0 * (mean @ dist.points.T) + m2[:, None], 0.0)
            trvar = np.sum(w * sq, axis=1)
            snorm2 = np.sum((mean - x) ** 2, axis=1) / sigma2**2
            h = -np.sum(w * logw, axis=1)
            x_up = y + sig_up * z
            h_up = _mixture_entropy_rows(_mixture_log_weights(dist, x_up, sigma2_up))
            return snorm2, trvar, h, h_up

        snorm2, trvar, h, h_up = map_chunks(
            n_samples, worker, seed, ("entropy-stats", repr(sigma2)), threads=threads
        )
        return _EstimatorSamples(
            sigma2=sigma2,
            delta_sigma2=sigma2_up - sigma2,
            dim=d,
            snorm2=snorm2,
            trvar=trvar,
            h=h,
            h_pair=h_up,
            h_exact=None,
            h_exact_up=None,
        )

    # Gaussian variants: posterior variance and conditional entropy are
    # state independent, so only the score norm needs sampling.
    def worker(rng, m):
        y = draw_data(dist, rng, m)
        z = rng.standard_normal((m, d))
        x = y + sig * z
        mean, _, _ = posterior_batch(dist, x, sigma2)
        return (np.sum((mean - x) ** 2, axis=1) / sigma2**2,)

    (snorm2,) = map_chunks(
        n_samples, worker, seed, ("entropy-stats", repr(sigma2)), threads=threads
    )
    _, trace, _ = posterior_batch(dist, np.zeros((1, d)), sigma2)
    return _EstimatorSamples(
        sigma2=sigma2,
        delta_sigma2=sigma2_up - sigma2,
        dim=d,
        snorm2=snorm2,
        trvar=np.full(n_samples, float(trace[0])),
        h=None,
        h_pair=None,
        h_exact=gaussian_conditional_entropy(dist, sigma2),
        h_exact_up=gaussian_conditional_entropy(dist, sigma2_up),
    )


def _rate_per_sigma2(stats: _EstimatorSamples, estimator: str) -> RateEstimate:
    """One estimator route evaluated on a sample bundle, in nats per unit sigma2."""
    s2, d = stats.sigma2, stats.dim
    if estimator == "norm":
        m, se = mean_and_stderr(stats.snorm2)
        return RateEstimate(rate=0.5 * (d / s2 - m), stderr=0.5 * se)
    if estimator == "variance":
        m, se = mean_and_stderr(stats.trvar)
        return RateEstimate(rate=m / (2 * s2**2), stderr=se / (2 * s2**2))
    if estimator == "divergence":
        # add the constant back per sample: averaging trj alone and adding
        # d/s2 afterwards turns summation rounding of the large constant
        # into a false signal with a tiny stderr at small sigma2
        trj = stats.trvar / s2**2 - d / s2
        per = 0.5 * (trj + d / s2)
        m, se = mean_and_stderr(per)
        return RateEstimate(rate=m, stderr=se)
    if estimator == "fisher":
        tr_fisher = stats.trvar / s2**2
        m, se = mean_and_stderr(tr_fisher)
        return RateEstimate(rate=C_FISHER * m, stderr=C_FISHER * se)
    if estimator == "finite-difference":
        if stats.h is not None:
            diff = stats.h_pair - stats.h
            m, se = mean_and_stderr(diff)
            return RateEstimate(rate=m / stats.delta_sigma2, stderr=se / stats.delta_sigma2)
        return RateEstimate(
            rate=(stats.h_exact_up - stats.h_exact) / stats.delta_sigma2, stderr=0.0
        )
    raise ValidationError(f"unknown estimator {estimator!r}; expected one of {ESTIMATORS}")


# ---------------------------------------------------------------------------
# entropy operations
# ---------------------------------------------------------------------------


def conditional_entropy(
    dist: DataDistribution, sigma2: float, n_samples: int, seed: int, threads: int = 1
) -> EntropyEstimate:
    """Monte Carlo H(y | x_t) in nats for a DeltaMixture.

    Per sample the posterior entropy -sum w log w is exact; the only noise is
    the average over x_t.  Gaussian conditional entropies have a closed form,
    see gaussian_conditional_entropy.
    """
    if not isinstance(dist, DeltaMixture):
        raise DomainError("conditional_entropy applies to DeltaMixture; Gaussians have a closed form")
    sigma2 = _check_sigma2(sigma2)
    sig = math.sqrt(sigma2)

    def worker(rng, m):
        y = draw_data(dist, rng, m)
        x = y + sig * rng.standard_normal((m, dist.dim))
        return (_mixture_entropy_rows(_mixture_log_weights(dist, x, sigma2)),)

    (h,) = map_chunks(
        n_samples, worker, seed, ("cond-entropy", repr(sigma2)), threads=threads
    )
    m, se = mean_and_stderr(h)
    return EntropyEstimate(h=m, stderr=se)


def gaussian_conditional_entropy(dist: DataDistribution, sigma2: float) -> float:
    """Closed-form differential entropy H(y | x_t) in nats for Gaussian data.

    For subspace data the entropy is taken within the data subspace, where
    the posterior is a D_data-dimensional Gaussian.
    """
    sigma2 = _check_sigma2(sigma2)
    if isinstance(dist, GaussianFull):
        s = np.linalg.eigvalsh(dist.covariance)
        post = sigma2 * s / (sigma2 + s)
        return float(0.5 * np.sum(np.log(2 * math.pi * math.e * post)))
    if isinstance(dist, GaussianSubspace):
        post = sigma2 * dist.h**2 / (sigma2 + dist.h**2)
        return float(0.5 * dist.data_dim * math.log(2 * math.pi * math.e * post))
    raise DomainError("gaussian_conditional_entropy applies to Gaussian data only")


def entropy_rate(
    dist: DataDistribution,
    schedule: NoiseSchedule,
    t: float,
    estimator: str,
    n_samples: int,
    seed: int,
    threads: int = 1,
) -> RateEstimate:
    """Conditional entropy rate dH(y | x_t)/dt in nats per unit time.

    Positive in forward time; during reverse generation the same number is
    the information gain per unit time (the generative bandwidth).
    """
    s2 = schedule.sigma2(t)
    nu2 = schedule.nu2(t)
    stats = _sample_stats(dist, s2, n_samples, seed, threads=threads)
    r = _rate_per_sigma2(stats, estimator)
    return RateEstimate(rate=nu2 * r.rate, stderr=nu2 * r.stderr)


@dataclass
class EntropyProfile:
    """Entropy and entropy-rate estimates over a sigma2 grid.

    Rates are per unit sigma2 (multiply by nu^2(t) for per-time rates under a
    schedule).  Missing estimators hold NaN columns.
    """

    sigma2_grid: np.ndarray
    h_cond: np.ndarray
    stderr_h: np.ndarray
    rates: dict[str, np.ndarray]
    stderrs: dict[str, np.ndarray]
    n_samples: int
    estimators: tuple[str, ...]


def entropy_profile(
    dist: DataDistribution,
    sigma2_grid: np.ndarray,
    estimators: tuple[str, ...] = ESTIMATORS,
    n_samples: int = 10000,
    master_seed: int = 0,
    threads: int = 1,
) -> EntropyProfile:
    """Sweep the estimator suite over a sigma2 grid.

    Every grid point gets its own named substream, so a profile restricted to
    fewer estimators or re-run with more threads reproduces the same numbers.
    """
    grid = np.asarray(sigma2_grid, dtype=np.float64)
    if grid.ndim != 1 or grid.size == 0 or np.any(grid <= 0):
        raise ValidationError("sigma2 grid must be 1-d and positive")
    for est in estimators:
        if est not in ESTIMATORS:
            raise ValidationError(f"unknown estimator {est!r}; expected one of {ESTIMATORS}")
    n_pts = grid.size
    h_cond = np.full(n_pts, np.nan)
    stderr_h = np.full(n_pts, np.nan)
    rates = {e: np.full(n_pts, np.nan) for e in estimators}
    stderrs = {e: np.full(n_pts, np.nan) for e in estimators}
    for i, s2 in enumerate(grid):
        stats = _sample_stats(dist, float(s2), n_samples, master_seed, threads=threads)
        if stats.h is not None:
            h_cond[i], stderr_h[i] = mean_and_stderr(stats.h)
        else:
            h_cond[i], stderr_h[i] = stats.h_exact, 0.0
        for est in estimators:
            r = _rate_per_sigma2(stats, est)
            rates[est][i] = r.rate
            stderrs[est][i] = r.stderr
    return EntropyProfile(
        sigma2_grid=grid.copy(),
        h_cond=h_cond,
        stderr_h=stderr_h,
        rates=rates,
        stderrs=stderrs,
        n_samples=int(n_samples),
        estimators=tuple(estimators),
    )


# ---------------------------------------------------------------------------
# divergence and the marginal-entropy identity
# ---------------------------------------------------------------------------


def divergence_report(
    dist: DataDistribution,
    schedule: NoiseSchedule,
    t: float,
    n_samples: int,
    seed: int,
    threads: int = 1,
) -> DivergenceReport:
    """E[tr J] over x_t ~ p_t, decomposed as div1 + delta_div."""
    s2 = schedule.sigma2(t)
    stats = _sample_stats(dist, s2, n_samples, seed, threads=threads)
    d = stats.dim
    # delta_div is averaged per sample rather than recovered as div - div1,
    # which would inherit summation rounding of the large constant d/s2
    trj = stats.trvar / s2**2 - d / s2
    delta = trj + d / s2
    delta_div, se = mean_and_stderr(delta)
    div1 = -d / s2
    return DivergenceReport(
        t=float(t), sigma2=s2, div=div1 + delta_div, div1=div1,
        delta_div=delta_div, stderr=se,
    )


def marginal_entropy_rate(
    dist: DataDistribution,
    schedule: NoiseSchedule,
    t: float,
    n_samples: int,
    seed: int,
    threads: int = 1,
) -> RateEstimate:
    """dH[x_t]/dt = -nu^2/2 E[tr J], in nats per unit time."""
    rep = divergence_report(dist, schedule, t, n_samples, seed, threads=threads)
    nu2 = schedule.nu2(t)
    return RateEstimate(rate=-0.5 * nu2 * rep.div, stderr=0.5 * nu2 * rep.stderr)


def thermodynamic_identity_residual(
    dist: DataDistribution,
    schedule: NoiseSchedule,
    t: float,
    n_samples: int,
    seed: int,
    threads: int = 1,
) -> RateEstimate:
    """Residual of dH[x_t]/dt = D nu^2/(2 sigma2) - dH(y|x_t)/dt, with stderr.

    The marginal rate is taken from the divergence route and the conditional
    rate from the independent score-norm route over the same samples, so the
    residual mean is zero only by Stein's identity, not by construction.
    """
    s2 = schedule.sigma2(t)
    nu2 = schedule.nu2(t)
    stats = _sample_stats(dist, s2, n_samples, seed, threads=threads)
    d = stats.dim
    trj = stats.trvar / s2**2 - d / s2
    marginal = -0.5 * nu2 * trj
    cond = 0.5 * nu2 * (d / s2 - stats.snorm2)
    resid = marginal - nu2 * d / (2 * s2) + cond
    m, se = mean_and_stderr(resid)
    return RateEstimate(rate=m, stderr=se)


# ---------------------------------------------------------------------------
# Fisher spectrum and diagnostics
# ---------------------------------------------------------------------------


def fisher_spectrum(
    dist: DataDistribution,
    x: np.ndarray,
    sigma2: float,
    band: tuple[float, float] = (0.5, 1.5),
) -> FisherSpectrum:
    """Fisher matrix (I + sigma2 J)/sigma2 at one point, with a dimension count.

    A direction is counted as an active manifold direction when its
    eigenvalue lies within band * (1/sigma2).
    """
    sigma2 = _check_sigma2(sigma2)
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    d = dist.dim
    if isinstance(dist, DeltaMixture):
        from .score import posterior

        mat = posterior(dist, x, sigma2).covariance / sigma2**2
    elif isinstance(dist, GaussianFull):
        a = dist.covariance + sigma2 * np.eye(d)
        mat = np.eye(d) / sigma2 - np.linalg.solve(a, np.eye(d))
    else:
        b = dist.basis
        mat = (b @ b.T) * (1.0 / sigma2 - 1.0 / (dist.h**2 + sigma2))
    mat = 0.5 * (mat + mat.T)
    eig = np.linalg.eigvalsh(mat)
    lo, hi = band[0] / sigma2, band[1] / sigma2
    est_dim = int(np.sum((eig >= lo) & (eig <= hi)))
    return FisherSpectrum(
        x=x, sigma2=sigma2, matrix=mat, eigenvalues=eig, est_manifold_dim=est_dim, band=band
    )


def active_set_norm_check(m: int, sigma2: float, d: int) -> ActiveSetCheck:
    """Exact E||score||^2 at a probe with m orthogonal equidistant active points.

    Builds m points at mutually orthogonal offsets of norm sigma from the
    probe (the origin) and compares the exact score norm there with the
    active-set prediction 1/(sigma2 m).
    """
    sigma2 = _check_sigma2(sigma2)
    if not (1 <= m <= d):
        raise DomainError(f"need 1 <= m <= D for orthogonal offsets, got m={m}, D={d}")
    sig = math.sqrt(sigma2)
    points = sig * np.eye(d)[:m]
    mix = DeltaMixture(points=points)
    ev = score_at(mix, np.zeros(d), sigma2)
    measured = float(np.sum(ev.score**2))
    return ActiveSetCheck(
        m=m, sigma2=sigma2, dim=d, measured_norm2=measured, predicted_norm2=1.0 / (sigma2 * m)
    )


def fisher_factor_diagnostic(
    dist: DataDistribution, sigma2: float, n_samples: int, seed: int, threads: int = 1
) -> FactorDiagnostic:
    """Measure the Fisher-route prefactor against the finite-difference rate.

    Returns (dH/dsigma2) / E[tr I_t]; the identity chain fixes this to 1/2.
    """
    stats = _sample_stats(dist, sigma2, n_samples, seed, threads=threads)
    fd = _rate_per_sigma2(stats, "finite-difference")
    tr_fisher, tr_se = mean_and_stderr(stats.trvar / stats.sigma2**2)
    ratio = fd.rate / tr_fisher
    # first-order error propagation for the ratio
    se = abs(ratio) * math.sqrt(
        (fd.stderr / fd.rate) ** 2 + (tr_se / tr_fisher) ** 2
    ) if fd.rate != 0 and tr_fisher != 0 else float("nan")
    return FactorDiagnostic(
        name="fisher-trace-factor",
        sigma2=stats.sigma2,
        measured_ratio=ratio,
        stderr=se,
        reference=C_FISHER,
    )


def bandwidth_limit_diagnostic(
    d: int = 4,
    sigma2: float = 1.0,
    h_large: float = 1e3,
    h_small: float = 1e-3,
    n_samples: int = 20000,
    seed: int = 0,
    threads: int = 1,
) -> BandwidthLimitDiagnostic:
    """Measure which isotropic-Gaussian limit saturates the bandwidth ceiling.

    The conditional entropy rate of N(0, h^2 I) data approaches the ceiling
    D/(2 sigma2) per unit sigma2 as h grows and is suppressed by
    h^2/(h^2 + sigma2) as h shrinks; the returned ratios measure both ends
    with the score-norm estimator.
    """
    ceiling = d / (2 * sigma2)
    ratios = []
    for h in (h_large, h_small):
        dist = GaussianFull(mean=np.zeros(d), covariance=h**2 * np.eye(d))
        stats = _sample_stats(dist, sigma2, n_samples, seed, threads=threads)
        r = _rate_per_sigma2(stats, "norm")
        ratios.append(r.rate / ceiling)
    return BandwidthLimitDiagnostic(
        name="gaussian-bandwidth-limit",
        sigma2=sigma2,
        dim=d,
        h_large=h_large,
        h_small=h_small,
        ratio_large_h=ratios[0],
        ratio_small_h=ratios[1],
    )


# ---------------------------------------------------------------------------
# delimited output
# ---------------------------------------------------------------------------


def _fmt(v: float) -> str:
    return repr(float(v))


def write_profile_csv(profile: EntropyProfile, path) -> None:
    """Profile CSV with fixed columns; absent estimators are written as nan."""
    cols = ["sigma2", "H_cond", "stderr_H"]
    for est in ESTIMATORS:
        cols += [f"rate_{_SHORT[est]}", f"stderr_{_SHORT[est]}"]
    lines = [",".join(cols)]
    for i, s2 in enumerate(profile.sigma2_grid):
        row = [_fmt(s2), _fmt(profile.h_cond[i]), _fmt(profile.stderr_h[i])]
        for est in ESTIMATORS:
            if est in profile.rates:
                row += [_fmt(profile.rates[est][i]), _fmt(profile.stderrs[est][i])]
            else:
                row += ["nan", "nan"]
        lines.append(",".join(row))
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def write_fisher_csv(spectra: list[FisherSpectrum], path) -> None:
    """Fisher sweep CSV: sigma2, eig_1..eig_D ascending, est_manifold_dim."""
    if not spectra:
        raise ValidationError("fisher sweep needs at least one spectrum")
    d = spectra[0].eigenvalues.size
    cols = ["sigma2"] + [f"eig_{i + 1}" for i in range(d)] + ["est_manifold_dim"]
    lines = [",".join(cols)]
    for s in spectra:
        row = [_fmt(s.sigma2)] + [_fmt(v) for v in s.eigenvalues]
        row.append(str(s.est_manifold_dim))
        lines.append(",".join(row))
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def write_divergence_csv(reports: list[DivergenceReport], path) -> None:
    lines = ["sigma2,div,div1,delta_div,stderr"]
    for r in reports:
        lines.append(
            ",".join(_fmt(v) for v in (r.sigma2, r.div, r.div1, r.delta_div, r.stderr))
        )
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")
