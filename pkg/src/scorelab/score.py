"""Exact posterior statistics, score field, and score Jacobian.

For data y corrupted as x = y + sigma z the posterior p(y | x) is available
in closed form for every supported distribution.  The score of the noisy
marginal follows from the posterior mean,

    score(x) = (E[y | x] - x) / sigma2,

and its Jacobian from the posterior covariance,

    J(x) = -I / sigma2 + var(y | x) / sigma2^2,

so the Fisher matrix (I + sigma2 J)/sigma2 equals var(y|x)/sigma2^2 for
mixtures.  Mixture responsibilities are always computed in log-space with
max subtraction; covariances are accumulated centered on the posterior mean.

All operations here are parameterized by ``sigma2``, the accumulated forward
variance; under the default unit-rate schedule sigma2 equals forward time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import logsumexp

from .errors import DomainError, EvaluationError, SingularPosteriorError, ValidationError
from .model import (
    DataDistribution,
    DeltaMixture,
    GaussianFull,
    GaussianSubspace,
    draw_data,
)
from .rng import map_chunks, mean_and_stderr

__all__ = [
    "PosteriorStats",
    "ScoreEval",
    "LossDecomposition",
    "posterior",
    "posterior_batch",
    "score_at",
    "score_batch",
    "log_density",
    "exact_noise_predictor",
    "denoising_loss_decomposition",
]


@dataclass(frozen=True)
class PosteriorStats:
    """Posterior p(y | x) summarized by weights (mixtures only), mean, covariance."""

    mean: np.ndarray
    covariance: np.ndarray
    trace_var: float
    weights: np.ndarray | None = None


@dataclass(frozen=True)
class ScoreEval:
    """Score and score Jacobian of the noisy marginal at one point."""

    x: np.ndarray
    sigma2: float
    score: np.ndarray
    jacobian: np.ndarray


def _check_sigma2(sigma2: float) -> float:
    sigma2 = float(sigma2)
    if not (sigma2 > 0 and math.isfinite(sigma2)):
        raise DomainError(f"sigma2 must be positive and finite, got {sigma2}")
    return sigma2


def _check_x(dist: DataDistribution, x) -> np.ndarray:
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    if x.ndim != 1 or x.shape[0] != dist.dim:
        raise ValidationError(
            f"x must be a vector of dimension {dist.dim}, got shape {x.shape}"
        )
    return x


def _check_x_batch(dist: DataDistribution, X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.ndim != 2 or X.shape[1] != dist.dim:
        raise ValidationError(
            f"X must have shape (n, {dist.dim}), got {X.shape}"
        )
    return X


# ---------------------------------------------------------------------------
# mixture internals (vectorized over rows of X)
# ---------------------------------------------------------------------------


def _mixture_log_weights(dist: DeltaMixture, X: np.ndarray, sigma2: float) -> np.ndarray:
    """(n, K) log posterior weights, normalized with a log-sum-exp."""
    Y = dist.points
    # squared distances via the expanded form; memory is O(n K), not O(n K D)
    d2 = (
        np.sum(X * X, axis=1)[:, None]
        - 2.0 * X @ Y.T
        + np.sum(Y * Y, axis=1)[None, :]
    )
    logw = np.log(dist.weights)[None, :] - d2 / (2.0 * sigma2)
    return logw - logsumexp(logw, axis=1, keepdims=True)


def _mixture_posterior_arrays(
    dist: DeltaMixture, X: np.ndarray, sigma2: float
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(posterior mean (n,D), trace of posterior variance (n,), weights (n,K))."""
    W = np.exp(_mixture_log_weights(dist, X, sigma2))
    Y = dist.points
    M = W @ Y
    # tr var(y|x) accumulated centered on the mean: sum_j w_j ||y_j - m||^2
    y2 = np.sum(Y * Y, axis=1)
    m2 = np.sum(M * M, axis=1)
    sq = np.maximum(y2[None, :] - 2.0 * (M @ Y.T) + m2[:, None], 0.0)
    trace = np.sum(W * sq, axis=1)
    return M, trace, W


# ---------------------------------------------------------------------------
# public posterior / score API
# ---------------------------------------------------------------------------


def posterior(dist: DataDistribution, x: np.ndarray, sigma2: float) -> PosteriorStats:
    """Exact posterior statistics of p(y | x_t) at a single point.

    For sigma2 = 0 a DeltaMixture posterior exists only when x coincides with
    a data point; anywhere else the conditional measure is singular.
    """
    x = _check_x(dist, x)
    if isinstance(dist, DeltaMixture):
        if float(sigma2) == 0.0:
            hits = [j for j in range(dist.k) if np.array_equal(x, dist.points[j])]
            if not hits:
                raise SingularPosteriorError(
                    "posterior at sigma2=0 exists only at a data point"
                )
            w = np.zeros(dist.k)
            w[hits[0]] = 1.0
            d = dist.dim
            return PosteriorStats(mean=x.copy(), covariance=np.zeros((d, d)), trace_var=0.0, weights=w)
        sigma2 = _check_sigma2(sigma2)
        M, trace, W = _mixture_posterior_arrays(dist, x[None, :], sigma2)
        m, w = M[0], W[0]
        diff = dist.points - m
        cov = (diff * w[:, None]).T @ diff
        cov = 0.5 * (cov + cov.T)
        return PosteriorStats(mean=m, covariance=cov, trace_var=float(trace[0]), weights=w)

    sigma2 = _check_sigma2(sigma2)
    d = dist.dim
    if isinstance(dist, GaussianFull):
        a = dist.covariance + sigma2 * np.eye(d)
        gain = np.linalg.solve(a, dist.covariance).T  # Sigma0 (Sigma0 + s2 I)^-1
        m = dist.mean + gain @ (x - dist.mean)
        cov = sigma2 * gain
        cov = 0.5 * (cov + cov.T)
        return PosteriorStats(mean=m, covariance=cov, trace_var=float(np.trace(cov)))
    b = dist.basis
    c = dist.h**2 / (dist.h**2 + sigma2)
    m = c * (b @ (b.T @ x))
    cov = (sigma2 * c) * (b @ b.T)
    return PosteriorStats(mean=m, covariance=cov, trace_var=float(dist.data_dim * sigma2 * c))


def posterior_batch(
    dist: DataDistribution, X: np.ndarray, sigma2: float
) -> tuple[np.ndarray, np.ndarray, np.ndarray | None]:
    """Posterior mean (n,D), trace of posterior variance (n,), weights (n,K) or None."""
    sigma2 = _check_sigma2(sigma2)
    X = _check_x_batch(dist, X)
    if isinstance(dist, DeltaMixture):
        return _mixture_posterior_arrays(dist, X, sigma2)
    if isinstance(dist, GaussianFull):
        a = dist.covariance + sigma2 * np.eye(dist.dim)
        gain = np.linalg.solve(a, dist.covariance).T
        M = dist.mean + (X - dist.mean) @ gain.T
        trace = float(sigma2 * np.trace(gain))
        return M, np.full(X.shape[0], trace), None
    b = dist.basis
    c = dist.h**2 / (dist.h**2 + sigma2)
    M = c * ((X @ b) @ b.T)
    trace = dist.data_dim * sigma2 * c
    return M, np.full(X.shape[0], trace), None


def score_batch(dist: DataDistribution, X: np.ndarray, sigma2: float) -> np.ndarray:
    """Exact score of the noisy marginal at each row of X."""
    M, _, _ = posterior_batch(dist, X, sigma2)
    return (M - np.atleast_2d(X)) / sigma2


def _jacobian(dist: DataDistribution, x: np.ndarray, sigma2: float) -> np.ndarray:
    d = dist.dim
    if isinstance(dist, DeltaMixture):
        cov = posterior(dist, x, sigma2).covariance
        jac = cov / sigma2**2 - np.eye(d) / sigma2
    elif isinstance(dist, GaussianFull):
        a = dist.covariance + sigma2 * np.eye(d)
        jac = -np.linalg.solve(a, np.eye(d))
    else:
        b = dist.basis
        proj = b @ b.T
        jac = -(proj / (dist.h**2 + sigma2) + (np.eye(d) - proj) / sigma2)
    return 0.5 * (jac + jac.T)


def score_at(dist: DataDistribution, x: np.ndarray, sigma2: float) -> ScoreEval:
    """Exact score and Jacobian at one point."""
    sigma2 = _check_sigma2(sigma2)
    x = _check_x(dist, x)
    post = posterior(dist, x, sigma2)
    s = (post.mean - x) / sigma2
    return ScoreEval(x=x, sigma2=sigma2, score=s, jacobian=_jacobian(dist, x, sigma2))


def log_density(dist: DataDistribution, x: np.ndarray, sigma2: float) -> float:
    """Log density of the noisy marginal p_t at one point."""
    sigma2 = _check_sigma2(sigma2)
    x = _check_x(dist, x)
    d = dist.dim
    if isinstance(dist, DeltaMixture):
        d2 = np.sum((dist.points - x) ** 2, axis=1)
        comp = np.log(dist.weights) - d2 / (2 * sigma2) - 0.5 * d * math.log(2 * math.pi * sigma2)
        return float(logsumexp(comp))
    if isinstance(dist, GaussianFull):
        a = dist.covariance + sigma2 * np.eye(d)
        diff = x - dist.mean
        sign, logdet = np.linalg.slogdet(a)
        q = diff @ np.linalg.solve(a, diff)
        return float(-0.5 * (q + logdet + d * math.log(2 * math.pi)))
    b = dist.basis
    par = b.T @ x
    perp2 = float(x @ x - par @ par)
    v_par = dist.h**2 + sigma2
    lp = -0.5 * (par @ par) / v_par - 0.5 * dist.data_dim * math.log(2 * math.pi * v_par)
    lp += -0.5 * perp2 / sigma2 - 0.5 * (d - dist.data_dim) * math.log(2 * math.pi * sigma2)
    return float(lp)


def exact_noise_predictor(dist: DataDistribution) -> Callable[[np.ndarray, float], np.ndarray]:
    """The optimal z-unit denoiser E[z | x] = -sigma * score(x), vectorized."""

    def predictor(X: np.ndarray, sigma2: float) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        M, _, _ = posterior_batch(dist, X, sigma2)
        return (X - M) / math.sqrt(sigma2)

    return predictor


# ---------------------------------------------------------------------------
# denoising loss decomposition
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LossDecomposition:
    """Denoising loss split L_d = L_sm + C_t, everything in z-units.

    ``l_d`` is E||z - s(x)||^2 over forward samples, ``l_sm`` is
    E||E[z|x] - s(x)||^2, and ``c_t_z_units`` is the candidate-independent
    floor E||z - E[z|x]||^2; multiplied by sigma2 it equals E[tr var(y|x)].
    ``residual`` is the per-sample mean of l_d - l_sm - c_t, zero in
    expectation for any candidate.
    """

    sigma2: float
    n_samples: int
    l_d: float
    l_d_stderr: float
    l_sm: float
    l_sm_stderr: float
    c_t_z_units: float
    c_t_stderr: float
    residual: float
    residual_stderr: float


def denoising_loss_decomposition(
    dist: DataDistribution,
    sigma2: float,
    candidate: Callable[[np.ndarray, float], np.ndarray],
    n_samples: int,
    seed: int,
    threads: int = 1,
) -> LossDecomposition:
    """Monte Carlo decomposition of the denoising loss for a candidate denoiser.

    ``candidate(X, sigma2)`` maps an (n, D) batch of noisy states to (n, D)
    noise predictions; the exact candidate is ``exact_noise_predictor(dist)``.
    """
    sigma2 = _check_sigma2(sigma2)
    sig = math.sqrt(sigma2)

    def worker(rng, m):
        y = draw_data(dist, rng, m)
        z = rng.standard_normal((m, dist.dim))
        x = y + sig * z
        mean, _, _ = posterior_batch(dist, x, sigma2)
        ez = (x - mean) / sig
        s = np.asarray(candidate(x, sigma2), dtype=np.float64)
        if s.shape != x.shape or not np.all(np.isfinite(s)):
            bad = None
            if s.shape == x.shape:
                bad = x[~np.all(np.isfinite(s), axis=1)][:1]
            raise EvaluationError("candidate returned an invalid prediction", x=bad)
        a = np.sum((z - s) ** 2, axis=1)
        b = np.sum((ez - s) ** 2, axis=1)
        c = np.sum((z - ez) ** 2, axis=1)
        return a, b, c

    a, b, c = map_chunks(
        n_samples, worker, seed, ("denoising-loss", repr(sigma2)), threads=threads
    )
    l_d, se_d = mean_and_stderr(a)
    l_sm, se_sm = mean_and_stderr(b)
    c_t, se_c = mean_and_stderr(c)
    res, se_res = mean_and_stderr(a - b - c)
    return LossDecomposition(
        sigma2=sigma2,
        n_samples=int(n_samples),
        l_d=l_d,
        l_d_stderr=se_d,
        l_sm=l_sm,
        l_sm_stderr=se_sm,
        c_t_z_units=c_t,
        c_t_stderr=se_c,
        residual=res,
        residual_stderr=se_res,
    )
