import math

import numpy as np
import pytest
from scipy.special import logsumexp, roots_hermite
from scipy.stats import multivariate_normal

from scorelab.errors import EvaluationError, SingularPosteriorError, ValidationError
from scorelab.model import DeltaMixture, GaussianFull, GaussianSubspace, axis_subspace_basis
from scorelab.score import (
    denoising_loss_decomposition,
    exact_noise_predictor,
    log_density,
    posterior,
    posterior_batch,
    score_at,
    score_batch,
)

TWO = DeltaMixture(points=np.array([[1.0], [-1.0]]), weights=np.array([0.5, 0.5]))
FIVE = DeltaMixture(
    points=np.array([[1.2, 0.0], [-0.8, 0.9], [0.0, -1.1], [0.7, 0.7], [-1.3, -0.4]]),
    weights=np.array([0.1, 0.3, 0.2, 0.25, 0.15]),
)


def brute_posterior_weights(dist, x, sigma2):
    # direct normalized responsibilities, no log-space tricks
    d2 = np.sum((dist.points - x) ** 2, axis=1)
    w = dist.weights * np.exp(-d2 / (2 * sigma2))
    return w / w.sum()


def test_posterior_weights_match_direct_computation():
    rng = np.random.default_rng(1)
    for _ in range(30):
        x = rng.normal(size=2) * 2
        s2 = float(10 ** rng.uniform(-1, 1))
        ps = posterior(FIVE, x, s2)
        assert np.allclose(ps.weights, brute_posterior_weights(FIVE, x, s2), rtol=1e-12)
        assert ps.weights.sum() == pytest.approx(1.0, abs=1e-12)
        assert ps.trace_var >= 0


def test_two_point_posterior_is_logistic():
    # for points {0, 1} the first-point weight is logistic((2x-1)/(2 sigma2))
    pts = DeltaMixture(points=np.array([[1.0], [0.0]]), weights=np.array([0.5, 0.5]))
    x, s2 = np.array([0.8]), 0.2
    expected = 1.0 / (1.0 + math.exp(-(2 * 0.8 - 1.0) / (2 * s2)))
    ps = posterior(pts, x, s2)
    assert ps.weights[0] == pytest.approx(expected, rel=1e-12)
    assert ps.weights[0] == pytest.approx(0.8175744761936437, rel=1e-9)


def test_symmetric_pair_score_is_shifted_tanh():
    s2 = 0.5
    x = np.array([0.5])
    ev = score_at(TWO, x, s2)
    expected = (math.tanh(0.5 / s2) - 0.5) / s2
    assert ev.score[0] == pytest.approx(expected, rel=1e-12)
    # jacobian: -1/s2 + (1 - tanh^2)/s2^2
    m = math.tanh(0.5 / s2)
    assert ev.jacobian[0, 0] == pytest.approx(-1 / s2 + (1 - m * m) / s2**2, rel=1e-12)


def test_score_is_gradient_of_log_density():
    rng = np.random.default_rng(2)
    for dist in [TWO, FIVE]:
        d = dist.points.shape[1]
        for _ in range(12):
            x = rng.normal(size=d) * 1.5
            s2 = float(10 ** rng.uniform(-0.7, 1.0))
            ev = score_at(dist, x, s2)
            for i in range(d):
                e = np.zeros(d)
                e[i] = 1e-6 * max(1.0, abs(x[i]))
                fd = (log_density(dist, x + e, s2) - log_density(dist, x - e, s2)) / (2 * e[i])
                assert fd == pytest.approx(ev.score[i], rel=2e-6, abs=1e-9)


def test_jacobian_is_derivative_of_score():
    rng = np.random.default_rng(3)
    for _ in range(8):
        x = rng.normal(size=2) * 1.5
        s2 = float(10 ** rng.uniform(-0.5, 0.8))
        ev = score_at(FIVE, x, s2)
        for i in range(2):
            e = np.zeros(2)
            e[i] = 1e-6
            fd = (score_at(FIVE, x + e, s2).score - score_at(FIVE, x - e, s2).score) / (2e-6)
            assert np.allclose(fd, ev.jacobian[:, i], rtol=2e-4, atol=1e-6)
        assert np.allclose(ev.jacobian, ev.jacobian.T, atol=1e-10)


def test_gaussian_full_score_closed_form():
    g = GaussianFull(mean=np.array([0.5, -1.0]), covariance=np.array([[2.0, 0.3], [0.3, 0.5]]))
    rng = np.random.default_rng(4)
    for _ in range(10):
        x = rng.normal(size=2) * 3
        s2 = float(10 ** rng.uniform(-1, 1))
        a = g.covariance + s2 * np.eye(2)
        expected = -np.linalg.solve(a, x - g.mean)
        ev = score_at(g, x, s2)
        assert np.allclose(ev.score, expected, rtol=1e-10)
        assert np.allclose(ev.jacobian, -np.linalg.inv(a), rtol=1e-10)
        ld = multivariate_normal(mean=g.mean, cov=a).logpdf(x)
        assert log_density(g, x, s2) == pytest.approx(float(ld), rel=1e-10)


def test_gaussian_subspace_posterior_forms():
    gs = GaussianSubspace(basis=axis_subspace_basis(4, 2), h=3.0)
    x = np.array([1.0, -2.0, 0.5, 0.25])
    s2 = 0.8
    c = 3.0**2 / (3.0**2 + s2)
    ps = posterior(gs, x, s2)
    bbt = gs.basis @ gs.basis.T
    assert np.allclose(ps.mean, c * bbt @ x, rtol=1e-12)
    assert np.allclose(ps.covariance, s2 * c * bbt, rtol=1e-12)
    assert ps.trace_var == pytest.approx(2 * s2 * c, rel=1e-12)


def test_log_density_matches_logsumexp_mixture():
    rng = np.random.default_rng(5)
    for _ in range(10):
        x = rng.normal(size=2) * 2
        s2 = float(10 ** rng.uniform(-1, 1))
        d2 = np.sum((FIVE.points - x) ** 2, axis=1)
        expected = logsumexp(np.log(FIVE.weights) - d2 / (2 * s2)) - math.log(2 * math.pi * s2)
        assert log_density(FIVE, x, s2) == pytest.approx(float(expected), rel=1e-12)


def test_score_shift_and_scale_equivariance():
    rng = np.random.default_rng(6)
    shift = np.array([0.7, -1.4])
    shifted = DeltaMixture(points=FIVE.points + shift, weights=FIVE.weights)
    a = 2.5
    scaled = DeltaMixture(points=FIVE.points * a, weights=FIVE.weights)
    for _ in range(10):
        x = rng.normal(size=2)
        s2 = float(10 ** rng.uniform(-0.5, 0.5))
        s0 = score_at(FIVE, x, s2).score
        assert np.allclose(score_at(shifted, x + shift, s2).score, s0, rtol=1e-12)
        assert np.allclose(score_at(scaled, a * x, a**2 * s2).score, s0 / a, rtol=1e-12)


def test_posterior_at_zero_noise():
    # the zero-noise posterior exists only exactly at a data point
    ps = posterior(TWO, np.array([1.0]), 0.0)
    assert np.allclose(ps.weights, [1.0, 0.0])
    assert ps.trace_var == 0.0
    assert np.allclose(ps.mean, [1.0])
    with pytest.raises(SingularPosteriorError):
        posterior(TWO, np.array([0.2]), 0.0)


def test_posterior_concentration_and_symmetry():
    mid = posterior(TWO, np.array([0.0]), 0.37)
    assert np.allclose(mid.weights, [0.5, 0.5], rtol=1e-12)
    assert np.allclose(mid.mean, [0.0], atol=1e-15)
    near = posterior(TWO, np.array([1.0]), 1e-4)
    assert near.weights[0] >= 1 - 1e-3
    assert near.mean[0] == pytest.approx(1.0, abs=1e-3)


def test_asymmetric_pair_posterior_value():
    # {0, 3} uniform, x=1, sigma2=1: w_0 proportional to exp(-1/2), w_1 to
    # exp(-2), so the nearer point carries 1/(1 + exp(-3/2))
    pair = DeltaMixture(points=np.array([[0.0], [3.0]]), weights=np.array([0.5, 0.5]))
    ps = posterior(pair, np.array([1.0]), 1.0)
    expected = 1.0 / (1.0 + math.exp(-1.5))
    assert ps.weights[0] == pytest.approx(expected, rel=1e-12)
    assert ps.weights[0] == pytest.approx(0.8175744761936437, rel=1e-6)


def test_single_point_and_isotropic_gaussian_scores():
    one = DeltaMixture(points=np.array([[0.4, -0.2]]), weights=np.array([1.0]))
    ev = score_at(one, np.array([1.0, 1.0]), 0.3)
    assert np.allclose(ev.score, (one.points[0] - [1.0, 1.0]) / 0.3, rtol=1e-12)
    assert np.allclose(ev.jacobian, -np.eye(2) / 0.3, rtol=1e-12)

    h = 1.7
    g = GaussianFull(mean=np.zeros(2), covariance=h**2 * np.eye(2))
    x = np.array([0.8, -0.3])
    ev = score_at(g, x, 0.6)
    assert np.allclose(ev.score, -x / (0.6 + h**2), rtol=1e-12)


def test_extreme_sigma2_stability():
    for s2 in [1e-12, 1e12]:
        ev = score_at(FIVE, np.array([50.0, -80.0]), s2)
        assert np.all(np.isfinite(ev.score))
        assert np.all(np.isfinite(ev.jacobian))
    ps = posterior(FIVE, np.array([0.0, 0.0]), 1e12)
    assert np.allclose(ps.weights, FIVE.weights, atol=1e-6)


def test_posterior_batch_matches_single():
    rng = np.random.default_rng(7)
    xs = rng.normal(size=(40, 2))
    s2 = 0.6
    mean_b, trace_b, w_b = posterior_batch(FIVE, xs, s2)
    sc_b = score_batch(FIVE, xs, s2)
    for i in range(40):
        ps = posterior(FIVE, xs[i], s2)
        assert np.allclose(mean_b[i], ps.mean, rtol=1e-12)
        assert trace_b[i] == pytest.approx(ps.trace_var, rel=1e-10, abs=1e-300)
        assert np.allclose(w_b[i], ps.weights, rtol=1e-10)
        assert np.allclose(sc_b[i], score_at(FIVE, xs[i], s2).score, rtol=1e-12)


def test_exact_noise_predictor_matches_score_relation():
    fn = exact_noise_predictor(FIVE)
    rng = np.random.default_rng(8)
    xs = rng.normal(size=(20, 2))
    s2 = 0.9
    zhat = fn(xs, s2)
    expected = -math.sqrt(s2) * score_batch(FIVE, xs, s2)
    assert np.allclose(zhat, expected, rtol=1e-12)


def gauss_hermite_e_trvar(sigma2, n_nodes=120):
    # E[trace var(y|x)] for the symmetric pair via exact quadrature over
    # x ~ 0.5 N(1, sigma2) + 0.5 N(-1, sigma2); trvar(x) = 1 - tanh(x/s2)^2
    # ... within each posterior: var = 1 - m^2 with m = tanh(x/sigma2)
    t, w = roots_hermite(n_nodes)
    sig = math.sqrt(sigma2)
    total = 0.0
    for mu in (1.0, -1.0):
        x = mu + math.sqrt(2.0) * sig * t
        m = np.tanh(x / sigma2)
        total += 0.5 * np.sum(w * (1.0 - m**2)) / math.sqrt(math.pi)
    return total


def test_loss_decomposition_exact_candidate():
    s2 = 0.7
    dec = denoising_loss_decomposition(TWO, s2, exact_noise_predictor(TWO), 60000, seed=21)
    assert dec.l_sm <= 1e-10
    assert dec.l_d == pytest.approx(dec.c_t_z_units, abs=1e-12)
    assert abs(dec.residual) <= 4 * max(dec.residual_stderr, 1e-15)
    # irreducible floor equals E[trvar]/sigma2, quadrature oracle
    oracle = gauss_hermite_e_trvar(s2) / s2
    assert abs(dec.c_t_z_units - oracle) <= 4 * dec.c_t_stderr


def test_loss_decomposition_perturbed_candidate():
    base = exact_noise_predictor(TWO)

    def cand(x, s2):
        return base(x, s2) + 0.07 * np.cos(2.0 * x)

    dec = denoising_loss_decomposition(TWO, 0.7, cand, 60000, seed=22)
    assert dec.l_sm > 1e-4
    # orthogonality: l_d = l_sm + c_t up to Monte Carlo error, paired residual
    assert abs(dec.residual) <= 4 * dec.residual_stderr
    assert abs(dec.l_d - dec.l_sm - dec.c_t_z_units) <= 4 * dec.residual_stderr


def test_loss_decomposition_zero_candidate():
    # a zero predictor leaves the full noise: l_d = E||z||^2 = D
    dec = denoising_loss_decomposition(
        FIVE, 0.8, lambda x, s2: np.zeros_like(x), 40000, seed=23
    )
    assert abs(dec.l_d - FIVE.dim) <= 4 * dec.l_d_stderr


def test_loss_decomposition_nonfinite_candidate_raises():
    def bad(x, s2):
        out = np.array(x, copy=True)
        out[0] = np.nan
        return out

    with pytest.raises(EvaluationError):
        denoising_loss_decomposition(TWO, 0.5, bad, 1000, seed=0)


def test_score_validation():
    with pytest.raises(ValidationError):
        score_at(TWO, np.array([0.0, 0.0]), 0.5)
    with pytest.raises(ValidationError):
        score_at(TWO, np.array([0.0]), -1.0)
