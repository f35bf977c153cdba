import json
import math

import numpy as np
import pytest
from scipy import integrate

from scorelab.errors import DomainError, ParseError, ValidationError
from scorelab.model import (
    DeltaMixture,
    GaussianFull,
    GaussianSubspace,
    axis_subspace_basis,
    constant_schedule,
    data_mean,
    data_scale,
    default_schedule,
    dim,
    draw_data,
    geometric_schedule,
    load_pointcloud,
    random_subspace_basis,
    sample_forward,
    sample_forward_batch,
    table_schedule,
)
from scorelab.rng import substream


def test_constant_schedule_closed_forms():
    sch = constant_schedule(nu=1.5)
    for t in [1e-6, 0.3, 2.0, 50.0]:
        assert sch.nu2(t) == pytest.approx(2.25, rel=1e-14)
        assert sch.sigma2(t) == pytest.approx(2.25 * t, rel=1e-14)
        assert sch.t_of_sigma2(sch.sigma2(t)) == pytest.approx(t, rel=1e-10)


def test_geometric_schedule_endpoints_and_inverse():
    # accumulated variance starts at zero and reaches sigma_max^2 - sigma_min^2
    for t_max in [1.0, 2.5]:
        sch = geometric_schedule(sigma_min=0.01, sigma_max=30.0, t_max=t_max)
        assert sch.sigma2(0.0) == 0.0
        assert sch.sigma2(t_max) == pytest.approx(30.0**2 - 0.01**2, rel=1e-12)
        for t in [0.1 * t_max, 0.37 * t_max, 0.9 * t_max]:
            assert sch.t_of_sigma2(sch.sigma2(t)) == pytest.approx(t, rel=1e-9)


def test_schedule_nu2_is_derivative_of_sigma2():
    # dsigma2/dt must equal nu2 for every schedule kind
    rng = np.random.default_rng(0)
    tables = table_schedule([0.0, 0.5, 1.2, 3.0], [1.0, 4.0, 0.25, 2.0])
    for sch, t_hi in [
        (constant_schedule(nu=0.7), 100.0),
        (geometric_schedule(0.05, 20.0, t_max=2.0), 2.0),
        (tables, 3.0),
    ]:
        for t in rng.uniform(0.01, 0.99 * t_hi, size=25):
            d = 1e-6 * t
            fd = (sch.sigma2(t + d) - sch.sigma2(t - d)) / (2 * d)
            assert fd == pytest.approx(sch.nu2(t), rel=2e-5, abs=1e-12)


def test_schedule_sigma2_matches_quadrature():
    tables = table_schedule([0.0, 0.5, 1.2, 3.0], [1.0, 4.0, 0.25, 2.0])
    for sch, ts in [
        (geometric_schedule(0.05, 20.0, t_max=2.0), [0.3, 1.1, 1.9]),
        (tables, [0.2, 0.8, 2.5]),
    ]:
        for t in ts:
            q, _ = integrate.quad(sch.nu2, 0.0, t, limit=400)
            assert sch.sigma2(t) == pytest.approx(q, rel=1e-8)


def test_schedule_domain_errors():
    sch = geometric_schedule(0.1, 10.0, t_max=1.0)
    with pytest.raises(DomainError):
        sch.sigma2(-0.1)
    with pytest.raises(DomainError):
        sch.sigma2(1.5)
    with pytest.raises(DomainError):
        sch.t_of_sigma2(1e9)
    with pytest.raises(ValidationError):
        geometric_schedule(10.0, 0.1)
    with pytest.raises(ValidationError):
        table_schedule([0.0, 1.0], [1.0, -2.0])
    with pytest.raises(ValidationError):
        table_schedule([0.5, 0.2], [1.0, 1.0])


def test_default_schedule_is_unit_constant():
    sch = default_schedule()
    assert sch.nu2(3.0) == 1.0
    assert sch.sigma2(3.0) == 3.0


def test_delta_mixture_validation():
    with pytest.raises(ValidationError):
        DeltaMixture(points=np.array([[1.0], [1.0]]))
    with pytest.raises(ValidationError):
        DeltaMixture(points=np.array([[1.0], [-1.0]]), weights=np.array([0.5]))
    with pytest.raises(ValidationError):
        DeltaMixture(points=np.array([[1.0], [-1.0]]), weights=np.array([0.7, -0.3]))
    m = DeltaMixture(points=np.array([[1.0], [-1.0]]))
    assert np.allclose(m.weights, [0.5, 0.5])


def test_gaussian_validation():
    with pytest.raises(ValidationError):
        GaussianFull(mean=np.zeros(2), covariance=np.array([[1.0, 0.2], [0.3, 1.0]]))
    with pytest.raises(ValidationError):
        GaussianFull(mean=np.zeros(2), covariance=np.array([[1.0, 2.0], [2.0, 1.0]]))
    with pytest.raises(ValidationError):
        GaussianSubspace(basis=np.eye(4)[:, :2] * 2.0, h=1.0)
    with pytest.raises(ValidationError):
        GaussianSubspace(basis=axis_subspace_basis(4, 2), h=-1.0)


def test_bases_orthonormal_and_deterministic():
    b = axis_subspace_basis(6, 2)
    assert np.allclose(b.T @ b, np.eye(2))
    r1 = random_subspace_basis(6, 3, seed=4)
    r2 = random_subspace_basis(6, 3, seed=4)
    assert np.array_equal(r1, r2)
    assert np.allclose(r1.T @ r1, np.eye(3), atol=1e-12)
    assert not np.allclose(r1, random_subspace_basis(6, 3, seed=5))


def test_dim_scale_mean():
    m = DeltaMixture(points=np.array([[2.0, 0.0], [0.0, -2.0]]), weights=np.array([0.25, 0.75]))
    assert dim(m) == 2
    assert np.allclose(data_mean(m), [0.5, -1.5])
    assert data_scale(m) > 0
    g = GaussianSubspace(basis=axis_subspace_basis(5, 2), h=3.0)
    assert dim(g) == 5
    assert data_scale(g) == pytest.approx(3.0)


def test_draw_data_moments():
    rng = substream(11, "test-draw")
    m = DeltaMixture(points=np.array([[1.0], [-1.0]]), weights=np.array([0.3, 0.7]))
    y = draw_data(m, rng, 200000)
    # mean -0.4, sample stderr ~ sqrt(1-0.16)/sqrt(n)
    assert abs(float(y.mean()) + 0.4) < 4 * math.sqrt(0.84 / 200000)

    g = GaussianFull(mean=np.array([1.0, -2.0]), covariance=np.array([[2.0, 0.5], [0.5, 1.0]]))
    yg = draw_data(g, rng, 200000)
    assert np.allclose(yg.mean(axis=0), [1.0, -2.0], atol=0.02)
    assert np.allclose(np.cov(yg.T), [[2.0, 0.5], [0.5, 1.0]], atol=0.05)

    s = GaussianSubspace(basis=axis_subspace_basis(4, 2), h=5.0)
    ys = draw_data(s, rng, 200000)
    v = ys.var(axis=0)
    assert np.allclose(v[:2], 25.0, rtol=0.05)
    assert np.allclose(v[2:], 0.0, atol=1e-12)


def test_sample_forward_consistency():
    m = DeltaMixture(points=np.array([[1.0], [-1.0]]))
    sch = constant_schedule(nu=1.0)
    s = sample_forward(m, sch, t=2.5, seed=3)
    assert s.sigma2 == pytest.approx(2.5)
    assert np.allclose(s.x, s.y + math.sqrt(s.sigma2) * s.z)
    assert sample_forward(m, sch, t=2.5, seed=3).x == pytest.approx(s.x)


def test_sample_forward_batch_deterministic_across_threads():
    m = DeltaMixture(points=np.array([[1.0, 0.0], [-1.0, 0.5]]))
    sch = constant_schedule(nu=1.0)
    a = sample_forward_batch(m, sch, t=1.2, n=5000, seed=9, threads=1)
    b = sample_forward_batch(m, sch, t=1.2, n=5000, seed=9, threads=3)
    for u, v in zip(a, b):
        assert np.array_equal(u, v)
    c = sample_forward_batch(m, sch, t=1.2, n=5000, seed=10, threads=1)
    assert not np.array_equal(a[0], c[0])


def test_load_pointcloud_csv(tmp_path):
    p = tmp_path / "cloud.csv"
    p.write_text("x1,x2\n1.0,2.0\n-1.0,0.5\n")
    m = load_pointcloud(p)
    assert m.points.shape == (2, 2)
    assert np.allclose(m.weights, 0.5)

    pw = tmp_path / "cloudw.csv"
    pw.write_text("x1,x2,weight\n1.0,2.0,3.0\n-1.0,0.5,1.0\n")
    mw = load_pointcloud(pw)
    assert np.allclose(mw.weights, [0.75, 0.25])


def test_load_pointcloud_json(tmp_path):
    p = tmp_path / "cloud.json"
    p.write_text(json.dumps({"points": [[1.0], [-1.0]], "weights": [0.25, 0.75]}))
    m = load_pointcloud(p)
    assert np.allclose(m.weights, [0.25, 0.75])


def test_load_pointcloud_parse_error_carries_row(tmp_path):
    # row index counts data rows from zero, after any header
    p = tmp_path / "bad.csv"
    p.write_text("x1,x2\n1.0,2.0\noops,0.5\n")
    with pytest.raises(ParseError) as exc:
        load_pointcloud(p)
    assert exc.value.row == 1
    q = tmp_path / "ragged.csv"
    q.write_text("1.0,2.0\n1.0\n")
    with pytest.raises(ParseError) as exc2:
        load_pointcloud(q)
    assert exc2.value.row == 1
