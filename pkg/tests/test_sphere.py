import json

import numpy as np
import pytest
from numpy.polynomial import chebyshev as C

from kahlerlab.cheb import ChebGrid
from kahlerlab.errors import GridMismatch, NonPositiveMetric
from kahlerlab.kahler import commutator_residual, leibniz_residual
from kahlerlab.sphere import (SphereBackground, SphereMetric, minimize_iota_chart, operator_matrix,
                              orbit_chart_potential, orbit_chart_velocity, orbit_iota_slope, spectrum)
from kahlerlab.toric import MomentGrid, ToricPotential, abreu_scalar


def _f(a):
    return np.asarray(a, dtype=float)


def fs_state(K):
    g = MomentGrid(K)
    return SphereMetric(SphereBackground(g), np.zeros(K))


def lorentzian(x, c, w):
    return 1.0 / (1.0 + ((x - c) / w) ** 2)


def test_cheb_calculus_exact_on_polynomials():
    g = ChebGrid(24)
    c = np.arange(1.0, 11.0)
    vals = C.chebval(g.x, c)
    assert np.max(np.abs(_f(g.D @ vals - C.chebval(g.x, C.chebder(c))))) < 1e-14
    assert float(g.integrate(vals)) == pytest.approx(float(C.chebval(1, C.chebint(c)) - C.chebval(-1, C.chebint(c))),
                                                     abs=1e-15 * 50)
    assert np.max(np.abs(_f(g.coefficients(vals)[:10]) - c)) < 1e-13
    assert np.max(np.abs(_f(g.from_coefficients(c) - vals))) < 1e-14
    assert float(g.integrate(np.ones(24))) == pytest.approx(2.0, abs=1e-17)
    with pytest.raises(ValueError):
        ChebGrid(3)


def test_round_metric_is_constant_curvature():
    s = fs_state(48)
    assert np.max(np.abs(_f(s.lam) - 1)) == 0.0
    assert np.max(np.abs(_f(s.R) - 2)) < 1e-15
    assert s.volume() == pytest.approx(2.0, abs=1e-15)
    assert s.r_bar_discrete() == pytest.approx(2.0, abs=1e-15)


def test_orbit_potential_gives_round_metric_with_moved_moment_map():
    g = MomentGrid(64)
    bg = SphereBackground(g)
    c = 0.7
    s = SphereMetric(bg, orbit_chart_potential(g, c))
    assert np.max(np.abs(_f(s.R) - 2)) < 1e-10
    assert s.volume() == pytest.approx(2.0, abs=1e-12)
    assert np.max(np.abs(_f(s.moment_map() - orbit_chart_velocity(g, c)))) < 1e-12
    # the velocity is the c-derivative of the potential
    h = 1e-4
    fd = (orbit_chart_potential(g, c + h) - orbit_chart_potential(g, c - h)) / (2 * h)
    assert np.max(np.abs(_f(fd - orbit_chart_velocity(g, c)))) < 1e-7


def test_chart_curvature_matches_abreu_formula():
    g = MomentGrid(96)
    u = ToricPotential.from_function(g, lambda x: 0.1 * x ** 3 + 0.05 * x ** 2)
    s = SphereMetric(SphereBackground.from_toric(u), np.zeros(g.K))
    S_at = g.interpolate(abreu_scalar(u), s.moment_map())
    assert np.max(np.abs(_f(s.R - S_at))) < 1e-9
    assert s.volume() == pytest.approx(2.0, abs=1e-12)


def test_laplacian_integration_by_parts():
    g = MomentGrid(48)
    s = SphereMetric(SphereBackground(g, 0.1 * g.x ** 3 * g.rho), 0.05 * np.cos(2 * g.x))
    f, h = np.exp(g.x), np.sin(3 * g.x)
    lhs = s.integrate(f * s.laplacian(h))
    rhs = -s.integrate(s.grad_pairing(f, h))
    assert float(lhs) == pytest.approx(float(rhs), abs=1e-12)
    assert abs(float(s.integrate(s.laplacian(f)))) < 1e-12


def test_lichnerowicz_symmetry_and_positivity():
    g = MomentGrid(96)
    s = SphereMetric(SphereBackground(g, 0.1 * g.x ** 3 * g.rho), np.zeros(g.K))
    f, h = np.exp(0.5 * g.x), np.cos(2 * g.x)
    a = float(s.integrate(s.lichnerowicz(f) * h))
    b = float(s.integrate(f * s.lichnerowicz(h)))
    assert a == pytest.approx(b, rel=1e-12)
    lhs = float(s.integrate(s.lichnerowicz(f) * f))
    rhs = float(s.integrate(s.tensor_norm2(s.l_operator(f))))
    assert lhs == pytest.approx(rhs, rel=1e-9)
    assert lhs > 0


def test_round_metric_kernel_is_constants_and_moment_map():
    s = fs_state(48)
    assert s.sup(s.lichnerowicz(np.ones(48))) < 1e-12
    assert s.sup(s.lichnerowicz(s.grid.x)) < 1e-10
    ev = np.abs(spectrum(s))
    eps = s.kernel_threshold()
    assert np.sum(ev <= eps) == 2 and ev[2] > 10 * eps
    M = operator_matrix(s)
    assert M.shape == (32, 32)


def test_leibniz_identity_round_metric():
    s = fs_state(64)
    rng = np.random.default_rng(5)
    for _ in range(3):
        xi = lorentzian(s.grid.x, rng.uniform(-0.5, 0.5), rng.uniform(0.8, 1.0))
        assert leibniz_residual(s, s.grid.x, xi) < 1e-9


def test_commutator_mode_one_round_metric():
    s = fs_state(32)
    q = np.cos(2 * s.grid.x) + 0.3 * s.grid.x ** 2
    assert commutator_residual(s, q, k=1) < 1e-6
    assert commutator_residual(s, q, k=0) < 1e-6


def test_mode_k_laplacian_matches_polar_oracle():
    # rho^{|k|/2} q e^{ik theta} with q = 1 is a spherical harmonic for |k| = 1 at the round metric
    s = fs_state(48)
    one = np.ones(48)
    assert np.max(np.abs(_f(s.laplacian(one, k=1) + 2 * one))) < 1e-12
    assert np.max(np.abs(_f(s.laplacian(one, k=2) + 6 * one))) < 1e-12


def test_minimize_iota_chart_recovers_orbit_parameter():
    g = MomentGrid(48)
    bg = SphereBackground(g, orbit_chart_potential(g, 0.3))
    c, phi1 = minimize_iota_chart(bg)
    assert c == pytest.approx(0.3, abs=1e-12)
    assert np.max(np.abs(_f(phi1))) < 1e-12


def test_minimize_iota_chart_regression():
    g = MomentGrid(48)
    bg = SphereBackground.from_toric(ToricPotential.from_function(g, lambda x: 0.1 * x ** 3))
    c, phi1 = minimize_iota_chart(bg)
    assert c == pytest.approx(-0.0601710626551, abs=1e-10)
    assert abs(orbit_iota_slope(bg, c)) < 1e-13
    s = SphereMetric(bg, phi1)
    assert np.max(np.abs(_f(s.R) - 2)) < 1e-10


def test_errors_and_serialization():
    g = MomentGrid(32)
    bg = SphereBackground(g)
    with pytest.raises(GridMismatch):
        SphereMetric(bg, np.zeros(31))
    with pytest.raises(NonPositiveMetric):
        SphereMetric(bg, -2.0 * g.x ** 2)
    with pytest.raises(NonPositiveMetric):
        SphereBackground(g, -2.0 * g.x ** 2)
    s = SphereMetric(bg, 0.1 * g.x ** 2)
    d = json.loads(s.to_json())
    assert d["background_hash"] == bg.hash()
    assert len(d["phi"]) == 32 and d["min_metric_eigenvalue"] > 0
    assert SphereBackground(g, 0.1 * g.x).hash() != bg.hash()


def test_alias_mode_is_a_pure_gauge():
    g = MomentGrid(48)
    bg = SphereBackground.from_toric(ToricPotential.from_function(g, lambda x: 0.1 * x ** 3))
    z = g.alias_mode
    assert np.max(np.abs(_f(bg.lap_fs(z)))) < 1e-12
    assert abs(float(g.integrate(z))) < 1e-15
    phi = 0.05 * np.cos(2 * g.x)
    a, b = SphereMetric(bg, phi), SphereMetric(bg, phi + 0.01 * z)
    assert np.max(np.abs(_f(a.lam - b.lam))) < 1e-13
