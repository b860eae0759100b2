import numpy as np
import pytest

from kahlerlab.continuation import solve_at
from kahlerlab.functionals import (KINDS, FunctionalKind, PotentialPath, convexity_second_difference,
                                   criticality_residual, energy_scan, functional_gradient, functional_profile,
                                   functional_value, iota_second_derivative, matching_parameter)
from kahlerlab.kahler import KahlerBackground, assemble_metric
from kahlerlab.lattice import TorusGrid
from kahlerlab.sphere import orbit_chart_potential, orbit_chart_velocity


@pytest.fixture(scope="module")
def torus():
    g = TorusGrid(1, 16)
    x, y = g.coords
    bg = KahlerBackground(g, 0.2 * np.cos(x))
    phi = 0.1 * np.sin(x) * np.cos(y) + 0.05 * np.cos(2 * y)
    return bg, phi


def test_kind_validation():
    assert len(KINDS) == 6
    with pytest.raises(ValueError):
        FunctionalKind("Mabuchi")
    with pytest.raises(ValueError):
        FunctionalKind("E_t")
    with pytest.raises(ValueError):
        FunctionalKind("E_t", t=1.5)


def test_path_validation(torus):
    bg, phi = torus
    with pytest.raises(ValueError):
        PotentialPath(bg, [0, 0.5, 1], [phi] * 3)
    with pytest.raises(ValueError):
        PotentialPath(bg, [0, 0.1, 0.3, 0.2, 1], [phi] * 5)
    with pytest.raises(ValueError):
        PotentialPath(bg, np.linspace(0, 1, 5), [phi] * 4)


def test_fd_velocities_exact_on_quartic_paths(torus):
    bg, phi = torus
    path = PotentialPath.from_function(bg, lambda s: (s ** 4 - s) * phi, samples=9)
    for s, d in zip(path.s, path.phidots):
        assert np.max(np.abs(d - (4 * s ** 3 - 1) * phi)) < 1e-12


def test_aubin_functional_closed_form(torus):
    # for n = 1 the integral of phi along a straight path is the average of the end-point pairings
    bg, phi = torus
    value = functional_value(FunctionalKind("I"), PotentialPath.straight(bg, np.zeros_like(phi), phi, 33))
    s0, s1 = assemble_metric(bg, np.zeros_like(phi)), assemble_metric(bg, phi)
    expected = 0.5 * (complex(s0.integrate(phi)).real + complex(s1.integrate(phi)).real)
    assert value == pytest.approx(expected, abs=1e-12)


def test_path_independence_and_reversal(torus):
    bg, phi = torus
    g = bg.grid
    bump = 0.05 * np.cos(g.coords[0] - g.coords[1])
    bent = PotentialPath.from_function(bg, lambda s: s * phi + np.sin(np.pi * s) * bump,
                                       lambda s: phi + np.pi * np.cos(np.pi * s) * bump, 129)
    straight = PotentialPath.straight(bg, np.zeros_like(phi), phi, 129)
    for tag in ("J_chi", "iota", "K-energy"):
        kind = FunctionalKind(tag)
        a, b = functional_value(kind, straight), functional_value(kind, bent)
        assert a == pytest.approx(b, abs=1e-8)
        assert functional_value(kind, straight.reversed()) == pytest.approx(-a, abs=1e-12)


def test_profile_ends_at_value(torus):
    bg, phi = torus
    path = PotentialPath.straight(bg, np.zeros_like(phi), phi, 17)
    kind = FunctionalKind("iota")
    prof = functional_profile(kind, path)
    assert prof[0] == 0.0
    assert prof[-1] == pytest.approx(functional_value(kind, path), abs=1e-15)


def test_gradient_matches_finite_difference(torus):
    bg, phi = torus
    g = bg.grid
    delta = 0.1 * np.cos(g.coords[1] + g.coords[0])
    zero = np.zeros_like(phi)
    for tag in ("I", "J_chi", "iota", "K-energy"):
        kind = FunctionalKind(tag)
        h = 1e-3
        vp = functional_value(kind, PotentialPath.straight(bg, zero, phi + h * delta, 33))
        vm = functional_value(kind, PotentialPath.straight(bg, zero, phi - h * delta, 33))
        s = assemble_metric(bg, phi)
        exact = complex(s.integrate(functional_gradient(kind, s) * delta)).real
        assert (vp - vm) / (2 * h) == pytest.approx(exact, abs=1e-7)


def test_affine_combination(torus):
    bg, phi = torus
    path = PotentialPath.straight(bg, np.zeros_like(phi), phi, 17)
    t = 0.3
    et = functional_value(FunctionalKind("E_t", t=t), path)
    k = functional_value(FunctionalKind("K-energy"), path)
    i = functional_value(FunctionalKind("iota"), path)
    assert et == pytest.approx(t * k + (1 - t) * i, abs=1e-12)
    assert functional_value(FunctionalKind("E_K"), path) == pytest.approx(k, abs=1e-15)


def test_iota_second_variation_matches_profile(torus):
    bg, phi = torus
    path = PotentialPath.from_function(bg, lambda s: s * phi + 0.3 * s ** 2 * phi, lambda s: (1 + 0.6 * s) * phi, 65)
    prof = functional_profile(FunctionalKind("iota"), path)
    j = 32
    h = path.s[1] - path.s[0]
    fd = (prof[j + 1] - 2 * prof[j] + prof[j - 1]) / h ** 2
    exact = iota_second_derivative(path, j, phiddot=0.6 * phi)
    assert fd == pytest.approx(exact, abs=1e-4)


def test_matching_parameter(cp1_setup):
    assert matching_parameter(1.0) == 1.0
    assert matching_parameter(0.5) == pytest.approx(2 / 3)
    problem, phi1, kb, _ = cp1_setup
    t = 0.95
    rec = solve_at(problem, kb, t, phi1)
    s = problem.state(np.asarray(rec.potential, dtype=problem.dtype))
    assert criticality_residual(FunctionalKind("E_t", t=matching_parameter(t)), s) < 1e-9
    assert criticality_residual(FunctionalKind("E_t", t=t), s) > 1e-6


def test_orbit_scan_is_convex(cp1_setup):
    problem, _, kb, c_star = cp1_setup
    g = problem.grid
    psi = problem.bg.psi_ref
    path = PotentialPath.from_function(problem, lambda s: orbit_chart_potential(g, c_star - 1 + 2 * s) - psi,
                                       lambda s: 2 * orbit_chart_velocity(g, c_star - 1 + 2 * s), 33)
    scan = energy_scan(path, 0.9)
    assert scan.shape == (33, 7)
    assert np.max(np.abs(scan[:, 4])) < 1e-9   # round metrics along the orbit: K-energy is flat
    assert np.all(convexity_second_difference(scan, 0.9) > 0)
    assert np.argmin(scan[:, 3]) == 16


def test_cocycle(torus):
    bg, phi = torus
    g = bg.grid
    mid = 0.5 * phi + 0.04 * np.cos(g.coords[0] + g.coords[1])
    zero = np.zeros_like(phi)
    for tag in ("I", "J_chi", "iota", "K-energy"):
        kind = FunctionalKind(tag)
        ab = functional_value(kind, PotentialPath.straight(bg, zero, mid, 65))
        bc = functional_value(kind, PotentialPath.straight(bg, mid, phi, 65))
        ac = functional_value(kind, PotentialPath.straight(bg, zero, phi, 65))
        assert ab + bc == pytest.approx(ac, abs=1e-8)


def test_iota_hessian_second_term_nonnegative(torus, rng):
    from conftest import band_limited
    from kahlerlab.functionals import iota_hessian_second_term
    bg, phi = torus
    for _ in range(5):
        d = 0.2 * band_limited(bg.grid, rng)
        path = PotentialPath.straight(bg, phi, phi + d, 5)
        for j in range(5):
            assert iota_hessian_second_term(path, j) >= -1e-10
