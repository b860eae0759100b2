import numpy as np
import pytest
import sympy as sp
from scipy.optimize import brentq

from kahlerlab.errors import NonConvexPotential, NotExtremal
from kahlerlab.toric import (MomentGrid, ToricPotential, ToricTwist, abreu_scalar, eigensplit_kernel_bar,
                             iota_on_orbit, iota_orbit_slope, legendre_double_dual, minimize_iota_on_orbit,
                             orbit_action, rho_potential, rho_via_chart, toric_commutator_residual,
                             toric_lichnerowicz, toric_spectrum, toric_trace)


def _f(a):
    return np.asarray(a, dtype=float)


@pytest.fixture(scope="module")
def g64():
    return MomentGrid(64)


def random_admissible(grid, rng, degree=6, amp=0.08):
    c = rng.normal(size=degree + 1) * amp / (1 + np.arange(degree + 1)) ** 2
    return ToricPotential(grid, np.polynomial.chebyshev.chebval(grid.x, c))


def test_moment_grid_minimum_size():
    with pytest.raises(ValueError):
        MomentGrid(16)


def test_canonical_potential_has_constant_curvature(g64):
    assert np.max(np.abs(_f(abreu_scalar(ToricPotential.canonical(g64))) - 2)) < 1e-9


def test_abreu_scalar_symbolic_oracle(g64):
    x = sp.symbols("x")
    eps = sp.Rational(1, 10)
    upp = 1 / (1 - x ** 2) + eps * sp.diff((1 - x ** 2) ** 2, x, 2)
    S = sp.lambdify(x, sp.simplify(-sp.diff(1 / upp, x, 2)), "numpy")
    u = ToricPotential.from_function(g64, lambda t: 0.1 * (1 - t ** 2) ** 2)
    expected = S(_f(g64.x))
    assert np.max(np.abs(_f(abreu_scalar(u)) - expected)) < 1e-9 * np.max(np.abs(expected))


def test_total_scalar_curvature_is_topological(g64):
    rng = np.random.default_rng(7)
    for _ in range(20):
        u = random_admissible(g64, rng)
        assert float(g64.integrate(abreu_scalar(u))) == pytest.approx(4.0, abs=1e-6)


def test_boundary_behaviour(g64):
    u = ToricPotential.from_function(g64, lambda t: 0.1 * t ** 3 + 0.05 * np.cos(t))
    vals, ders = u.boundary_values()
    assert np.max(np.abs(_f(vals))) < 1e-9
    assert _f(ders) == pytest.approx([2.0, -2.0], abs=1e-8)


def test_non_convex_potential_rejected(g64):
    with pytest.raises(NonConvexPotential):
        ToricPotential.from_function(g64, lambda t: -2.0 * t ** 2)


def test_json_round_trip(g64):
    u = ToricPotential.from_function(g64, lambda t: 0.1 * t ** 3)
    back = ToricPotential.from_json(u.to_json())
    assert back.K == u.K and np.array_equal(_f(back.h), _f(u.h))


def test_legendre_double_dual(g64):
    rng = np.random.default_rng(3)
    for _ in range(3):
        u = random_admissible(g64, rng)
        assert np.max(np.abs(_f(legendre_double_dual(u).h - u.h))) < 1e-9


def test_trace_of_self_is_one(g64):
    u = ToricPotential.from_function(g64, lambda t: 0.1 * t ** 3)
    assert np.max(np.abs(_f(toric_trace(u, u)) - 1)) < 1e-12


def test_trace_along_orbit_matches_s_variable_oracle(g64):
    # with f_v(s) = f_u(s + c) the trace is Phi_u(s + c) / Phi_u(s)
    c = 0.4
    u0 = ToricPotential.canonical(g64)
    x = _f(g64.x)
    expected = 1 / np.cosh(np.arctanh(x) + c) ** 2 / (1 - x ** 2)
    assert np.max(np.abs(_f(toric_trace(u0, orbit_action(u0, c))) - expected)) < 1e-10
    u = ToricPotential.from_function(g64, lambda t: 0.1 * t ** 3)
    up = lambda y: np.arctanh(y) + 0.3 * y ** 2   # noqa: E731
    upp = lambda y: 1 / (1 - y ** 2) + 0.6 * y     # noqa: E731
    ys = np.array([brentq(lambda y: up(y) - up(xi) - c, -1 + 1e-15, 1 - 1e-15, xtol=1e-16) for xi in x])
    expected = upp(x) / upp(ys)
    tr = _f(toric_trace(u, orbit_action(u, c)))
    assert np.max(np.abs(tr - expected)) < 1e-9
    assert np.all(tr > 0)
    # in dimension one the trace integrates to the volume of the other metric
    assert float(g64.integrate(toric_trace(u, orbit_action(u, c)))) == pytest.approx(2.0, abs=1e-10)


def test_lichnerowicz_kernel_and_oracle():
    g = MomentGrid(128)
    u = ToricPotential.from_function(g, lambda t: 0.1 * t ** 3 + 0.02 * np.sin(2 * t))
    assert np.max(np.abs(_f(toric_lichnerowicz(u, np.ones(g.K))))) < 1e-8
    assert np.max(np.abs(_f(toric_lichnerowicz(u, g.x)))) < 1e-8
    # on invariant functions D f = (Phi^2 f'')''; at u0 with f = x^2 this is 24 x^2 - 8
    u0 = ToricPotential.canonical(g)
    assert np.max(np.abs(_f(toric_lichnerowicz(u0, g.x ** 2)) - (24 * _f(g.x) ** 2 - 8))) < 1e-8
    f = np.exp(np.sin(3 * g.x))
    oracle = g.D @ (g.D @ (u.Phi ** 2 * (g.D @ (g.D @ f))))
    assert np.max(np.abs(_f(toric_lichnerowicz(u, f) - oracle))) < 1e-8 * np.max(np.abs(_f(oracle)))


def test_kernel_is_affine_functions(g64):
    rng = np.random.default_rng(11)
    for u in (ToricPotential.canonical(g64), random_admissible(g64, rng)):
        ev = np.abs(toric_spectrum(u))
        eps = 1e-8 * ev.max()
        assert np.sum(ev <= eps) == 2
        assert ev[2] > 10 * eps


def test_rho_potential(g64):
    u0 = ToricPotential.canonical(g64)
    assert np.all(_f(rho_potential(u0, ToricTwist(0.0, 0.0))) == 0)
    assert np.max(np.abs(_f(rho_potential(u0, ToricTwist(1.0, 0.0)) - g64.x))) < 1e-15
    u = ToricPotential.from_function(g64, lambda t: 0.1 * t ** 3)
    via = rho_via_chart(u, ToricTwist(1.0, 0.5))
    assert np.max(np.abs(via.imag)) == 0.0
    assert np.max(np.abs(_f(via.real - rho_potential(u, ToricTwist(1.0, 0.5))))) < 1e-8


def test_orbit_action_group_law(g64):
    u = ToricPotential.from_function(g64, lambda t: 0.1 * t ** 3)
    assert np.array_equal(_f(orbit_action(u, 0.0).h), _f(u.h))
    a = orbit_action(orbit_action(u, 0.2), 0.5)
    b = orbit_action(u, 0.7)
    assert np.max(np.abs(_f(a.h - b.h))) < 1e-9


def test_iota_convex_on_orbit(g64):
    u0 = ToricPotential.canonical(g64)
    u = orbit_action(u0, -0.4)  # off-center start
    cs = np.linspace(-0.5, 1.3, 13)
    vals = np.array([iota_on_orbit(u, u0, c) for c in cs])
    second = vals[2:] - 2 * vals[1:-1] + vals[:-2]
    assert np.all(second > 0)
    assert 0 < np.argmin(vals) < len(cs) - 1
    assert iota_orbit_slope(u, u0, 0.4) == pytest.approx(0.0, abs=1e-12)


def test_minimize_iota_on_orbit(g64):
    u0 = ToricPotential.canonical(g64)
    c, _ = minimize_iota_on_orbit(u0, u0)
    assert abs(c) < 1e-10
    c, _ = minimize_iota_on_orbit(u0, orbit_action(u0, 0.3))
    assert c == pytest.approx(0.3, abs=1e-6)
    u = ToricPotential.from_function(g64, lambda t: 0.1 * t ** 3)
    c, u_star = minimize_iota_on_orbit(u0, u)
    x = g64.x
    defect = float(g64.integrate((x - g64.integrate(x) / 2) * (toric_trace(u_star, u) - 1)))
    assert abs(defect) <= 1e-8


def test_eigensplit_at_cscK_and_orbit_points(g64):
    u0 = ToricPotential.canonical(g64)
    split = eigensplit_kernel_bar(u0)
    assert split.kernel_dims[0] == 2
    assert np.max(np.abs(split.eigenvalues[0])) < 1e-9
    split = eigensplit_kernel_bar(orbit_action(u0, 0.5), modes=(0, 1, -1))
    for k in (0, 1, -1):
        ev = split.eigenvalues[k]
        assert np.max(np.abs(ev.imag), initial=0.0) < 1e-9
        assert np.all(ev.real >= -1e-6 * split.threshold[k])


def test_eigensplit_rejects_non_extremal(g64):
    with pytest.raises(NotExtremal):
        eigensplit_kernel_bar(ToricPotential(g64, 0.1 * g64.rho ** 2))


def test_commutator_separates_extremal_from_non_extremal():
    g = MomentGrid(32)
    q = np.cos(2 * g.x) + 0.3 * g.x
    ext = toric_commutator_residual(ToricPotential.canonical(g), q, 1)
    non = toric_commutator_residual(ToricPotential(g, 0.1 * g.rho ** 2), q, 1)
    assert ext <= 1e-6
    assert non > 10 * ext
    assert non == pytest.approx(3.2e6, rel=0.05)  # regression value measured at K = 32


def test_orbit_action_keeps_curvature_data(g64):
    u = ToricPotential.from_function(g64, lambda t: 0.1 * t ** 3)
    v = orbit_action(u, 0.5)
    assert np.array_equal(_f(v.Phi), _f(u.Phi))
    assert np.max(np.abs(_f(v.hp - (g64.D @ v.h)))) < 1e-12
