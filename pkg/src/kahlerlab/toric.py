"""S^1-invariant metrics on CP^1 in symplectic (moment) coordinates.

A metric is encoded by its symplectic potential ``u = u0 + h`` on the moment
interval (-1, 1), with ``u0 = ((1-x) log(1-x) + (1+x) log(1+x)) / 2`` the
round metric.  Writing ``rho = 1 - x^2`` and ``a = h''`` the metric coefficient is
``Phi = 1/u'' = rho / (1 + rho a)``.  Functions in the Fourier mode ``e^{i k theta}``
are represented as ``rho^{|k|/2} q(x) e^{i k theta}`` and operators act on the
smooth profile ``q``.

Complex coordinate convention: ``w = (s + i theta)/2`` with ``s = u'(x)``, so that
``d_w d_wbar = d_ss + d_theta theta`` and the metric coefficient in ``w`` is Phi.
Scalar curvature is ``S = -Phi''`` (2 for the round metric); the measure
``omega`` pushes forward to ``dx``, so the volume is 2.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import chebyshev as C
from scipy.integrate import fixed_quad
from scipy.optimize import brentq, minimize_scalar

from .cheb import WORK, ChebGrid
from .errors import LineSearchDiverged, NonConvexPotential, NotExtremal, RootBracketFailure


class MomentGrid(ChebGrid):
    """Chebyshev-Gauss nodes on the moment interval."""

    def __init__(self, K: int):
        if K < 32:
            raise ValueError(f"moment grids need K >= 32, got {K}")
        super().__init__(K)

    def __repr__(self):
        return f"MomentGrid(K={self.K})"


def _log_cosh(s):
    s = np.abs(s)
    return s + np.log1p(np.exp(-2 * s)) - np.log(WORK(2))


def canonical_potential(x):
    """u0 evaluated pointwise (finite on the closed interval)."""
    x = np.asarray(x, dtype=WORK)
    out = np.zeros_like(x)
    for sgn in (-1, 1):
        y = 1 + sgn * x
        out += np.where(y > 0, y * np.log(np.where(y > 0, y, 1)), 0)
    return out / 2


class ToricPotential:
    """Symplectic potential ``u = u0 + h`` sampled on a moment grid."""

    def __init__(self, grid: ChebGrid, h=None):
        self.grid = grid
        self.K = grid.K
        h = np.zeros(grid.K, dtype=WORK) if h is None else np.asarray(h, dtype=WORK).copy()
        if h.shape != (grid.K,):
            raise ValueError(f"expected {grid.K} node values, got shape {h.shape}")
        self.h = h
        self.h.setflags(write=False)
        self.coeffs = grid.coefficients(self.h)
        self.hp = grid.D @ self.h
        self.a = grid.D @ self.hp
        conv = 1 + grid.rho * self.a
        k = int(np.argmin(conv))
        if conv[k] <= 0:
            raise NonConvexPotential(float(grid.x[k]), float(conv[k] / grid.rho[k]))
        self.psi_r = 1 / conv
        self.Phi = grid.rho * self.psi_r
        self.upp = conv / grid.rho

    @classmethod
    def canonical(cls, grid: ChebGrid) -> "ToricPotential":
        return cls(grid)

    @classmethod
    def from_function(cls, grid: ChebGrid, fn) -> "ToricPotential":
        return cls(grid, fn(grid.x))

    def with_h(self, h) -> "ToricPotential":
        return ToricPotential(self.grid, h)

    # -- pointwise evaluation off the grid ---------------------------------
    def h_at(self, y):
        return C.chebval(y, self.coeffs)

    def hp_at(self, y):
        return C.chebval(y, C.chebder(self.coeffs))

    def a_at(self, y):
        return C.chebval(y, C.chebder(self.coeffs, 2))

    def slope(self):
        """``s = u'(x)`` at the nodes."""
        return np.arctanh(self.grid.x) + self.hp

    def values(self):
        return canonical_potential(self.grid.x) + self.h

    def to_json(self) -> str:
        return json.dumps({"K": self.K, "h": [float(v) for v in self.h]})

    @classmethod
    def from_json(cls, text: str) -> "ToricPotential":
        obj = json.loads(text)
        K = int(obj["K"])
        grid = MomentGrid(K) if K >= 32 else ChebGrid(K)
        return cls(grid, obj["h"])

    def boundary_values(self):
        """``(1/u'')(-1), (1/u'')(1), (1/u'')'(-1), (1/u'')'(1)`` from the interpolant."""
        c = self.grid.coefficients(self.Phi)
        ends = np.array([-1, 1], dtype=WORK)
        return C.chebval(ends, c), C.chebval(ends, C.chebder(c))


# -- Legendre machinery ---------------------------------------------------------

def _solve_sigma(u: ToricPotential, s, tol=None, maxiter=200):
    """Solve ``sigma + h'(tanh sigma) = s`` (i.e. ``u'(tanh sigma) = s``) elementwise."""
    s = np.asarray(s, dtype=WORK)
    bound = np.sum(np.abs(C.chebder(u.coeffs))) + 1
    lo, hi = s - bound, s + bound
    sig = s - u.hp_at(np.tanh(s))
    tol = tol if tol is not None else 64 * np.finfo(WORK).eps
    for _ in range(maxiter):
        y = np.tanh(sig)
        f = sig + u.hp_at(y) - s
        lo = np.where(f < 0, sig, lo)
        hi = np.where(f > 0, sig, hi)
        fp = 1 + u.a_at(y) / np.cosh(sig) ** 2
        step = f / fp
        new = sig - step
        outside = (new <= lo) | (new >= hi) | ~np.isfinite(new)
        new = np.where(outside, (lo + hi) / 2, new)
        done = np.abs(new - sig) <= tol * (1 + np.abs(sig))
        sig = new
        if np.all(done):
            return sig
    bad = np.flatnonzero(~done)
    raise RootBracketFailure(f"Legendre root did not converge at slopes {s[bad][:3]}")


def to_chart(u: ToricPotential, grid: ChebGrid | None = None):
    """Kahler potential of ``u`` relative to the round one, at round-moment nodes.

    The returned profile ``p`` lives on nodes ``x_F = tanh s`` and satisfies
    ``f(s) = log cosh s + p(tanh s)`` with ``f`` the Legendre dual of ``u``.
    """
    grid = grid or u.grid
    s = np.arctanh(grid.x)
    sig = _solve_sigma(u, s)
    y = np.tanh(sig)
    return y * (s - sig) + _log_cosh(sig) - _log_cosh(s) - u.h_at(y)


def _chart_solve(coeffs, x, tol=None, maxiter=200):
    """Solve ``tanh sigma + sech^2 sigma p'(tanh sigma) = x`` for sigma."""
    dc = C.chebder(coeffs)
    d2c = C.chebder(coeffs, 2)
    sig = np.arctanh(x)
    tol = tol if tol is not None else 64 * np.finfo(WORK).eps
    # the left side is the round moment map composed with a monotone shift in s
    lo, hi = sig - 40, sig + 40
    for _ in range(maxiter):
        y = np.tanh(sig)
        rho = 1 / np.cosh(sig) ** 2
        f = y + rho * C.chebval(y, dc) - x
        lo = np.where(f < 0, sig, lo)
        hi = np.where(f > 0, sig, hi)
        # d/dsigma of the left side = rho * (1 + Delta_FS p) with Delta_FS p = (rho p')'
        lap = -2 * y * C.chebval(y, dc) + rho * C.chebval(y, d2c)
        fp = rho * (1 + lap)
        new = sig - f / fp
        outside = (new <= lo) | (new >= hi) | ~np.isfinite(new)
        new = np.where(outside, (lo + hi) / 2, new)
        done = np.abs(new - sig) <= tol * (1 + np.abs(sig))
        sig = new
        if np.all(done):
            return sig
    raise RootBracketFailure("inverse chart map did not converge")


def from_chart(p, grid: ChebGrid, target: ChebGrid | None = None) -> ToricPotential:
    """Symplectic potential of the metric with chart profile ``p`` (inverse of ``to_chart``)."""
    target = target or grid
    coeffs = grid.coefficients(np.asarray(p, dtype=WORK))
    x = target.x
    sig = _chart_solve(coeffs, x)
    sig0 = np.arctanh(x)
    h = x * (sig - sig0) - _log_cosh(sig) + _log_cosh(sig0) - C.chebval(np.tanh(sig), coeffs)
    return ToricPotential(target, h)


def legendre_double_dual(u: ToricPotential) -> ToricPotential:
    return from_chart(to_chart(u), u.grid)


# -- curvature and operators --------------------------------------------------------

def abreu_scalar(u: ToricPotential):
    """Scalar curvature ``S = -(1/u'')''``."""
    return -(u.grid.D @ (u.grid.D @ u.Phi))


def _mode(k):
    return abs(k) / 2


def _columnwise(op):
    def wrapped(u, f, *args, **kw):
        f = np.asarray(f, dtype=np.result_type(f, WORK))
        if f.ndim == 2:
            return np.stack([op(u, col, *args, **kw) for col in f.T], axis=1)
        return op(u, f, *args, **kw)
    wrapped.__name__ = op.__name__
    wrapped.__doc__ = op.__doc__
    return wrapped


@_columnwise
def toric_laplacian(u: ToricPotential, q, k: int = 0):
    """Laplacian on the profile of a mode-k function."""
    g = u.grid
    m = _mode(k)
    dq = g.D @ q
    if m == 0:
        return g.D @ (u.Phi * dq)
    W = u.psi_r * (g.rho * dq - 2 * m * g.x * q)
    return (g.D @ W - 2 * m * g.x * u.psi_r * dq
            - 4 * m * m * u.psi_r * (1 + 2 * u.a + g.rho * u.a ** 2) * q)


def _ws(u: ToricPotential, q, k):
    g = u.grid
    m = _mode(k)
    return u.psi_r * (g.rho * (g.D @ q) - 2 * m * g.x * q)


@_columnwise
def toric_lichnerowicz(u: ToricPotential, f, k: int = 0, conjugate: bool = False):
    """Lichnerowicz operator (or its conjugate) on the profile of a mode-k function."""
    g = u.grid
    S = abreu_scalar(u)
    dS = g.D @ S
    lap = toric_laplacian(u, f, k)
    sign = 1 if conjugate else -1
    return toric_laplacian(u, lap, k) + S * lap + dS * (_ws(u, f, k) + sign * k * f)


def toric_lichnerowicz_bar(u: ToricPotential, f, k: int = 0):
    return toric_lichnerowicz(u, f, k, conjugate=True)


def mode_values(grid: ChebGrid, q, k: int):
    """Node values of ``rho^{|k|/2} q`` (the theta factor omitted)."""
    return grid.rho ** _mode(k) * q


def toric_commutator_residual(u: ToricPotential, f, k: int = 1) -> float:
    """Sup norm of ``[D, Dbar] f`` for ``f = rho^{|k|/2} q e^{i k theta}``.

    This composes two fourth-order operators, so rounding grows like
    ``K**8 eps``; moderate grids (K around 32) keep it below 1e-7.
    """
    diff = (toric_lichnerowicz(u, toric_lichnerowicz_bar(u, f, k), k)
            - toric_lichnerowicz_bar(u, toric_lichnerowicz(u, f, k), k))
    return float(np.max(np.abs(mode_values(u.grid, diff, k))))


def toric_operator_matrix(u: ToricPotential, k: int = 0, conjugate: bool = False,
                          modes: int | None = None) -> np.ndarray:
    """Galerkin matrix of D on the Chebyshev modes ``T_0 .. T_{modes-1}``.

    Restricting to the lower two thirds of the modes (the default) avoids the
    aliased top modes, which the collocation operator maps to lower degree
    and which would otherwise show up as spurious zero eigenvalues.
    """
    g = u.grid
    M = (2 * g.K) // 3 if modes is None else modes
    basis = C.chebvander(g.x, M - 1)
    image = toric_lichnerowicz(u, basis, k, conjugate)
    return g.coefficients(image)[:M]


def toric_spectrum(u: ToricPotential, k: int = 0, modes: int | None = None) -> np.ndarray:
    """Eigenvalues of the Galerkin matrix of D on mode k, sorted by modulus."""
    ev = np.linalg.eigvals(toric_operator_matrix(u, k, modes=modes).astype(complex))
    return ev[np.argsort(np.abs(ev))]


# -- trace, twist, orbit ----------------------------------------------------------

def toric_trace(u: ToricPotential, v: ToricPotential):
    """``tr_{g_u} omega_v`` as a profile on the moment nodes of ``u``.

    The matching point ``y(x)`` solves ``v'(y) = u'(x)``; the ratio
    ``u''(x)/v''(y)`` is evaluated as ``Phi_v(y)/Phi_u(x)`` which stays finite
    at the poles.
    """
    s = u.slope()
    sig = _solve_sigma(v, s)
    y = np.tanh(sig)
    rho_y = 1 / np.cosh(sig) ** 2
    phi_v = rho_y / (1 + rho_y * v.a_at(y))
    return phi_v / u.Phi


@dataclass(frozen=True)
class ToricTwist:
    """Holomorphy potential ``a x + b`` of a vector field generating the rotation."""

    a: float = 0.0
    b: float = 0.0

    @property
    def is_zero(self) -> bool:
        return self.a == 0.0


def rho_potential(u: ToricPotential, X: ToricTwist):
    """Normalized holomorphy potential in moment coordinates.

    The pushforward of ``omega_u`` is ``dx`` for every ``u``, so the affine
    potential is re-centered to zero mean by dropping ``b``.
    """
    x = u.grid.x
    return X.a * (x - u.grid.integrate(x) / 2)


def rho_via_chart(u: ToricPotential, X: ToricTwist, base: ToricPotential | None = None):
    """Holomorphy potential from ``rho_base(X) + X(phi - phi_base)`` in the chart.

    Computed in complex arithmetic with ``X = d_w = d_s - i d_theta`` acting on
    invariant potentials, re-centered in the measure of ``u`` and sampled at
    the moment nodes of ``u``.
    """
    g = u.grid
    base = base or ToricPotential.canonical(g)
    p_u = to_chart(u, g)
    p_b = to_chart(base, g)
    xF = g.x
    # moment map of the base in the chart: x_F + rho_F p_b'
    rho_base = X.a * (xF + g.rho * (g.D @ p_b))
    dtheta = np.zeros_like(p_u)  # invariant potentials carry no theta dependence
    dw = g.rho * (g.D @ (p_u - p_b)) - 1j * dtheta
    prof = rho_base + X.a * dw
    lam = 1 + g.D @ (g.rho * (g.D @ p_u))
    prof = prof - g.integrate(prof * lam) / g.integrate(lam)
    # sample at x_F = tanh u'(x)
    coeffs = g.coefficients(prof)
    return C.chebval(np.tanh(u.slope()), coeffs)


def orbit_action(u: ToricPotential, c: float) -> ToricPotential:
    """Pullback of ``omega_u`` by the flow ``z -> e^c z``.

    In the chart this shifts ``f(s) -> f(s + c)``; its Legendre dual is exactly
    ``u(x) - c x``.  The curvature data of ``u`` is reused unchanged, since
    differentiating the linear term twice would only add rounding noise.
    """
    out = ToricPotential(u.grid, u.h - WORK(c) * u.grid.x)
    out.hp = u.hp - WORK(c)
    out.a, out.psi_r, out.Phi, out.upp = u.a, u.psi_r, u.Phi, u.upp
    return out


def iota_orbit_slope(u: ToricPotential, reference: ToricPotential, c: float) -> float:
    """Derivative in ``c`` of iota along the orbit: ``int x (tr - 1) dx``."""
    uc = orbit_action(u, c)
    x = u.grid.x
    return float(u.grid.integrate((x - u.grid.integrate(x) / 2) * (toric_trace(uc, reference) - 1)))


def iota_on_orbit(u: ToricPotential, reference: ToricPotential, c: float, order: int = 24) -> float:
    """iota(orbit_action(u, c)) - iota(u) relative to ``reference``."""
    if c == 0:
        return 0.0
    val, _ = fixed_quad(lambda cs: np.array([iota_orbit_slope(u, reference, t) for t in cs]),
                        0.0, c, n=order)
    return float(val)


def minimize_iota_on_orbit(u: ToricPotential, reference: ToricPotential | None = None,
                           c_max: float = 10.0, tol: float = 1e-12):
    """Minimize iota over the orbit of ``u``; returns ``(c_star, u_star)``."""
    reference = reference or ToricPotential.canonical(u.grid)
    grid_c = np.linspace(-c_max, c_max, 41)
    slopes = np.array([iota_orbit_slope(u, reference, c) for c in grid_c])
    idx = np.flatnonzero((slopes[:-1] < 0) & (slopes[1:] >= 0))
    if idx.size == 0:
        raise LineSearchDiverged(f"no minimum of iota bracketed in |c| <= {c_max}")
    i = int(idx[0])
    lo, hi = grid_c[i], grid_c[i + 1]
    mid = minimize_scalar(lambda c: iota_on_orbit(u, reference, c), bracket=(lo, hi),
                          method="golden", options={"xtol": 1e-6}).x
    # refine on the derivative, which vanishes transversally at the minimum
    a_, b_ = max(lo, mid - 0.05), min(hi, mid + 0.05)
    if iota_orbit_slope(u, reference, a_) > 0 or iota_orbit_slope(u, reference, b_) < 0:
        a_, b_ = lo, hi
    c_star = brentq(lambda c: iota_orbit_slope(u, reference, c), a_, b_, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    u_star = orbit_action(u, c_star)
    if abs(iota_orbit_slope(u, reference, c_star)) > tol:
        raise LineSearchDiverged("orbit minimum found but first variation is not small")
    return c_star, u_star


# -- kernel and conjugate operator ---------------------------------------------------

@dataclass
class KernelSplit:
    modes: tuple
    kernel_dims: dict
    eigenvalues: dict
    threshold: dict


def eigensplit_kernel_bar(u: ToricPotential, modes=(0,), extremal_tol: float = 1e-6) -> KernelSplit:
    """Eigenvalues of Dbar restricted to ker D, per Fourier mode."""
    g = u.grid
    S = abreu_scalar(u)
    w = g.weights
    A = np.stack([np.ones(g.K, dtype=WORK), g.x], axis=1)
    coef = np.linalg.lstsq((A * np.sqrt(w)[:, None]).astype(float),
                           (S * np.sqrt(w)).astype(float), rcond=None)[0]
    defect = float(np.max(np.abs(S - A @ coef.astype(WORK))))
    if defect > extremal_tol:
        raise NotExtremal(f"scalar curvature is not affine: defect {defect:.3e}")
    dims, eigs, thr = {}, {}, {}
    for k in modes:
        A = toric_operator_matrix(u, k).astype(complex)
        ev, vec = np.linalg.eig(A)
        eps = 1e-8 * np.max(np.abs(ev))
        sel = vec[:, np.abs(ev) <= eps]
        dims[k] = sel.shape[1]
        thr[k] = eps
        if sel.shape[1] == 0:
            eigs[k] = np.zeros(0)
            continue
        M = A.shape[0]
        ker = C.chebvander(g.x, M - 1).astype(complex) @ sel
        if k == 0:
            ker = ker.real
        image = toric_lichnerowicz_bar(u, ker, k)
        small = np.linalg.lstsq(ker.astype(complex), image.astype(complex), rcond=None)[0]
        eigs[k] = np.sort_complex(np.linalg.eigvals(small))
    return KernelSplit(tuple(modes), dims, eigs, thr)
