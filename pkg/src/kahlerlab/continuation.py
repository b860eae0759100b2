"""Continuity path for twisted cscK metrics and its Lyapunov-Schmidt reduction.

The equation along the path is

    F(phi, t) = R_phi - Rbar - (1 - t)(tr_phi omega - n) - rho_phi(X) = 0,

solved for ``t`` decreasing from 1.  At ``t = 1`` the solutions are the cscK
metrics; when the linearization ``-D`` has a kernel ``H`` beyond the constants,
the solve splits into an implicit solve on the complement ``H_perp`` and a
finite-dimensional reduced equation on ``H``.

Unknown potentials are expanded in a fixed basis whose first column is the
constant function: band-limited real Fourier modes on the torus and
Chebyshev polynomials on CP^1.  Potentials are reported mean-zero with respect
to the flat measure (torus) or ``dx`` (CP^1).
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import chebyshev as C
from scipy.linalg import eigh, null_space

from .cheb import WORK
from .errors import (KernelDriftWarning, NoConvergence, NonPositiveMetric, PathTruncated,
                     UnsupportedTwist)
from .kahler import KahlerBackground, TorusMetric
from .lattice import TorusGrid
from .sphere import SphereBackground, SphereMetric
from .toric import ToricTwist


@dataclass
class SolverOptions:
    tol: float = 1e-10
    max_iter: int = 40
    fd_step: float = 1e-7
    linearize_step: float = 1e-4
    trust_u: float = 0.1
    trust_t: float = 0.2
    dt_min: float = 1e-4
    richardson_steps: tuple = (1e-2, 1e-3, 1e-4)
    check_kernel: bool | None = None

    def validate(self):
        for name in ("tol", "fd_step", "linearize_step", "trust_u", "trust_t", "dt_min"):
            if not getattr(self, name) > 0:
                raise ValueError(f"solver option {name} must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        return self


# -- discretizations ------------------------------------------------------------

def torus_band_basis(grid: TorusGrid, band: int | None = None) -> np.ndarray:
    """Constant plus ``cos(k.x), sin(k.x)`` for nonzero ``k`` in a half-space, ``|k_i| <= band``."""
    band = grid.N // 3 if band is None else band
    axes = [np.arange(-band, band + 1)] * grid.ndim
    ks = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, grid.ndim)
    keep = []
    for k in ks:
        nz = np.flatnonzero(k)
        if nz.size and k[nz[0]] > 0:
            keep.append(k)
    coords = grid.coords
    cols = [np.ones(grid.size)]
    for k in keep:
        arg = sum(kk * c for kk, c in zip(k, coords))
        cols.append(np.cos(arg).ravel())
        cols.append(np.sin(arg).ravel())
    return np.stack(cols, axis=1)


class Problem:
    """Backend adapter: node vectors, quadrature weights and the expansion basis."""

    backend: str
    n: int

    def state(self, phi):
        raise NotImplementedError

    def residual(self, phi, t, twist=None):
        """Mean-zero residual vector and the removed mean (the defect)."""
        s = self.state(phi)
        F = self._raw_residual(s, t, twist)
        mean = s.integrate(F) / s.volume()
        return F - mean, abs(complex(mean)), s

    def twist_potential(self, s, twist):
        if twist is None:
            return 0.0
        if self.backend == "torus":
            if getattr(twist, "a", 0.0) != 0.0:
                raise UnsupportedTwist("the torus carries no nonzero holomorphy potentials")
            return 0.0
        xm = s.moment_map()
        return twist.a * (xm - s.integrate(xm) / s.volume())

    def normalize(self, phi):
        return phi - self.weights @ phi / np.sum(self.weights)

    def _raw_residual(self, s, t, twist):
        tr = s.trace_reference()
        return s.R - s.r_bar - (1 - t) * (tr - self.n) - self.twist_potential(s, twist)


class TorusProblem(Problem):
    backend = "torus"

    def __init__(self, bg: KahlerBackground, band: int | None = None):
        self.bg = bg
        self.grid = bg.grid
        self.n = bg.n
        self.npts = self.grid.size
        self.weights = np.full(self.npts, self.grid.cell_volume)
        if band is None:
            band = self.grid.N // 3 if self.n == 1 else min(self.grid.N // 3, 2)
        self.band = band
        self.basis = torus_band_basis(self.grid, band)
        self.dtype = float

    def state(self, phi):
        return TorusMetric(self.bg, np.asarray(phi, dtype=float).reshape(self.grid.shape))

    def density(self, s):
        return s.det.ravel()

    def residual(self, phi, t, twist=None):
        F, defect, s = super().residual(phi, t, twist)
        return np.asarray(F).real.ravel(), defect, s

    def apply_lichnerowicz(self, s, f):
        return s.lichnerowicz_values(np.asarray(f).reshape(self.grid.shape)).real.ravel()

    def laplacian_sup(self, s, f):
        return float(np.max(np.abs(s.laplacian_values(np.asarray(f).reshape(self.grid.shape)))))


class SphereProblem(Problem):
    backend = "cp1"
    n = 1

    def __init__(self, bg: SphereBackground):
        self.bg = bg
        self.grid = bg.grid
        self.npts = self.grid.K
        self.weights = self.grid.weights
        self.basis = C.chebvander(self.grid.x, self.grid.K - 1)
        self.dtype = WORK

    def state(self, phi):
        return SphereMetric(self.bg, phi)

    def density(self, s):
        return s.lam

    def residual(self, phi, t, twist=None):
        F, defect, s = super().residual(phi, t, twist)
        return np.asarray(F).real, defect, s

    def apply_lichnerowicz(self, s, f):
        return s.lichnerowicz(f).real

    def laplacian_sup(self, s, f):
        return float(np.max(np.abs(s.laplacian(f))))

    def normalize(self, phi):
        """Remove the mean and the collocation null mode, which leaves the metric unchanged.

        The null mode is odd with slowly decaying coefficients, so it is fixed by
        zeroing the top odd Chebyshev coefficient; smooth potentials are barely moved.
        """
        phi = super().normalize(phi)
        g = self.grid
        top = g.K - 1 if (g.K - 1) % 2 else g.K - 2
        z = g.alias_mode
        return phi - z * (g.coefficients(phi)[top] / g.coefficients(z)[top])


def make_problem(bg, band: int | None = None) -> Problem:
    if bg.backend == "torus":
        return TorusProblem(bg, band)
    return SphereProblem(bg)


def _check_twist(problem, twist):
    if twist is not None and problem.backend == "torus" and getattr(twist, "a", 0.0) != 0.0:
        raise UnsupportedTwist("the torus carries no nonzero holomorphy potentials")


# -- residuals ------------------------------------------------------------------------

def residual_F(bg, phi, t):
    """``R - Rbar - (1 - t)(tr omega - n)`` made mean-zero; returns (field, mean defect)."""
    p = make_problem(bg, band=0)
    F, defect, _ = p.residual(np.asarray(phi).ravel() if bg.backend == "torus" else phi, t)
    if bg.backend == "torus":
        F = F.reshape(bg.grid.shape)
    return F, defect


def residual_FK(bg, phi, t, X=None):
    """Twisted residual ``F - rho_phi(X)``; torus backgrounds accept only X = 0."""
    p = make_problem(bg, band=0)
    _check_twist(p, X)
    F, defect, _ = p.residual(np.asarray(phi).ravel() if bg.backend == "torus" else phi, t, X)
    if bg.backend == "torus":
        F = F.reshape(bg.grid.shape)
    return F, defect


# -- Newton machinery -------------------------------------------------------------------

def _fd_jacobian(fun, y, r0, step):
    J = np.empty((r0.size, y.size))
    for j in range(y.size):
        h = step * max(1.0, abs(float(y[j])))
        yp = y.copy()
        yp[j] += h
        J[:, j] = (np.asarray(fun(yp), dtype=float) - np.asarray(r0, dtype=float)) / h
    return J


def _newton(fun, y0, check, opts: SolverOptions, J=None, label="Newton"):
    """Damped chord-Newton on ``fun(y) = 0`` until ``check(y) <= opts.tol``.

    Steps are backtracked on the Euclidean norm of ``fun`` (the merit the
    Newton direction descends); ``fun`` may raise NonPositiveMetric, and such
    steps are halved as well.  A chord Jacobian that fails to give descent,
    or whose contraction stalls, is rebuilt by finite differences.
    Returns (y, iterations).
    """
    y = np.array(y0, dtype=float)
    r = np.asarray(fun(y), dtype=float)
    merit = float(np.linalg.norm(r))
    err = check(y)
    it = 0
    fresh = False
    while err > opts.tol:
        if it >= opts.max_iter:
            raise NoConvergence(it, err, f"{label} did not converge")
        if J is None:
            J = _fd_jacobian(fun, y, r, opts.fd_step)
            fresh = True
        dy = np.linalg.lstsq(J, -r, rcond=None)[0]
        lam = 1.0
        accepted = False
        while lam >= 1e-4:
            try:
                y_new = y + lam * dy
                r_new = np.asarray(fun(y_new), dtype=float)
                merit_new = float(np.linalg.norm(r_new))
                if merit_new < (1 - 1e-4 * lam) * merit:
                    accepted = True
                    break
            except NonPositiveMetric:
                pass
            lam /= 2
        if not accepted:
            if not fresh:
                J = None  # stale chord: rebuild and retry from the same point
                continue
            # no descent even with a fresh Jacobian: take the shortest step tried
            y_new = y + lam * dy
            r_new = np.asarray(fun(y_new), dtype=float)
            merit_new = float(np.linalg.norm(r_new))
        it += 1
        err_new = check(y_new)
        if merit_new > 0.25 * merit:
            J = None  # slow contraction: refresh the Jacobian
        fresh = False
        y, r, merit, err = y_new, r_new, merit_new, err_new
    return y, it


@dataclass
class ContinuationRecord:
    t: float
    potential: np.ndarray
    residual: float
    u: tuple
    iterations: int
    iota: float
    orthogonality_defect: float
    mean_defect: float
    step_ratio: float | None = None
    kernel_dim: int | None = None

    def to_json_line(self) -> str:
        return json.dumps({
            "t": self.t,
            "potential": [float(v) for v in np.asarray(self.potential).ravel()],
            "residual": self.residual,
            "u": [float(v) for v in self.u],
            "iterations": self.iterations,
            "iota": self.iota,
            "orthogonality_defect": self.orthogonality_defect,
            "mean_defect": self.mean_defect,
            "step_ratio": self.step_ratio,
            "kernel_dim": self.kernel_dim,
        })


# -- linearization and kernel -----------------------------------------------------------

@dataclass
class Linearization:
    """Dense Jacobian of ``phi -> F(phi, t)`` on the expansion basis (columns)."""

    matrix: np.ndarray
    basis: np.ndarray
    weights: np.ndarray

    def apply(self, coeffs):
        return self.matrix @ coeffs

    def galerkin(self):
        return self.basis.T.astype(float) @ (self.weights.astype(float)[:, None] * self.matrix)


def linearize(problem: Problem, phi, t, columns=None, opts: SolverOptions | None = None,
              twist=None) -> Linearization:
    """Finite-difference Jacobian along the basis columns.

    Each column uses central differences at steps ``h`` and ``h/2`` combined by
    Richardson extrapolation, with ``h`` scaled by ``max(1, |phi|)`` and divided
    by the size of the column's Laplacian, so that every probe perturbs the
    metric by a comparable relative amount.
    """
    opts = opts or SolverOptions()
    phi = np.asarray(phi, dtype=problem.dtype)
    B = problem.basis if columns is None else problem.basis[:, columns]
    scale = max(1.0, float(np.max(np.abs(phi))))
    s = problem.state(phi)
    weights = problem.weights * problem.density(s)
    J = np.empty((problem.npts, B.shape[1]))

    def central(b, h):
        Fp = problem.residual(phi + h * b, t, twist)[0]
        Fm = problem.residual(phi - h * b, t, twist)[0]
        return np.asarray((Fp - Fm) / (2 * h), dtype=float)

    for j in range(B.shape[1]):
        b = B[:, j]
        h = opts.linearize_step * scale / max(1.0, problem.laplacian_sup(s, b))
        for attempt in range(2):
            try:
                J[:, j] = (4 * central(b, h / 2) - central(b, h)) / 3
                break
            except NonPositiveMetric:
                if attempt:
                    raise
                h /= 10
    return Linearization(J, B, weights)


@dataclass
class KernelBasis:
    problem: Problem
    phi1: np.ndarray
    E: np.ndarray            # kernel functions (node values), columns
    mu: np.ndarray           # quadrature weights times density of phi1
    Q: np.ndarray            # basis of H_perp (node values), columns
    eigenvalues: np.ndarray
    eps_ker: float
    chord: np.ndarray | None = None
    _cache: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.E.shape[1]

    def pi1(self, f):
        return np.asarray(self.E.T @ (self.mu * f), dtype=float)

    def mean(self, f):
        return (self.mu @ f) / np.sum(self.mu)

    def pi2(self, f):
        f = f - self.mean(f)
        return f - self.E @ self.pi1(f).astype(self.E.dtype)


def _weighted_orthonormal(V, mu):
    G = V.T @ (mu[:, None] * V)
    L = np.linalg.cholesky(np.asarray(G, dtype=float))
    return V @ np.linalg.inv(L).T.astype(V.dtype)


def kernel_basis(problem: Problem, phi1, modes: int | None = None, band: int | None = None) -> KernelBasis:
    """Discrete kernel of ``D_{phi1}`` (constants removed) and the complement ``H_perp``.

    The Galerkin matrix ``<D b_j, b_i>`` is built on a reduced basis (the lower
    two thirds of Chebyshev modes on CP^1, or a Fourier band on the torus) and
    diagonalized against the Gram matrix; eigenvalues below
    ``1e-8 * max |eigenvalue|`` span the kernel.
    """
    phi1 = problem.normalize(np.asarray(phi1, dtype=problem.dtype))
    s = problem.state(phi1)
    mu = problem.weights * problem.density(s)
    if problem.backend == "cp1":
        M = (2 * problem.npts) // 3 if modes is None else modes
        Bm = problem.basis[:, :M]
    else:
        Bm = problem.basis if band is None else torus_band_basis(problem.grid, band)
    DB = np.stack([problem.apply_lichnerowicz(s, b) for b in Bm.T], axis=1)
    A = np.asarray(Bm.T @ (mu[:, None] * DB), dtype=float)
    A = 0.5 * (A + A.T)
    G = np.asarray(Bm.T @ (mu[:, None] * Bm), dtype=float)
    ev, vec = eigh(A, G)
    eps = 1e-8 * float(np.max(np.abs(ev)))
    ker = Bm @ vec[:, np.abs(ev) <= eps].astype(Bm.dtype)
    ones = np.ones((problem.npts, 1), dtype=Bm.dtype)
    # remove constants, then orthonormalize in L2(omega_phi1)
    ker = ker - ones @ ((mu @ ker) / np.sum(mu))[None, :]
    norms = np.sqrt(np.abs(np.einsum("ij,i,ij->j", ker, mu, ker)))
    ker = ker[:, norms > 1e-6 * max(1.0, float(norms.max(initial=0.0)))]
    if ker.shape[1]:
        sv = np.linalg.svd(np.asarray(np.sqrt(mu)[:, None] * ker, dtype=float), compute_uv=False)
        ker = ker[:, : int(np.sum(sv > 1e-6 * sv[0]))]
        E = _weighted_orthonormal(ker, mu)
    else:
        E = ker
    # complement of {1, E} inside the full expansion space
    Bf = problem.basis
    cons = np.asarray(Bf.T @ (mu[:, None] * np.concatenate([ones, E], axis=1)), dtype=float)
    Z = null_space(cons.T)
    Q = Bf @ Z.astype(Bf.dtype)
    return KernelBasis(problem, phi1, E, mu, Q, ev, eps)


# -- Lyapunov-Schmidt reduction ----------------------------------------------------------

def _potential(kb: KernelBasis, u, y):
    u = np.atleast_1d(np.asarray(u, dtype=float))
    return kb.phi1 + kb.E @ u.astype(kb.E.dtype) + kb.Q @ np.asarray(y, dtype=float).astype(kb.Q.dtype)


def orthogonal_solve(kb: KernelBasis, u, t, opts: SolverOptions | None = None, y0=None, twist=None):
    """Solve ``pi2 F(phi1 + u.e + w, t) = 0`` for ``w`` in ``H_perp``.

    Returns ``(w, y, F, iterations)`` with ``w = Q y`` in node values.
    """
    opts = opts or SolverOptions()
    p = kb.problem
    Qmu = kb.Q.T * kb.mu

    def r2(y):
        F = p.residual(_potential(kb, u, y), t, twist)[0]
        return np.asarray(Qmu @ F, dtype=float)

    def check(y):
        F = p.residual(_potential(kb, u, y), t, twist)[0]
        return float(np.max(np.abs(Qmu @ F))) / float(np.max(np.abs(Qmu), initial=1.0))

    if kb.chord is None:
        y_zero = np.zeros(kb.Q.shape[1])
        kb.chord = _fd_jacobian(r2, y_zero, r2(y_zero), opts.fd_step)
    y0 = np.zeros(kb.Q.shape[1]) if y0 is None else np.asarray(y0, dtype=float)
    sub = SolverOptions(**{**opts.__dict__, "tol": 1e-3 * opts.tol})
    y, it = _newton(r2, y0, check, sub, J=kb.chord, label="orthogonal solve")
    w = kb.Q @ y.astype(kb.Q.dtype)
    F = p.residual(_potential(kb, u, y), t, twist)[0]
    return w, y, F, it


def reduced_map(kb: KernelBasis, u, t, opts: SolverOptions | None = None):
    """``(P, Ptilde)`` with ``P = pi1 F`` and ``Ptilde = P / (t - 1)``.

    At ``t = 1`` the quotient is the one-sided limit, extrapolated from the
    steps ``1 - t`` in ``opts.richardson_steps``.
    """
    opts = opts or SolverOptions()
    _, _, F, _ = orthogonal_solve(kb, u, t, opts)
    P = kb.pi1(F)
    if t < 1:
        return P, P / (t - 1)
    hs = np.asarray(opts.richardson_steps, dtype=float)
    vals = []
    y = None
    for h in hs:
        _, y, Fh, _ = orthogonal_solve(kb, u, 1 - h, opts, y0=y)
        vals.append(kb.pi1(Fh) / (-h))
    vals = np.array(vals)
    # polynomial in h through the samples, evaluated at h = 0
    V = np.vander(hs, len(hs), increasing=True)
    coef = np.linalg.solve(V, vals)
    return P, coef[0]


def reduced_jacobian(kb: KernelBasis, opts: SolverOptions | None = None, delta: float = 1e-2):
    """Reduced Jacobian ``d Ptilde / du`` at ``(0, 1)``.

    Returns ``(analytic, finite_difference, quadratic_form)``: the analytic
    expression ``pi1[-<d e, dbar(tr - n)> - <i ddbar e, omega>]``, a
    Richardson-extrapolated central difference of the reduced map, and the
    quadratic form ``int g^{a mbar} g^{nu bbar} e_mbar e_nu omega_{a bbar}``.
    """
    opts = opts or SolverOptions()
    p = kb.problem
    d = kb.dim
    if d == 0:
        z = np.zeros((0, 0))
        return z, z, z
    s = p.state(kb.phi1)
    tr = s.trace_reference()
    shape = kb.phi1.shape if p.backend == "cp1" else p.grid.shape
    cols = [kb.E[:, j].reshape(shape) for j in range(d)]
    trn = np.asarray(tr) - p.n
    analytic = np.empty((d, d))
    quad = np.empty((d, d))
    for j, e in enumerate(cols):
        img = -np.asarray(s.grad_pairing(e, trn)) - np.asarray(s.ddbar_pairing_reference(e))
        analytic[:, j] = kb.pi1(np.asarray(img).real.ravel())
    for i, ei in enumerate(cols):
        for j, ej in enumerate(cols):
            if p.backend == "cp1":
                g = p.grid
                dv = g.D @ ei
                dw = g.D @ ej
                val = g.rho * dv * dw * s.background.lam / s.lam ** 2
            else:
                val = _raised_pair(s, ei, ej)
            quad[i, j] = float(np.real(s.integrate(val)))
    fd = np.empty((d, d))
    for j in range(d):
        est = []
        for dl in (2 * delta, delta):
            u = np.zeros(d)
            u[j] = dl
            Pp = reduced_map(kb, u, 1.0, opts)[1]
            Pm = reduced_map(kb, -u, 1.0, opts)[1]
            est.append((Pp - Pm) / (2 * dl))
        fd[:, j] = (4 * est[1] - est[0]) / 3
    return analytic, fd, quad


def _raised_pair(s, v1, v2):
    from .lattice import gradients
    d1, db1 = gradients(v1, s.grid)
    d2, db2 = gradients(v2, s.grid)
    return 0.5 * np.einsum("am...,m...,vb...,v...,ab...->...", s.gu, db1, s.gu, d2, s.background.metric) \
        + 0.5 * np.einsum("am...,m...,vb...,v...,ab...->...", s.gu, db2, s.gu, d1, s.background.metric)


def orthogonality_defect(kb: KernelBasis) -> float:
    """``sum_i |<e_i, tr_{phi1} omega - n>|`` in ``L^2(omega_{phi1})``."""
    if kb.dim == 0:
        return 0.0
    s = kb.problem.state(kb.phi1)
    tr = np.asarray(s.trace_reference()).ravel() - kb.problem.n
    return float(np.sum(np.abs(kb.pi1(tr))))


# -- solving along the path ----------------------------------------------------------

def plain_newton(problem: Problem, t, initial, opts: SolverOptions | None = None, twist=None):
    """Newton on the Galerkin-projected residual over all non-constant basis functions."""
    opts = opts or SolverOptions()
    base = np.asarray(initial, dtype=problem.dtype)
    B1 = problem.basis[:, 1:]
    Bw = B1.T * problem.weights

    def r(y):
        phi = base + B1 @ y.astype(B1.dtype)
        return np.asarray(Bw @ problem.residual(phi, t, twist)[0], dtype=float)

    def check(y):
        phi = base + B1 @ y.astype(B1.dtype)
        F, defect, _ = problem.residual(phi, t, twist)
        return max(float(np.max(np.abs(F))), defect)

    y, it = _newton(r, np.zeros(B1.shape[1]), check, opts, label=f"Newton at t = {t}")
    return base + B1 @ y.astype(B1.dtype), it


def _iota(problem, phi):
    from .functionals import FunctionalKind, PotentialPath, functional_value
    path = PotentialPath.straight(problem, np.zeros_like(phi), phi)
    return float(functional_value(FunctionalKind("iota"), path))


def _kernel_dim(problem, phi):
    if problem.backend != "cp1":
        return None
    kb = kernel_basis(problem, phi)
    return kb.dim


def make_record(problem, kb, t, phi, iterations, twist=None, u=None, prev=None):
    F, defect, s = problem.residual(phi, t, twist)
    phi_n = problem.normalize(np.asarray(phi))
    u = tuple(np.atleast_1d(kb.pi1(np.asarray(phi, dtype=kb.E.dtype) - kb.phi1))) if (u is None and kb is not None and kb.dim) else (u or ())
    ratio = None
    if prev is not None and prev.t != t:
        diff = np.max(np.abs(np.asarray(phi_n, dtype=float) - np.asarray(prev.potential, dtype=float)))
        ratio = float(diff / abs(prev.t - t))
    return ContinuationRecord(
        t=float(t),
        potential=np.asarray(phi_n, dtype=float),
        residual=float(np.max(np.abs(F))),
        u=tuple(float(v) for v in u),
        iterations=int(iterations),
        iota=_iota(problem, np.asarray(phi_n, dtype=problem.dtype)),
        orthogonality_defect=orthogonality_defect(kb) if kb is not None else 0.0,
        mean_defect=float(defect),
        step_ratio=ratio,
    )


def solve_at(problem: Problem, kb: KernelBasis, t, initial=None, opts: SolverOptions | None = None,
             twist=None, prev=None) -> ContinuationRecord:
    """Solve ``F(phi, t) = 0`` near ``initial`` (default ``phi1``)."""
    opts = (opts or SolverOptions()).validate()
    _check_twist(problem, twist)
    twisted = twist is not None and getattr(twist, "a", 0.0) != 0.0
    phi1 = kb.phi1
    init = phi1 if initial is None else np.asarray(initial, dtype=problem.dtype)
    F0, defect0, _ = problem.residual(init, t, twist)
    if max(float(np.max(np.abs(F0))), defect0) <= opts.tol:
        rec = make_record(problem, kb, t, init, 0, twist, prev=prev)
        return rec
    u0 = kb.pi1(init - phi1) if kb.dim else np.zeros(0)
    use_ls = (kb.dim > 0 and not twisted and np.linalg.norm(u0) <= opts.trust_u
              and 1 - t <= opts.trust_t)
    if use_ls:
        phi, u, iters = _ls_solve(kb, t, u0, init, opts)
    else:
        phi, iters = plain_newton(problem, t, init, opts, twist)
        u = None
    check = opts.check_kernel if opts.check_kernel is not None else problem.backend == "cp1"
    rec = make_record(problem, kb, t, phi, iters, twist, u=u, prev=prev)
    if check and t < 1:
        dim = _kernel_dim(problem, phi)
        rec.kernel_dim = dim
        if dim is not None and dim != kb.dim:
            warnings.warn(f"kernel dimension {dim} at t = {t} differs from {kb.dim} at t = 1",
                          KernelDriftWarning, stacklevel=2)
    return rec


def _ls_solve(kb: KernelBasis, t, u0, init, opts):
    """Outer Newton on the reduced equation over ``u``, inner solves on ``H_perp``."""
    Qmu = kb.Q.T * kb.mu
    y0 = np.asarray(np.linalg.lstsq(np.asarray(Qmu @ kb.Q, dtype=float),
                                    np.asarray(Qmu @ (init - kb.phi1), dtype=float), rcond=None)[0])
    total = 0
    if t == 1:
        # every u solves the reduced equation at t = 1
        w, y, F, it = orthogonal_solve(kb, u0, t, opts, y0=y0)
        return kb.phi1 + kb.E @ u0.astype(kb.E.dtype) + w, u0, it
    state = {"y": y0}

    def G(u):
        nonlocal total
        _, y, F, it = orthogonal_solve(kb, u, t, opts, y0=state["y"])
        state["y"] = y
        total += it
        return kb.pi1(F) / (t - 1)

    u = np.array(u0, dtype=float)
    for outer in range(opts.max_iter):
        g = G(u)
        phi = _potential(kb, u, state["y"])
        F, defect, _ = kb.problem.residual(phi, t)
        if max(float(np.max(np.abs(F))), defect) <= opts.tol:
            return phi, u, total + outer
        h = 1e-6
        J = np.empty((kb.dim, kb.dim))
        ysave = state["y"]
        for j in range(kb.dim):
            du = np.zeros(kb.dim)
            du[j] = h
            J[:, j] = (G(u + du) - g) / h
            state["y"] = ysave
        u = u - np.linalg.solve(J, g)
    raise NoConvergence(opts.max_iter, float(np.max(np.abs(F))), "reduced Newton did not converge")


def track_path(problem: Problem, kb: KernelBasis, t_end, steps, opts: SolverOptions | None = None,
               twist=None, t_start: float = 1.0):
    """Solve along a uniform grid ``t_start -> t_end`` with warm starts and step bisection."""
    opts = (opts or SolverOptions()).validate()
    if steps < 2:
        raise ValueError("need at least two steps")
    ts = np.linspace(t_start, t_end, steps)
    records = []
    try:
        rec = solve_at(problem, kb, float(ts[0]), kb.phi1, opts, twist)
    except (NoConvergence, NonPositiveMetric) as exc:
        raise PathTruncated(None, records) from exc
    records.append(rec)
    phi = kb.phi1 if rec.iterations == 0 else _unnormalized(problem, rec, kb)
    k = 1
    t_prev = float(ts[0])
    while k < len(ts):
        target = float(ts[k])
        t_try = target
        while True:
            try:
                rec = solve_at(problem, kb, t_try, phi, opts, twist, prev=records[-1])
                break
            except (NoConvergence, NonPositiveMetric) as exc:
                dt = (t_prev - t_try) / 2
                if dt < opts.dt_min:
                    raise PathTruncated(t_prev, records) from exc
                t_try = t_prev - dt
        records.append(rec)
        phi = _unnormalized(problem, rec, kb)
        t_prev = t_try
        if t_try == target:
            k += 1
    return records


def _unnormalized(problem, rec, kb):
    return np.asarray(rec.potential, dtype=problem.dtype).reshape(kb.phi1.shape)
