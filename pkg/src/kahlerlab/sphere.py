"""S^1-invariant Kahler metrics on CP^1 in the complex chart.

Potentials are stored relative to the round metric as functions of its moment
coordinate ``x = tanh s`` (``w = (s + i theta)/2``).  A total relative potential
``p`` gives the metric coefficient ``g = lam * (1 - x^2)`` with
``lam = 1 + Delta_FS p`` and ``Delta_FS f = ((1 - x^2) f')'``; every operator of
:mod:`kahlerlab.kahler` is expressed through ``lam``:

* ``Delta f = Delta_FS f / lam`` and ``R = (2 - Delta_FS log lam) / lam``;
* ``<d v1, dbar v2> = (1 - x^2) v1' v2' / lam``;
* the volume form is ``lam dx`` (total volume 2, average curvature 2).

Mode-k functions ``rho^{|k|/2} q e^{i k theta}`` are passed as profiles ``q``
with the keyword ``k``.
"""
from __future__ import annotations

import hashlib
import json

import numpy as np

from .cheb import WORK, ChebGrid
from .errors import GridMismatch, NonPositiveMetric
from .toric import ToricPotential, to_chart


def _arr(f):
    return np.asarray(f, dtype=np.result_type(f, WORK))


def orbit_chart_potential(grid: ChebGrid, c: float):
    """Relative potential of the round metric pulled back by ``z -> e^c z``."""
    c = WORK(c)
    return np.log(np.cosh(c) + grid.x * np.sinh(c))


def orbit_chart_velocity(grid: ChebGrid, c: float):
    """Derivative in ``c`` of :func:`orbit_chart_potential`."""
    c = WORK(c)
    return (np.sinh(c) + grid.x * np.cosh(c)) / (np.cosh(c) + grid.x * np.sinh(c))


class SphereBackground:
    """Reference form on CP^1 given by a chart potential ``p_ref``."""

    backend = "cp1"
    n = 1

    def __init__(self, grid: ChebGrid, p_ref=None):
        self.grid = grid
        p_ref = np.zeros(grid.K, dtype=WORK) if p_ref is None else _arr(p_ref).real
        if p_ref.shape != (grid.K,):
            raise GridMismatch(f"expected {grid.K} node values, got {p_ref.shape}")
        self.psi_ref = p_ref
        self.lam = 1 + self.lap_fs(p_ref)
        if self.lam.min() <= 0:
            i = int(np.argmin(self.lam))
            raise NonPositiveMetric(float(grid.x[i]), float(self.lam[i]))

    @classmethod
    def from_toric(cls, u: ToricPotential) -> "SphereBackground":
        return cls(u.grid, to_chart(u))

    def lap_fs(self, f):
        D = self.grid.D
        return D @ (self.grid.rho * (D @ _arr(f)))

    def hash(self) -> str:
        h = hashlib.sha256()
        h.update(json.dumps({"backend": "cp1", "K": self.grid.K}).encode())
        h.update(np.asarray(self.psi_ref, dtype=float).astype("<f8").tobytes())
        return h.hexdigest()

    @property
    def r_bar(self) -> float:
        return 2.0

    def volume(self) -> float:
        return 2.0


class SphereMetric:
    """Metric ``omega_ref + i ddbar phi`` on CP^1 with cached curvature."""

    backend = "cp1"
    n = 1

    def __init__(self, background: SphereBackground, phi):
        self.background = background
        g = self.grid = background.grid
        phi = _arr(phi).real
        if phi.shape != (g.K,):
            raise GridMismatch(f"expected {g.K} node values, got {phi.shape}")
        self.phi = phi
        self.total = background.psi_ref + phi
        self.lam = 1 + background.lap_fs(self.total)
        i = int(np.argmin(self.lam))
        self.min_eigenvalue = float(self.lam[i])
        if self.lam[i] <= 0:
            raise NonPositiveMetric(float(g.x[i]), self.min_eigenvalue)
        self.R = (2 - background.lap_fs(np.log(self.lam))) / self.lam
        self.dR = g.D @ self.R

    # -- measure ------------------------------------------------------------
    @property
    def density(self):
        return self.lam

    def integrate(self, f):
        return self.grid.weights @ (_arr(f) * self.lam)

    def inner(self, f, g):
        return self.integrate(_arr(f) * np.conj(_arr(g)))

    def volume(self) -> float:
        return float(self.integrate(np.ones(self.grid.K, dtype=WORK)))

    @property
    def r_bar(self) -> float:
        return 2.0

    def r_bar_discrete(self) -> float:
        return float(self.integrate(self.R)) / self.volume()

    def sup(self, f) -> float:
        return float(np.max(np.abs(_arr(f))))

    def moment_map(self):
        """Moment coordinate of ``omega_phi`` at the chart nodes."""
        g = self.grid
        return g.x + g.rho * (g.D @ self.total)

    # -- building blocks on mode-k profiles ----------------------------------
    def _lap_fs_k(self, q, k):
        g = self.grid
        q = _arr(q)
        if k == 0:
            return self.background.lap_fs(q)
        m = abs(k) / 2
        dq = g.D @ q
        return g.D @ (g.rho * dq) - 4 * m * g.x * dq - (2 * m + 4 * m * m) * q

    def _ws(self, q, k):
        g = self.grid
        m = abs(k) / 2
        return g.rho * (g.D @ q) - 2 * m * g.x * q

    def _lich(self, f, k, sign):
        f = _arr(f)
        lap = self._lap_fs_k(f, k) / self.lam
        return (self._lap_fs_k(lap, k) / self.lam + self.R * lap
                + (self.dR / self.lam) * (self._ws(f, k) + sign * k * f))

    # -- public operators -----------------------------------------------------
    def laplacian(self, f, k: int = 0):
        return self._lap_fs_k(f, k) / self.lam

    def trace_of(self, chi):
        if chi.grid != self.grid:
            raise GridMismatch("trace of a metric on another grid")
        return chi.lam / self.lam

    def trace_reference(self):
        return self.background.lam / self.lam

    def grad_pairing(self, v1, v2):
        g = self.grid
        return g.rho * (g.D @ _arr(v1)) * (g.D @ _arr(v2)) / self.lam

    def l_operator(self, f):
        """The single component ``rho (f'/lam)'`` of ``L f`` for invariant f."""
        g = self.grid
        return g.rho * (g.D @ ((g.D @ _arr(f)) / self.lam))

    def tensor_norm2(self, T):
        return np.abs(T) ** 2

    def lichnerowicz(self, f, k: int = 0):
        return self._lich(f, k, -1)

    def lichnerowicz_bar(self, f, k: int = 0):
        return self._lich(f, k, 1)

    def b_operator(self, u, v):
        lu, lv = self.laplacian(u), self.laplacian(v)
        llu, llv = self.laplacian(lu), self.laplacian(lv)
        return lv * llu + self.laplacian(lv * lu) + llv * lu + 2 * self.R * lu * lv

    def ddbar_pairing_reference(self, v):
        return self.background.lap_fs(v) * self.background.lam / self.lam ** 2

    def raised_reference_pairing(self, v):
        g = self.grid
        dv = g.D @ _arr(v)
        return g.rho * dv * dv * self.background.lam / self.lam ** 2

    def kernel_threshold(self) -> float:
        return 1e-8 * float(np.max(np.abs(spectrum(self))))

    def to_json(self) -> str:
        return json.dumps({
            "background_hash": self.background.hash(),
            "phi": [float(v) for v in self.phi],
            "R": [float(v) for v in self.R],
            "min_metric_eigenvalue": self.min_eigenvalue,
        })


def operator_matrix(s: SphereMetric, k: int = 0, modes: int | None = None, conjugate=False):
    """Galerkin matrix of D on the lower Chebyshev modes (see toric_operator_matrix)."""
    from numpy.polynomial import chebyshev as C
    g = s.grid
    M = (2 * g.K) // 3 if modes is None else modes
    basis = C.chebvander(g.x, M - 1)
    sign = 1 if conjugate else -1
    image = np.stack([s._lich(col, k, sign) for col in basis.T], axis=1)
    return g.coefficients(image)[:M]


def spectrum(s: SphereMetric, k: int = 0, modes: int | None = None):
    ev = np.linalg.eigvals(operator_matrix(s, k, modes).astype(complex))
    return ev[np.argsort(np.abs(ev))]


def orbit_iota_slope(bg: SphereBackground, c: float) -> float:
    """Derivative of iota along the orbit of the round metric, at ``z -> e^c z``.

    The velocity of the orbit is the moment map ``x_c`` of the pulled-back metric,
    so the slope is ``int (tr - 1) x_c lam_c dx = int (lam_ref - lam_c) x_c dx``.
    """
    g = bg.grid
    total = orbit_chart_potential(g, c)
    lam_c = 1 + bg.lap_fs(total)
    return float(g.weights @ ((bg.lam - lam_c) * orbit_chart_velocity(g, c)))


def minimize_iota_chart(bg: SphereBackground, c_max: float = 10.0):
    """Orbit parameter ``c*`` minimizing iota and the potential ``phi_1`` relative to ``bg``.

    iota is convex along the orbit, so the minimizer is the root of its slope.
    """
    from scipy.optimize import brentq
    from .errors import LineSearchDiverged
    cs = np.linspace(-c_max, c_max, 81)
    vals = []
    for c in cs:
        try:
            vals.append(orbit_iota_slope(bg, c))
        except (FloatingPointError, ValueError):
            vals.append(np.nan)
    vals = np.array(vals)
    idx = np.flatnonzero((vals[:-1] < 0) & (vals[1:] >= 0))
    if idx.size == 0:
        raise LineSearchDiverged(f"iota slope has no sign change in |c| <= {c_max}")
    i = idx[0]
    c_star = brentq(lambda c: orbit_iota_slope(bg, c), cs[i], cs[i + 1], xtol=1e-15,
                    rtol=4 * np.finfo(float).eps)
    phi1 = orbit_chart_potential(bg.grid, c_star) - bg.psi_ref
    return c_star, phi1
