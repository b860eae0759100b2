"""Curvature and fourth-order operators of Kahler metrics on flat tori.

Every operator is exposed twice: as a method of the metric state and as a
module-level function that dispatches on the state, so the same call works
for the CP^1 chart states defined in :mod:`kahlerlab.sphere`.

Volume forms are normalized so that ``omega^n / n!`` is Lebesgue measure for
the flat metric; ``density`` is therefore ``det g``.
"""
from __future__ import annotations

import hashlib
import json

import numpy as np

from .errors import GridMismatch, KernelPreconditionViolated, NonPositiveMetric
from .lattice import Field, TorusGrid, complex_hessian, dealias, gradients


def _vals(f) -> np.ndarray:
    return f.values if isinstance(f, Field) else np.asarray(f, dtype=complex)


def _min_eigenvalues(G: np.ndarray) -> np.ndarray:
    """Smallest eigenvalue of the Hermitian matrix G[:, :, point] per point."""
    if G.shape[0] == 1:
        return G[0, 0].real
    a, d = G[0, 0].real, G[1, 1].real
    b = G[0, 1]
    return 0.5 * (a + d) - np.sqrt(0.25 * (a - d) ** 2 + np.abs(b) ** 2)


def _inverse(G: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Returns (det G, inverse with gu[a, b] = g^{a bbar})."""
    if G.shape[0] == 1:
        det = G[0, 0]
        return det, (1.0 / det)[None, None]
    det = G[0, 0] * G[1, 1] - G[0, 1] * G[1, 0]
    inv = np.empty_like(G)
    inv[0, 0] = G[1, 1] / det
    inv[1, 1] = G[0, 0] / det
    inv[0, 1] = -G[0, 1] / det
    inv[1, 0] = -G[1, 0] / det
    # g^{a bbar} g_{c bbar} = delta: the raised tensor is the transpose of G^{-1}
    return det, inv.transpose(1, 0, *range(2, G.ndim))


class KahlerBackground:
    """Reference form ``omega = omega_flat + i ddbar psi_ref`` on a torus."""

    backend = "torus"

    def __init__(self, grid: TorusGrid, psi_ref=None):
        self.grid = grid
        if psi_ref is None:
            psi_ref = np.zeros(grid.shape)
        if isinstance(psi_ref, Field) and psi_ref.grid != grid:
            raise GridMismatch("reference potential lives on another grid")
        self.psi_ref = Field(grid, _vals(psi_ref).real)
        self.metric = self._metric_of(self.psi_ref.values)
        lam = _min_eigenvalues(self.metric)
        if lam.min() <= 0:
            i = np.unravel_index(np.argmin(lam), lam.shape)
            raise NonPositiveMetric(tuple(int(k) for k in i), lam.min())

    @property
    def n(self) -> int:
        return self.grid.n

    def _metric_of(self, potential: np.ndarray) -> np.ndarray:
        G = complex_hessian(dealias(potential, self.grid), self.grid)
        for a in range(self.n):
            G[a, a] += 1.0
        return G

    def hash(self) -> str:
        h = hashlib.sha256()
        h.update(json.dumps({"backend": "torus", "n": self.n, "N": self.grid.N}).encode())
        h.update(self.psi_ref.values.real.astype("<f8").tobytes())
        return h.hexdigest()

    @property
    def r_bar(self) -> float:
        return 0.0

    def volume(self) -> float:
        return self.grid.volume


class TorusMetric:
    """Metric ``omega_phi`` with cached tensors; immutable after construction."""

    backend = "torus"

    def __init__(self, background: KahlerBackground, phi):
        self.background = background
        self.grid = background.grid
        self.n = background.n
        if isinstance(phi, Field) and phi.grid != self.grid:
            raise GridMismatch("potential lives on another grid")
        self.phi = Field(self.grid, _vals(phi).real)
        self.g = background._metric_of(background.psi_ref.values + self.phi.values)
        lam = _min_eigenvalues(self.g)
        self.min_eigenvalue = float(lam.min())
        if self.min_eigenvalue <= 0:
            i = np.unravel_index(np.argmin(lam), lam.shape)
            raise NonPositiveMetric(tuple(int(k) for k in i), self.min_eigenvalue)
        det, self.gu = _inverse(self.g)
        self.det = det.real
        self.ric = -complex_hessian(np.log(self.det), self.grid)
        self.R = np.einsum("ab...,ab...->...", self.gu, self.ric).real
        for arr in (self.g, self.gu, self.det, self.ric, self.R):
            arr.setflags(write=False)

    # -- measure ----------------------------------------------------------
    @property
    def density(self) -> np.ndarray:
        return self.det

    def integrate(self, f) -> complex:
        return complex(np.sum(_vals(f) * self.det) * self.grid.cell_volume)

    def inner(self, f, g) -> complex:
        return self.integrate(_vals(f) * np.conj(_vals(g)))

    def volume(self) -> float:
        return self.integrate(1.0).real

    @property
    def r_bar(self) -> float:
        return self.background.r_bar

    def r_bar_discrete(self) -> float:
        return self.integrate(self.R).real / self.volume()

    def _field(self, v) -> Field:
        return Field(self.grid, v)

    # -- building blocks --------------------------------------------------
    def _hess(self, f) -> np.ndarray:
        return complex_hessian(dealias(_vals(f), self.grid), self.grid)

    def _contract(self, A, B) -> np.ndarray:
        """g^{a bbar} g^{c dbar} A_{a dbar} B_{c bbar}."""
        return np.einsum("ab...,cd...,ad...,cb...->...", self.gu, self.gu, A, B)

    def laplacian_values(self, f) -> np.ndarray:
        return np.einsum("ab...,ab...->...", self.gu, self._hess(f))

    def pairing_values(self, v1, v2) -> np.ndarray:
        d1, _ = gradients(_vals(v1), self.grid)
        _, db2 = gradients(_vals(v2), self.grid)
        return np.einsum("ab...,a...,b...->...", self.gu, d1, db2)

    def lichnerowicz_values(self, f) -> np.ndarray:
        f = dealias(_vals(f), self.grid)
        Hf = self._hess(f)
        lap = np.einsum("ab...,ab...->...", self.gu, Hf)
        return self.laplacian_values(lap) + self._contract(Hf, self.ric) + self.pairing_values(self.R, f)

    # -- public operators -------------------------------------------------
    def laplacian(self, f) -> Field:
        return self._field(self.laplacian_values(f))

    def trace_of(self, chi) -> Field:
        G = chi.g if hasattr(chi, "g") else chi.metric
        if chi.grid != self.grid:
            raise GridMismatch("trace of a metric on another grid")
        return self._field(np.einsum("ab...,ab...->...", self.gu, G))

    def trace_reference(self) -> np.ndarray:
        return np.einsum("ab...,ab...->...", self.gu, self.background.metric).real

    def grad_pairing(self, v1, v2) -> Field:
        return self._field(self.pairing_values(v1, v2))

    def l_operator(self, f) -> np.ndarray:
        """Tensor ``T[a, b] = dbar_b (g^{a mbar} dbar_m f)``, shape (n, n) + grid."""
        _, db = gradients(dealias(_vals(f), self.grid), self.grid)
        raised = np.einsum("am...,m...->a...", self.gu, db)
        T = np.empty((self.n, self.n) + self.grid.shape, dtype=complex)
        for a in range(self.n):
            _, dba = gradients(raised[a], self.grid)
            T[a] = dba
        return T

    def tensor_norm2(self, T) -> np.ndarray:
        return np.einsum("ab...,cd...,ac...,db...->...", T, np.conj(T), self.g, self.gu).real

    def lichnerowicz(self, f) -> Field:
        return self._field(self.lichnerowicz_values(f))

    def lichnerowicz_bar(self, f) -> Field:
        return self._field(np.conj(self.lichnerowicz_values(np.conj(_vals(f)))))

    def b_operator(self, u, v) -> Field:
        u = dealias(_vals(u), self.grid)
        v = dealias(_vals(v), self.grid)
        Hu, Hv = self._hess(u), self._hess(v)
        lap_u = np.einsum("ab...,ab...->...", self.gu, Hu)
        lap_v = np.einsum("ab...,ab...->...", self.gu, Hv)
        t1 = self._contract(Hv, self._hess(lap_u))
        t2 = self.laplacian_values(self._contract(Hv, Hu))
        t3 = self._contract(self._hess(lap_v), Hu)
        gu, ric = self.gu, self.ric
        t4 = np.einsum("pa...,ca...,cb...,eb...,eq...,pq...->...", Hu, gu, ric, gu, Hv, gu)
        t5 = np.einsum("pa...,ca...,cb...,eb...,eq...,pq...->...", Hv, gu, ric, gu, Hu, gu)
        return self._field(t1 + t2 + t3 + t4 + t5)

    def ddbar_pairing_reference(self, v) -> np.ndarray:
        """``<i ddbar v, omega>_phi`` with omega the reference form."""
        return self._contract(self._hess(v), self.background.metric)

    def raised_reference_pairing(self, v) -> np.ndarray:
        """``g^{a mbar} g^{nu bbar} v_{mbar} v_{nu} omega_{a bbar}`` for real v."""
        d, db = gradients(_vals(v), self.grid)
        return np.einsum("am...,m...,vb...,v...,ab...->...", self.gu, db, self.gu, d,
                         self.background.metric).real

    def sup(self, f) -> float:
        return float(np.max(np.abs(_vals(f))))

    def to_json(self) -> str:
        return json.dumps({
            "background_hash": self.background.hash(),
            "phi": [float(v) for v in self.phi.values.real.ravel()],
            "R": [float(v) for v in self.R.ravel()],
            "min_metric_eigenvalue": self.min_eigenvalue,
        })


def assemble_metric(bg, phi):
    """Metric state of ``omega + i ddbar phi`` for either backend."""
    if bg.backend == "torus":
        return TorusMetric(bg, phi)
    from .sphere import SphereMetric
    return SphereMetric(bg, phi)


# -- dispatching functional interface ----------------------------------------

def laplacian(s, f, **kwargs) -> Field:
    return s.laplacian(f, **kwargs)


def trace_of(s, chi) -> Field:
    return s.trace_of(chi)


def grad_pairing(s, v1, v2) -> Field:
    return s.grad_pairing(v1, v2)


def l_operator(s, f):
    return s.l_operator(f)


def lichnerowicz(s, f, **kwargs) -> Field:
    return s.lichnerowicz(f, **kwargs)


def lichnerowicz_bar(s, f, **kwargs) -> Field:
    return s.lichnerowicz_bar(f, **kwargs)


def b_operator(s, u, v) -> Field:
    return s.b_operator(u, v)


def leibniz_residual(s, v, xi, eps_ker: float | None = None) -> float:
    """Sup norm of ``D<dv, dbar xi> - <dv, dbar D xi> - B(v, xi)`` for v in ker D."""
    if eps_ker is None:
        eps_ker = s.kernel_threshold() if hasattr(s, "kernel_threshold") else 1e-8
    dv = s.sup(s.lichnerowicz(v))
    dbv = s.sup(s.lichnerowicz_bar(v))
    if dv > eps_ker or dbv > eps_ker:
        raise KernelPreconditionViolated(
            f"v is not in the kernel: |Dv| = {dv:.3e}, |Dbar v| = {dbv:.3e}, threshold {eps_ker:.3e}")
    lhs = s.lichnerowicz(s.grad_pairing(v, xi))
    mid = s.grad_pairing(v, s.lichnerowicz(xi))
    b = s.b_operator(v, xi)
    return s.sup(_vals(lhs) - _vals(mid) - _vals(b))


def commutator_residual(s, f, **kwargs) -> float:
    """Sup norm of ``D(Dbar f) - Dbar(D f)``; keyword arguments (the mode ``k``) go to both operators."""
    a = s.lichnerowicz(s.lichnerowicz_bar(f, **kwargs), **kwargs)
    b = s.lichnerowicz_bar(s.lichnerowicz(f, **kwargs), **kwargs)
    return s.sup(_vals(a) - _vals(b))
