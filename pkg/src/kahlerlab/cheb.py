"""Chebyshev-Gauss collocation on the interval (-1, 1).

Node data and differentiation matrices are held in extended precision
(``numpy.longdouble``): fourth-order operators amplify rounding by roughly
``K**4`` and double precision would put the floor near 1e-10 already at K = 32.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np
from numpy.polynomial import chebyshev as C
from scipy.fft import dct

WORK = np.longdouble
PI = np.arccos(WORK(-1))


class ChebGrid:
    """Interior Chebyshev-Gauss nodes in ascending order with spectral calculus.

    Node values are the primary representation; coefficients are obtained by
    a DCT-II and the differentiation matrix is built in barycentric form.
    """

    def __init__(self, K: int):
        if K < 4:
            raise ValueError(f"need at least 4 nodes, got {K}")
        self.K = int(K)
        j = np.arange(self.K, dtype=WORK)
        theta = PI * (j + WORK(0.5)) / self.K
        self.theta = theta[::-1].copy()
        self.x = np.cos(self.theta)
        self.rho = np.sin(self.theta) ** 2  # 1 - x^2 without cancellation

    def __repr__(self):
        return f"ChebGrid(K={self.K})"

    def __eq__(self, other):
        return isinstance(other, ChebGrid) and other.K == self.K

    def __hash__(self):
        return hash(("ChebGrid", self.K))

    @property
    def weights(self) -> np.ndarray:
        return _fejer_weights(self.K)

    @property
    def D(self) -> np.ndarray:
        return _diff_matrix(self.K)

    @property
    def alias_mode(self) -> np.ndarray:
        """Nonconstant null vector of the collocated ``d/dx (1 - x^2) d/dx``.

        Its interpolant has derivative ``1/(1 - x^2)`` at every node, so the
        collocated flux is constant and the operator annihilates it.  It is the
        aliased image of ``atanh`` and carries no smooth geometry.
        """
        return _alias_mode(self.K)

    def coefficients(self, values) -> np.ndarray:
        """Chebyshev coefficients of the interpolant through the node values."""
        v = np.asarray(values)
        c = dct(v[::-1], type=2, axis=0) / self.K
        c[0] *= 0.5
        return c

    def from_coefficients(self, coeffs) -> np.ndarray:
        c = np.zeros(self.K, dtype=np.result_type(coeffs, WORK))
        m = min(len(coeffs), self.K)
        c[:m] = coeffs[:m]
        return C.chebval(self.x, c)

    def interpolate(self, values, points) -> np.ndarray:
        return C.chebval(np.asarray(points), self.coefficients(np.asarray(values, dtype=WORK)))

    def diff(self, values, order: int = 1) -> np.ndarray:
        out = np.asarray(values, dtype=np.result_type(values, WORK))
        for _ in range(order):
            out = self.D @ out
        return out

    def integrate(self, values):
        return self.weights @ np.asarray(values)

    def filter(self, values, keep: int | None = None) -> np.ndarray:
        """Drop Chebyshev modes of degree >= keep (default 2K/3)."""
        keep = (2 * self.K) // 3 if keep is None else keep
        c = self.coefficients(values)
        c[keep:] = 0.0
        return C.chebval(self.x, c)

    def antiderivative(self, values) -> np.ndarray:
        """Node values of the antiderivative vanishing at x = -1."""
        c = C.chebint(self.coefficients(values), lbnd=-1.0)
        return C.chebval(self.x, c)


@lru_cache(maxsize=16)
def _alias_mode(K: int) -> np.ndarray:
    g = ChebGrid(K)
    z = g.antiderivative(1 / g.rho)
    z = z - g.integrate(z) / 2
    z.setflags(write=False)
    return z


@lru_cache(maxsize=16)
def _fejer_weights(K: int) -> np.ndarray:
    theta = PI * (np.arange(K, dtype=WORK) + WORK(0.5)) / K
    l = np.arange(1, K // 2 + 1, dtype=WORK)
    s = np.cos(2 * np.outer(theta, l)) / (4 * l**2 - 1)
    w = (WORK(2) / K) * (1 - 2 * s.sum(axis=1))
    w.setflags(write=False)
    return w


@lru_cache(maxsize=16)
def _diff_matrix(K: int) -> np.ndarray:
    g = ChebGrid.__new__(ChebGrid)
    ChebGrid.__init__(g, K)
    x = g.x
    w = np.where(np.arange(K) % 2 == 0, 1, -1).astype(WORK) * np.sin(g.theta)
    dx = x[:, None] - x[None, :]
    np.fill_diagonal(dx, 1)
    D = (w[None, :] / w[:, None]) / dx
    np.fill_diagonal(D, 0.0)
    np.fill_diagonal(D, -D.sum(axis=1))
    D.setflags(write=False)
    return D
