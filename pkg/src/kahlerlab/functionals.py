"""Energy functionals defined by their first variations and integrated along paths.

Every functional ``F`` is stored as a gradient density ``G`` with

    dF/ds = int G(phi_s) phidot_s omega_{phi_s}^n / n!

and its value at the end of a path is the integral of that one-form, evaluated
by composite Simpson quadrature in the path parameter.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import simpson

from .errors import UnsupportedTwist
from .kahler import assemble_metric

KINDS = ("I", "J_chi", "iota", "K-energy", "E_t", "E_K")


@dataclass(frozen=True)
class FunctionalKind:
    tag: str
    t: float | None = None
    twist: object = None

    def __post_init__(self):
        if self.tag not in KINDS:
            raise ValueError(f"unknown functional {self.tag!r}; expected one of {KINDS}")
        if self.tag == "E_t":
            if self.t is None or not 0.0 <= self.t <= 1.0:
                raise ValueError("E_t needs a parameter t in [0, 1]")


def _background(obj):
    return getattr(obj, "bg", obj)


def _twist_potential(s, twist):
    a = 0.0 if twist is None else float(getattr(twist, "a", 0.0))
    if a == 0.0:
        return 0.0
    if s.backend == "torus":
        raise UnsupportedTwist("the torus carries no nonzero holomorphy potentials")
    xm = s.moment_map()
    return a * (xm - s.integrate(xm) / s.volume())


def functional_gradient(kind: FunctionalKind, s) -> np.ndarray:
    """Gradient density of ``kind`` at the metric state ``s``."""
    n = s.n
    tag = kind.tag
    if tag == "I":
        return np.ones_like(np.asarray(s.R))
    if tag == "J_chi":
        return np.asarray(s.trace_reference())
    if tag == "iota":
        return np.asarray(s.trace_reference()) - n
    scal = np.asarray(s.R) - s.r_bar
    if tag == "K-energy":
        return -scal
    if tag == "E_t":
        return -kind.t * scal + (1 - kind.t) * (np.asarray(s.trace_reference()) - n)
    return -scal + _twist_potential(s, kind.twist)


class PotentialPath:
    """Samples ``(s_j, phi_j, phidot_j)`` of a smooth path of potentials, s in [0, 1].

    ``phidot`` may be supplied; otherwise it is obtained by fourth-order
    finite differences in ``s`` (uniform samples required).
    """

    def __init__(self, background, s, phis, phidots=None):
        self.background = _background(background)
        s = np.asarray(s, dtype=float)
        if s.ndim != 1 or len(s) < 5:
            raise ValueError("a path needs at least 5 samples")
        if s[0] != 0.0 or s[-1] != 1.0 or np.any(np.diff(s) <= 0):
            raise ValueError("path parameters must increase strictly from 0 to 1")
        self.s = s
        self.phis = [np.asarray(p) for p in phis]
        if len(self.phis) != len(s):
            raise ValueError("one potential per parameter sample")
        if phidots is None:
            phidots = _fd_derivative(s, self.phis)
        self.phidots = [np.asarray(p) for p in phidots]
        self._states = None

    @property
    def states(self):
        # assembling raises NonPositiveMetric for an inadmissible sample
        if self._states is None:
            self._states = [assemble_metric(self.background, p) for p in self.phis]
        return self._states

    @classmethod
    def from_function(cls, background, phi, phidot=None, samples: int = 65):
        s = np.linspace(0.0, 1.0, samples)
        phis = [phi(v) for v in s]
        dots = None if phidot is None else [phidot(v) for v in s]
        return cls(background, s, phis, dots)

    @classmethod
    def straight(cls, background, phi0, phi1, samples: int = 65):
        phi0 = np.asarray(phi0)
        phi1 = np.asarray(phi1)
        bg = _background(background)
        if bg.backend == "torus":
            phi0 = phi0.reshape(bg.grid.shape)
            phi1 = phi1.reshape(bg.grid.shape)
        d = phi1 - phi0
        return cls.from_function(bg, lambda v: phi0 + v * d, lambda v: d, samples)

    def reversed(self) -> "PotentialPath":
        return PotentialPath(self.background, 1.0 - self.s[::-1], self.phis[::-1],
                             [-d for d in self.phidots[::-1]])


def _fd_derivative(s, phis):
    h = np.diff(s)
    if not np.allclose(h, h[0], rtol=1e-12, atol=0):
        raise ValueError("finite-difference velocities need uniform samples")
    h = h[0]
    P = np.stack(phis)
    D = np.empty_like(P)
    D[2:-2] = (P[:-4] - 8 * P[1:-3] + 8 * P[3:-1] - P[4:]) / (12 * h)
    # one-sided fourth-order stencils at the two ends
    fwd = np.array([-25, 48, -36, 16, -3]) / (12 * h)
    for i in (0, 1):
        D[i] = np.tensordot(fwd, P[i:i + 5], axes=1)
    for i in (-1, -2):
        j = len(s) + i
        D[j] = -np.tensordot(fwd, P[j - 4:j + 1][::-1], axes=1)
    return list(D)


def _rates(kind, path):
    return np.array([float(np.real(st.integrate(functional_gradient(kind, st) * d)))
                     for st, d in zip(path.states, path.phidots)])


def functional_value(kind: FunctionalKind, path: PotentialPath) -> float:
    """Integral of the one-form of ``kind`` along ``path`` (value at the end minus start)."""
    return float(simpson(_rates(kind, path), x=path.s))


def functional_profile(kind: FunctionalKind, path: PotentialPath) -> np.ndarray:
    """Cumulative values at every sample (Simpson on pairs of intervals, trapezoid-free)."""
    rates = _rates(kind, path)
    out = np.zeros(len(path.s))
    for j in range(1, len(path.s)):
        if j == 1:
            # quadratic through the first three samples, integrated over [s0, s1]
            s0, s1, s2 = path.s[:3]
            c = np.polyfit(path.s[:3], rates[:3], 2)
            P = np.polyint(c)
            out[1] = np.polyval(P, s1) - np.polyval(P, s0)
        else:
            out[j] = simpson(rates[: j + 1], x=path.s[: j + 1])
    return out


def iota_second_derivative(path: PotentialPath, index: int, phiddot=None) -> float:
    """Second variation of iota at sample ``index``.

    ``int (phiddot - |d phidot|^2)(tr - n) + int g^{a mbar} g^{nu bbar} phidot_mbar phidot_nu omega_{a bbar}``;
    ``phiddot`` defaults to a central difference of the sampled velocities.
    """
    m = len(path.s)
    if phiddot is None:
        if index < 1 or index > m - 2:
            raise ValueError("need neighbouring samples for the second derivative")
        h0 = path.s[index] - path.s[index - 1]
        h1 = path.s[index + 1] - path.s[index]
        if not np.isclose(h0, h1, rtol=1e-12):
            raise ValueError("central differences need locally uniform samples")
        phiddot = (path.phidots[index + 1] - path.phidots[index - 1]) / (2 * h0)
    st = path.states[index]
    dot = path.phidots[index]
    tr = np.asarray(st.trace_reference()) - st.n
    grad2 = np.real(np.asarray(st.grad_pairing(dot, dot)))
    first = st.integrate((phiddot - grad2) * tr)
    second = st.integrate(np.real(np.asarray(st.raised_reference_pairing(dot))))
    return float(np.real(first + second))


def iota_hessian_second_term(path: PotentialPath, index: int) -> float:
    st = path.states[index]
    return float(np.real(st.integrate(np.real(np.asarray(st.raised_reference_pairing(path.phidots[index]))))))


def criticality_residual(kind: FunctionalKind, s) -> float:
    """``L^2(omega_phi)`` norm of the gradient density with its mean removed."""
    G = functional_gradient(kind, s)
    G = G - s.integrate(G) / s.volume()
    return float(np.sqrt(abs(np.real(s.integrate(np.abs(G) ** 2)))))


def matching_parameter(t: float) -> float:
    """``t'`` such that a solution of the path equation at ``t`` is critical for ``E_{t'}``.

    The path equation ``R - Rbar = (1 - t)(tr - n)`` is the vanishing of
    ``-t'(R - Rbar) + (1 - t')(tr - n)`` exactly when ``(1 - t')/t' = 1 - t``.
    """
    return 1.0 / (2.0 - t)


def energy_scan(path: PotentialPath, t: float, twist=None):
    """Rows ``(s, I, J_chi, iota, K-energy, E_t, E_K)`` of cumulative values along ``path``."""
    kinds = [FunctionalKind("I"), FunctionalKind("J_chi"), FunctionalKind("iota"),
             FunctionalKind("K-energy"), FunctionalKind("E_t", t=t), FunctionalKind("E_K", twist=twist)]
    cols = [functional_profile(k, path) for k in kinds]
    return np.column_stack([path.s] + cols)


def convexity_second_difference(scan: np.ndarray, t: float) -> np.ndarray:
    """Discrete second difference in s of ``E_K + (1 - t) iota`` from an energy scan."""
    g = scan[:, 6] + (1 - t) * scan[:, 3]
    h = np.diff(scan[:, 0])
    return (g[2:] - 2 * g[1:-1] + g[:-2]) / (h[1:] * h[:-1])
