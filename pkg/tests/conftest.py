import numpy as np
import pytest

from kahlerlab.continuation import kernel_basis, make_problem, plain_newton
from kahlerlab.kahler import KahlerBackground
from kahlerlab.lattice import TorusGrid
from kahlerlab.sphere import SphereBackground, minimize_iota_chart
from kahlerlab.toric import MomentGrid, ToricPotential


def band_limited(grid, rng, band2=9, complex_valued=False):
    """Random trigonometric polynomial with |k|^2 <= band2 and decaying amplitudes."""
    r = int(np.sqrt(band2))
    ks = np.stack(np.meshgrid(*[np.arange(-r, r + 1)] * grid.ndim, indexing="ij"), -1).reshape(-1, grid.ndim)
    ks = ks[(ks ** 2).sum(1) <= band2]
    f = np.zeros(grid.shape, dtype=complex)
    for k in ks:
        arg = sum(kk * c for kk, c in zip(k, grid.coords))
        amp = rng.normal() + (1j * rng.normal() if complex_valued else 0.0)
        f = f + amp * np.exp(1j * arg) / (1 + (k ** 2).sum())
    return f if complex_valued else f.real


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def torus_path_setup():
    """psi_ref = 0.3 cos x on the N = 32 one-dimensional torus, with its cscK point."""
    grid = TorusGrid(1, 32)
    bg = KahlerBackground(grid, 0.3 * np.cos(grid.coords[0]))
    problem = make_problem(bg)
    phi, _ = plain_newton(problem, 1.0, np.zeros(problem.npts))
    phi1 = problem.normalize(phi)
    kb = kernel_basis(problem, phi1)
    return problem, phi1, kb


def _cp1_setup(K):
    grid = MomentGrid(K)
    u_ref = ToricPotential.from_function(grid, lambda x: 0.1 * x ** 3)
    bg = SphereBackground.from_toric(u_ref)
    c_star, phi1 = minimize_iota_chart(bg)
    problem = make_problem(bg)
    kb = kernel_basis(problem, phi1)
    return problem, phi1, kb, c_star


@pytest.fixture(scope="session")
def cp1_setup():
    return _cp1_setup(48)


@pytest.fixture(scope="session")
def cp1_setup_fine():
    return _cp1_setup(64)
