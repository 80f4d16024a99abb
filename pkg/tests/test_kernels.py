import numpy as np
import pytest

from shellsym import _pykernels, kernels
from shellsym.grid import build_grid, energy_and_grad, mass_and_grad

pytestmark = pytest.mark.skipif(not kernels.compiled_available(), reason="compiled extension not built")


@pytest.fixture(scope="module")
def setup():
    grid = build_grid(6.0, 2, 0.25)
    rng = np.random.default_rng(0)
    ub = np.ascontiguousarray(grid.to_box(rng.standard_normal(grid.n_free)))
    return grid, ub


@pytest.mark.parametrize("p, eps", [(1.5, 1e-3), (2.0, 0.0), (3.0, 0.1)])
def test_energy_kernels_agree(setup, p, eps):
    grid, ub = setup
    s1, s2, s3 = grid.strides
    out = []
    for mod in (kernels._compiled, _pykernels):
        g = np.zeros_like(ub)
        e = mod.energy_grad(ub, grid.cell_base, s1, s2, s3, grid.a11, grid.a12, grid.a22, grid.cell_weight, grid.h, p, eps, g, True)
        out.append((e, g))
    assert out[0][0] == pytest.approx(out[1][0], rel=1e-12)
    assert np.allclose(out[0][1], out[1][1], rtol=1e-11, atol=1e-14 * np.abs(out[1][1]).max())


@pytest.mark.parametrize("q", [1.0, 2.0, 4.0])
def test_mass_kernels_agree(setup, q):
    grid, ub = setup
    s1, s2, s3 = grid.strides
    out = []
    for mod in (kernels._compiled, _pykernels):
        g = np.zeros_like(ub)
        m = mod.mass_grad(ub, grid.cell_base, s1, s2, s3, grid.cell_weight, q, g, True)
        out.append((m, g))
    assert out[0][0] == pytest.approx(out[1][0], rel=1e-12)
    assert np.allclose(out[0][1], out[1][1], rtol=1e-11, atol=1e-14 * np.abs(out[1][1]).max())


def test_gradients_match_finite_differences(setup):
    grid, _ = setup
    rng = np.random.default_rng(1)
    x = rng.random(grid.n_free)
    _, ge = energy_and_grad(grid, x, 2.5, 1e-2)
    _, gm = mass_and_grad(grid, x, 3.0)
    d = rng.standard_normal(grid.n_free)
    t = 1e-6
    fe = (energy_and_grad(grid, x + t * d, 2.5, 1e-2, False)[0] - energy_and_grad(grid, x - t * d, 2.5, 1e-2, False)[0]) / (2 * t)
    fm = (mass_and_grad(grid, x + t * d, 3.0, False)[0] - mass_and_grad(grid, x - t * d, 3.0, False)[0]) / (2 * t)
    assert ge @ d == pytest.approx(fe, rel=1e-6)
    assert gm @ d == pytest.approx(fm, rel=1e-6)
