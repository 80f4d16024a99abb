import math
from fractions import Fraction

import numpy as np
import pytest
from scipy.optimize import brentq

from shellsym.errors import ConfigurationError, DegenerateInputError, InfeasibleError
from shellsym.grid import GridFunction, build_grid, cell_masses, norm_q
from shellsym.minimizer import (
    DEFAULT_DELTA,
    MinimizeConfig,
    akappa_fraction,
    default_delta,
    enforce_mass_constraint,
    evaluate_J,
    fit_slope,
    friedrichs_ratio,
    init_bump,
    lagrange_and_residual,
    minimize,
    normalize,
    rescale_factor,
    rescale_to_solution,
)
from shellsym.reduction import ChartBump, akappa_contains, map_special_points
from shellsym.symmetry import GroupSpec


@pytest.fixture(scope="module")
def grid10():
    return build_grid(10.0, 2, 0.25)


@pytest.fixture(scope="module")
def run10(grid10):
    cfg = MinimizeConfig(p=2.0, q=4.0, k=2, R=10.0, kappa=0.2, delta=0.5, h=0.25)
    return minimize(cfg, grid=grid10)


# ---------------------------------------------------------------- config


def test_config_validation():
    with pytest.raises(ConfigurationError):
        MinimizeConfig(p=2.0, q=6.5)  # beyond the critical exponent 6
    with pytest.raises(ConfigurationError):
        MinimizeConfig(q=1.5)
    with pytest.raises(ConfigurationError):
        MinimizeConfig(kappa=0.8)
    with pytest.raises(ConfigurationError):
        MinimizeConfig(delta=1.0)
    with pytest.raises(ConfigurationError):
        MinimizeConfig(delta="half")
    assert MinimizeConfig(p=3.5, q=40.0).q == 40.0  # no upper limit once p >= 3


def test_delta_token_aliases():
    assert MinimizeConfig(delta="paper-default").delta == DEFAULT_DELTA
    assert MinimizeConfig(k=3).delta_value == pytest.approx(0.4)


def test_default_delta_values():
    assert default_delta(GroupSpec.gk4(2)) == Fraction(1, 2)
    assert default_delta(GroupSpec.gk_prime(3, 6)) == Fraction(1, 4)
    assert default_delta(GroupSpec.gk_tilde(7, 3), l=2) == Fraction(1, 8)
    with pytest.raises(ConfigurationError):
        default_delta(GroupSpec.gk_tilde(7, 3))


# ---------------------------------------------------------------- J and init


def test_J_is_scale_invariant(grid10):
    u = init_bump(grid10, map_special_points(10.0).M, 1.0, 4.0)
    assert evaluate_J(u.scaled(3.7), 2.0, 4.0) == pytest.approx(evaluate_J(u, 2.0, 4.0), rel=1e-12)
    with pytest.raises(DegenerateInputError):
        evaluate_J(GridFunction(grid10, np.zeros(grid10.n_free)), 2.0, 4.0)


def test_init_bump_normalized_and_inside_akappa(grid10):
    u = init_bump(grid10, map_special_points(10.0).M, 1.0, 4.0)
    assert norm_q(u, 4.0) == pytest.approx(1.0, abs=1e-12)
    assert akappa_fraction(u, 4.0, 0.2) == pytest.approx(1.0)
    J = evaluate_J(u, 2.0, 4.0)
    assert math.isfinite(J) and J > 0
    with pytest.raises(ConfigurationError):
        init_bump(grid10, (0.0, 0.0, 10.5), 1.0, 4.0)


def test_J_scales_like_power_of_R():
    vals = []
    for R in (10.0, 20.0):
        g = build_grid(R, 2, 0.25)
        vals.append(evaluate_J(init_bump(g, map_special_points(R).M, 1.0, 4.0), 2.0, 4.0))
    assert vals[1] / vals[0] == pytest.approx(math.sqrt(2.0), rel=0.15)


# ---------------------------------------------------------------- constraint


def test_enforce_constraint_identity_when_slack(grid10):
    u = init_bump(grid10, map_special_points(10.0).M, 1.0, 4.0)
    v, applied = enforce_mass_constraint(u, 4.0, 0.2, 0.5)
    assert not applied and v is u


def two_bump_function(grid, q):
    sp = map_special_points(grid.R)
    inside = init_bump(grid, sp.M, 0.9, q)
    outside = GridFunction.from_callable(grid, ChartBump(tuple(sp.N), 0.9).value)
    outside = normalize(outside, q)
    return normalize(GridFunction(grid, inside.values + outside.values), q)


def test_enforce_constraint_matches_bisection(grid10):
    q, kappa, delta = 4.0, 0.2, 0.25
    u = two_bump_function(grid10, q)
    assert akappa_fraction(u, q, kappa) == pytest.approx(0.5, abs=0.05)
    v, applied = enforce_mass_constraint(u, q, kappa, delta)
    assert applied
    assert akappa_fraction(v, q, kappa) >= 1 - delta - 1e-12
    assert akappa_fraction(v, q, kappa) == pytest.approx(1 - delta, abs=1e-10)

    # independent bisection on the scale factor
    out = ~akappa_contains(kappa, grid10.free_coords())
    inside_cells = akappa_contains(kappa, grid10.cell_center)

    def frac(s):
        m = cell_masses(GridFunction(grid10, np.where(out, s * u.values, u.values)), q)
        return m[inside_cells].sum() / m.sum()

    s_star = brentq(lambda s: frac(s) - (1 - delta), 0.0, 1.0, xtol=1e-15)
    expected = normalize(GridFunction(grid10, np.where(out, s_star * u.values, u.values)), q)
    assert np.allclose(v.values, expected.values, rtol=0, atol=1e-10 * np.abs(expected.values).max())
    m = cell_masses(u, q)
    closed = (delta / (1 - delta) * m[inside_cells].sum() / m[~inside_cells].sum()) ** (1 / q)
    assert closed == pytest.approx(s_star, abs=1e-10)


def test_enforce_constraint_infeasible(grid10):
    u = normalize(GridFunction.from_callable(grid10, ChartBump(tuple(map_special_points(10.0).N), 0.9).value), 4.0)
    with pytest.raises(InfeasibleError):
        enforce_mass_constraint(u, 4.0, 0.2, 0.5)


# ---------------------------------------------------------------- diagnostics


def test_random_function_has_large_residual(grid10):
    rng = np.random.default_rng(4)
    u = normalize(GridFunction(grid10, rng.random(grid10.n_free)), 4.0)
    lam, res = lagrange_and_residual(u, 2.0, 4.0)
    assert lam > 0 and res >= 0.1
    with pytest.raises(ConfigurationError):
        lagrange_and_residual(u.scaled(2.0), 2.0, 4.0)


def test_rescale_factor():
    assert rescale_factor(4.0, 2.0, 4.0) == pytest.approx(2.0)
    assert rescale_factor(1.0, 2.0, 3.0) == pytest.approx(1.0)
    c = rescale_factor(3.3, 2.0, 3.5)
    assert c**1.5 == pytest.approx(3.3)
    with pytest.raises(ConfigurationError):
        rescale_factor(1.0, 2.0, 2.0)
    with pytest.raises(ConfigurationError):
        rescale_factor(0.0, 2.0, 4.0)


def test_friedrichs_ratio_scale_invariant(grid10):
    u = init_bump(grid10, map_special_points(10.0).M, 1.0, 4.0)
    r = friedrichs_ratio(u, 10.0, 2.0, 4.0)
    assert r > 0
    assert friedrichs_ratio(u.scaled(5.0), 10.0, 2.0, 4.0) == pytest.approx(r, rel=1e-12)


def test_fit_slope_recovers_power_law():
    R = [6.0, 10.0, 14.0, 20.0]
    assert fit_slope(R, [3.2 * r**0.4321 for r in R]) == pytest.approx(0.4321, abs=1e-12)
    with pytest.raises(ConfigurationError):
        fit_slope([1.0], [1.0])


# ---------------------------------------------------------------- descent


def test_minimize_trace_is_nonincreasing(run10):
    _, rep = run10
    assert all(b <= a for a, b in zip(rep.J_trace, rep.J_trace[1:]))
    assert rep.converged and not rep.armijo_failure


def test_minimize_concentrates_at_equator(run10):
    u, rep = run10
    assert rep.concentration.tube_mass_fraction >= 0.9
    assert not rep.constraint_active
    assert rep.el_residual <= 1e-3
    assert rep.lam == pytest.approx(rep.J_final, rel=1e-9)
    assert norm_q(u, 4.0) == pytest.approx(1.0, abs=1e-10)


def test_solution_rescaling_keeps_relative_residual(run10):
    u, rep = run10
    v = rescale_to_solution(u, rep.lam, 2.0, 4.0)
    assert np.allclose(v.values, math.sqrt(rep.lam) * u.values)


def test_minimize_restart_is_stable(grid10, run10):
    _, rep = run10
    cfg = MinimizeConfig(p=2.0, q=4.0, k=2, R=10.0, kappa=0.2, delta=0.5, h=0.25, restart_noise=0.1, seed=11)
    _, rep2 = minimize(cfg, grid=grid10)
    assert abs(rep2.J_final - rep.J_final) / rep.J_final <= 0.05
