import math

import numpy as np
import pytest

from shellsym.errors import ConfigurationError, PreconditionError
from shellsym.grid import GridFunction, mass_and_grad
from shellsym.lemmas import (
    DETECTOR_FAMILIES,
    HUMP_CENTERS,
    CubePatch,
    CutoffBands,
    HumpTriple,
    MassField,
    ORProblem,
    classify_ladder,
    concentration_detect,
    cutoff_build,
    hump_destruct,
    hump_grid,
    hump_profile,
    metric_gradient_norms,
    or_bruteforce,
    or_epsilon_scan,
    or_min_corner,
    orbit_order_check,
    patch_energy,
    patch_mass,
    random_hump_triple,
    random_or_problems,
    random_smooth_patch,
    symmetrize,
    synthetic_family,
    vector_ineq_check,
    vector_ineq_violation,
)
from shellsym.grid import build_grid
from shellsym.reduction import ChartBump, map_special_points
from shellsym.symmetry import GroupSpec, diagonal_rotation

# ---------------------------------------------------------------- concave corner problem


def test_or_reference_instance():
    res = or_min_corner(ORProblem(1.0, 1.0, 2.0, 0.5, 0.5))
    assert res.f1 == pytest.approx(math.sqrt(2)) and res.f4 == pytest.approx(math.sqrt(2))
    assert res.minimum == pytest.approx(math.sqrt(2))
    assert res.pooled_value == pytest.approx(math.sqrt(2))
    assert res.exceeds_lower and res.lower == pytest.approx(1.0)
    assert or_bruteforce(ORProblem(1.0, 1.0, 2.0, 0.5, 0.5)).value == pytest.approx(math.sqrt(2), abs=1e-3)


def test_or_single_feasible_point_when_c_vanishes():
    prob = ORProblem(1.0, 1.0, 0.0, 0.5, 0.5)
    assert or_min_corner(prob).minimum == pytest.approx(math.sqrt(2))
    assert or_bruteforce(prob).value == pytest.approx(math.sqrt(2), abs=1e-12)


def test_or_minimum_is_min_of_c_corner_and_f4():
    rng = np.random.default_rng(0)
    for _ in range(200):
        A = rng.uniform(0.1, 3)
        B = A * rng.uniform(1, 3)
        C = B * rng.uniform(1.05, 4)
        r = rng.uniform(0.05, 0.95)
        res = or_min_corner(ORProblem(A, B, C, r, rng.uniform(0.05, 0.95)))
        assert res.minimum == pytest.approx(min(C ** (1 - r), res.f4), rel=1e-14)
        assert res.f4 <= (A + B) ** (1 - r) * (1 + 1e-14)


def test_or_invalid_problems():
    for args in [(0.0, 1.0, 2.0, 0.5), (2.0, 1.0, 3.0, 0.5), (1.0, 2.0, 1.5, 0.5), (1.0, 1.0, 2.0, 1.0)]:
        with pytest.raises(ConfigurationError):
            ORProblem(*args)
    with pytest.raises(ConfigurationError):
        or_min_corner(ORProblem(1.0, 1.0, 2.0, 0.5, eps=0.1))
    with pytest.raises(ConfigurationError):
        or_bruteforce(ORProblem(1.0, 1.0, 2.0, 0.5), grid_n=50)


def test_or_bruteforce_agrees_with_corners():
    for prob in random_or_problems(10, seed=3):
        corner = or_min_corner(prob)
        brute = or_bruteforce(prob, grid_n=400)
        assert abs(brute.value - corner.minimum) <= 1e-3
        assert corner.minimum > prob.B ** (1 - prob.r)


def test_or_epsilon_scan_converges_from_below():
    prob = ORProblem(1.0, 1.5, 3.0, 0.4)
    exact = or_min_corner(prob).minimum
    scan = or_epsilon_scan(prob, [0.1, 0.03, 0.01, 0.0], grid_n=200)
    vals = [v for _, v in scan]
    assert all(b >= a - 1e-9 for a, b in zip(vals, vals[1:]))
    assert vals[-1] == pytest.approx(exact, abs=1e-3)
    assert vals[-2] > prob.B ** (1 - prob.r)


# ---------------------------------------------------------------- hump reallocation


@pytest.fixture(scope="module")
def hgrid():
    return hump_grid()


def hump(grid, index, radius, amplitude):
    y1, y2, _ = HUMP_CENTERS[index]
    r1 = math.sqrt(grid.R**2 - y1 * y1 - y2 * y2)
    return GridFunction(grid, ChartBump((y1, y2, r1), radius, amplitude).value(grid.free_coords()))


def normalized_triple(grid, parts, p, q):
    total = sum(mass_and_grad(grid, f.values, q, want_grad=False)[0] for f in parts)
    return HumpTriple(*(f.scaled(total ** (-1.0 / q)) for f in parts), p, q)


def test_hump_profile_symmetric_case():
    p, q, E = 2.0, 4.0, 3.0
    f = hump_profile(0.0, E, E, 0.5, p, q)
    assert f(0.5) == pytest.approx(2 * E)
    assert f(0.0) == pytest.approx(2 ** (p / q) * E)
    assert f(0.0) < f(0.5)


def test_hump_symmetric_triple(hgrid):
    zero = GridFunction(hgrid, np.zeros(hgrid.n_free))
    b, c = hump(hgrid, 0, 0.8, 1.0), hump(hgrid, 2, 0.8, 1.0)
    mb, mc = (mass_and_grad(hgrid, f.values, 4.0, want_grad=False)[0] for f in (b, c))
    c = c.scaled((mb / mc) ** 0.25)
    try:
        res = hump_destruct(normalized_triple(hgrid, [zero, b, c], 2.0, 4.0))
    except PreconditionError:  # nearly equal ratios; the chart weight decides the order
        res = hump_destruct(normalized_triple(hgrid, [zero, c, b], 2.0, 4.0))
    assert res.t0 == pytest.approx(0.5, abs=1e-12)
    assert res.mass_error <= 1e-12
    assert res.strict_decrease and res.concave
    assert res.derivative_at_t0 >= -1e-6


def test_hump_random_triples(hgrid):
    rng = np.random.default_rng(5)
    for _ in range(10):
        res = hump_destruct(random_hump_triple(hgrid, rng))
        assert res.mass_error <= 1e-12
        assert res.strict_decrease and res.concave
        assert res.derivative_at_t0 >= -1e-6


def test_hump_bound_counterexample(hgrid):
    # sharp, strong b and broad, weak c: t0 close to 1 and the claimed bound fails
    zero = GridFunction(hgrid, np.zeros(hgrid.n_free))
    t = normalized_triple(hgrid, [zero, hump(hgrid, 1, 0.5, 10.0), hump(hgrid, 2, 1.0, 1.0)], 2.0, 2.5)
    res = hump_destruct(t)
    assert res.t0 > 0.95
    assert not res.bound_holds
    assert res.bound_lhs < res.bound_rhs
    assert res.strict_decrease and res.mass_error <= 1e-12


def test_hump_precondition_and_supports(hgrid):
    zero = GridFunction(hgrid, np.zeros(hgrid.n_free))
    t = normalized_triple(hgrid, [zero, hump(hgrid, 1, 0.6, 5.0), hump(hgrid, 2, 1.0, 1.0)], 2.0, 4.0)
    with pytest.raises(PreconditionError):
        hump_destruct(t)
    with pytest.raises(ConfigurationError):
        normalized_triple(hgrid, [zero, hump(hgrid, 1, 0.8, 1.0), hump(hgrid, 1, 0.5, 1.0)], 2.0, 4.0)


# ---------------------------------------------------------------- cut-off


def test_cutoff_bands_formula():
    bands = CutoffBands.from_radii(1.0, 4.0)
    assert (bands.inner, bands.zero_lo, bands.zero_hi, bands.outer) == pytest.approx((1.5, 2.0, 3.0, 3.5))
    d = np.array([0.0, 1.49, 2.0, 2.5, 3.0, 3.51, 10.0])
    assert np.allclose(bands.value(d), [1, 1, 0, 0, 0, 1, 1])
    with pytest.raises(ConfigurationError):
        CutoffBands.from_radii(2.0, 2.0)


def test_cutoff_on_grid_respects_bands_and_slope():
    R, h = 10.0, 0.25
    grid = build_grid(R, 2, h)
    spec = GroupSpec.gk4(2)
    sigma, bands = cutoff_build(grid, spec, map_special_points(R).M, 1.0, 4.0)
    assert sigma.values.min() >= 0.0 and sigma.values.max() <= 1.0
    assert metric_gradient_norms(sigma).max() <= 12.0 / 3.0 + 4 * h


def test_cutoff_rejects_mismatched_group():
    grid = build_grid(6.0, 2, 0.5)
    with pytest.raises(ConfigurationError):
        cutoff_build(grid, GroupSpec.gk4(3), map_special_points(6.0).M, 1.0, 2.0)
    with pytest.raises(ConfigurationError):
        cutoff_build(grid, GroupSpec.gk4(2), map_special_points(6.0).M, 2.0, 1.0)


# ---------------------------------------------------------------- symmetrization


def radial(P, r=1.5):
    return np.clip(1 - (P**2).sum(axis=1) / r**2, 0, None) ** 2


def test_radial_bump_is_fixed_point():
    v = CubePatch.from_callable(33, 0.25, radial)
    w = symmetrize(v)
    l2 = math.sqrt(((w.values - v.values) ** 2).sum() * v.h**3)
    assert l2 <= 2 * v.h
    assert np.max(np.abs(w.values - v.values)) <= 1e-12


def test_two_bumps_become_one_profile():
    f = lambda P: radial(P - np.array([-2.0, 0, 0]), 1.0) + radial(P - np.array([2.0, 0, 0]), 1.0)  # noqa: E731
    v = CubePatch.from_callable(33, 0.25, f)
    w = symmetrize(v)
    for q in (1.0, 2.0, 4.0):
        assert patch_mass(w, q) == pytest.approx(patch_mass(v, q), rel=1e-10)
    # radially nonincreasing about the centre
    P = w.coords().reshape(-1, 3)
    order = np.argsort(np.linalg.norm(P, axis=1), kind="stable")
    assert np.all(np.diff(w.values.ravel()[order]) <= 1e-15)


def test_symmetrization_does_not_raise_energy():
    rng = np.random.default_rng(9)
    for _ in range(5):
        v = random_smooth_patch(rng)
        assert patch_energy(symmetrize(v), 2.0) <= patch_energy(v, 2.0) * 1.01


def test_symmetrize_rejects_negative_values():
    with pytest.raises(PreconditionError):
        symmetrize(CubePatch(-np.ones((5, 5, 5)), 0.5))


# ---------------------------------------------------------------- detector


@pytest.fixture(scope="module")
def families():
    return {kind: synthetic_family(kind) for kind in DETECTOR_FAMILIES}


def test_detector_concentrating(families):
    seq, tracks = families["concentrating"]
    (v,) = concentration_detect(seq, tracks, GroupSpec.gk4(2))
    assert v.kind == "concentration" and v.lam == pytest.approx(1.0, abs=0.05)


def test_detector_concentrating_along_orbit(families):
    seq, tracks = families["concentrating"]
    spec = GroupSpec.gk4(2)
    moved = [[diagonal_rotation(spec, 0.3 * j) @ c for j, c in enumerate(tracks[0])]]
    (v,) = concentration_detect(seq, moved, spec)
    assert v.kind == "concentration" and v.lam == pytest.approx(1.0, abs=0.05)


def test_detector_split(families):
    seq, tracks = families["split"]
    verdicts = concentration_detect(seq, tracks, GroupSpec.gk4(2))
    assert len(verdicts) == 2
    for v in verdicts:
        assert v.kind == "concentration" and v.lam == pytest.approx(0.5, abs=0.05)


def test_detector_vanishing(families):
    seq, tracks = families["vanishing"]
    (v,) = concentration_detect(seq, tracks, GroupSpec.gk4(2))
    assert v.kind == "vanishing"


def test_detector_flags_nonmonotone_table():
    H = np.array([[0.5, 0.4, 0.9, 1, 1]] * 3)
    assert classify_ladder(H).kind == "inconclusive"
    with pytest.raises(ConfigurationError):
        classify_ladder(H[:2])


def test_detector_euclidean_mode():
    pts = np.array([[0.0, 0, 0, 0], [0.5, 0, 0, 0], [30.0, 0, 0, 0]])
    seq = [MassField(pts, np.array([0.5, 0.5, 0.0]), 10.0)] * 3
    (v,) = concentration_detect(seq, [[np.zeros(4)] * 3], None)
    assert v.kind == "concentration" and v.lam == pytest.approx(1.0)


# ---------------------------------------------------------------- vector inequality


def test_vector_inequality_edge_cases():
    a = np.random.default_rng(1).standard_normal((100, 3))
    assert abs(vector_ineq_violation(a, np.zeros_like(a), 2.5)) <= 1e-12
    assert vector_ineq_violation(np.zeros_like(a), a, 2.5) < 0


def test_vector_inequality_holds_for_s2():
    assert vector_ineq_check(2.0, trials=1_000_000) <= 0.0
    assert vector_ineq_check(1.3, trials=100_000) <= 0.0
    with pytest.raises(ConfigurationError):
        vector_ineq_check(1.0)


# ---------------------------------------------------------------- orbit ordering


def test_orbit_order_holds_above_threshold():
    rep = orbit_order_check(GroupSpec.gk_tilde(7, 3), 0.1, 2, samples=20_000)
    assert rep.ok
    assert rep.int_reference == pytest.approx(42 * math.pi)
    assert rep.numeric_max_rel_error <= 5e-3


def test_orbit_order_below_threshold_reports_without_error():
    rep = orbit_order_check(GroupSpec.gk_tilde(2, 3), 0.1, 2, samples=20_000, numeric_subsample=5)
    assert isinstance(rep.ok, bool)


def test_orbit_order_refuses_sparse_sampling():
    with pytest.raises(ConfigurationError):
        orbit_order_check(GroupSpec.gk_tilde(7, 3), 0.1, 2, samples=1000)
    with pytest.raises(ConfigurationError):
        orbit_order_check(GroupSpec.gk_tilde(7, 3), 0.9, 2)
