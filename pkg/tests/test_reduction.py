import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shellsym.errors import ConfigurationError, DegenerateInputError, UnsupportedOperationError
from shellsym.reduction import (
    FOUR_PI,
    MC_SEED,
    ChartBump,
    ChartPoint,
    akappa_contains,
    chart_integrals,
    chart_to_4d,
    charts_n,
    equatorial_distance,
    forward_map_4d,
    in_chart_domain,
    map_special_points,
    mc_integrals,
    metric_4d,
    recover_from_profile,
    reference_bumps,
    shrinking_support_check,
    sphere_measure,
    verify_reduction_identity,
    weight_4d,
)
from shellsym.symmetry import GroupSpec, diagonal_rotation, tube_distances

S2 = 1 / math.sqrt(2)


def random_shell_points(rng, count, R):
    x = rng.standard_normal((count, 4))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    return x * rng.uniform(R - 1, R + 1, (count, 1))


# ---------------------------------------------------------------- chart map


def test_forward_map_reference_points():
    assert np.allclose(forward_map_4d([1.0, 0, 0, 0]), [0, 0, 1], atol=1e-15)
    assert np.allclose(forward_map_4d([S2, 0, S2, 0]), [S2, 0, S2], atol=1e-15)
    with pytest.raises(DegenerateInputError):
        forward_map_4d(np.zeros(4))
    with pytest.raises(ConfigurationError):
        forward_map_4d(np.zeros(3))


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-5, 5, allow_nan=False), min_size=4, max_size=4).filter(lambda v: np.linalg.norm(v) > 0.1), st.floats(0, 2 * math.pi))
def test_forward_map_invariant_under_circle(v, phi):
    x = np.asarray(v)
    y = diagonal_rotation(GroupSpec.gk4(1), phi) @ x
    assert np.allclose(forward_map_4d(y), forward_map_4d(x), atol=1e-10)


def test_forward_map_invariant_under_pair_swap():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((100, 4))
    assert np.allclose(forward_map_4d(x), forward_map_4d(x[:, [2, 3, 0, 1]]), atol=1e-12)


def test_chart_lands_in_cone_and_shell():
    rng = np.random.default_rng(2)
    c = forward_map_4d(random_shell_points(rng, 5000, 10.0))
    assert np.all(in_chart_domain(c, 10.0))


def test_chart_round_trip_is_exact():
    rng = np.random.default_rng(3)
    c = forward_map_4d(random_shell_points(rng, 10_000, 8.0))
    assert np.allclose(forward_map_4d(chart_to_4d(c)), c, atol=1e-13, rtol=0)


# ---------------------------------------------------------------- weight and metric


def test_weight_values_and_homogeneity():
    assert weight_4d(ChartPoint(0, 0, 1)) == pytest.approx(FOUR_PI)
    assert weight_4d((S2, 0, S2)) == pytest.approx(FOUR_PI * S2)
    c = np.array([0.3, -0.2, 1.7])
    assert weight_4d(3.5 * c) == pytest.approx(3.5 * weight_4d(c))


def test_metric_reference_values():
    assert np.allclose(metric_4d((0, 0, 1)), np.eye(3))
    a = metric_4d((1.0, 0, 1.0))
    assert np.allclose(a, np.diag([1, 2, 1]))
    assert np.allclose(np.sort(np.linalg.eigvalsh(a)), [1, 1, 2])
    with pytest.raises(DegenerateInputError):
        metric_4d((0, 0, 0))


def test_metric_ellipticity_bounds():
    rng = np.random.default_rng(4)
    c = forward_map_4d(random_shell_points(rng, 20_000, 6.0))
    z = rng.standard_normal((20_000, 3))
    ratio = np.einsum("ni,nij,nj->n", z, metric_4d(c), z) / (z**2).sum(axis=1)
    assert ratio.min() >= 1 - 1e-12 and ratio.max() <= 4 + 1e-12


def test_weighted_chart_volume_equals_shell_volume():
    # identity with u = 1: the weighted chart volume is the 4D shell volume
    R, n = 3.0, 180
    ax = (np.arange(n) + 0.5) / n
    h1 = 2 * (R + 1) / n
    h3 = (R + 1) / n
    Y1, Y2 = np.meshgrid(-(R + 1) + 2 * (R + 1) * ax, -(R + 1) + 2 * (R + 1) * ax, indexing="ij")
    total = 0.0
    for r1 in (R + 1) * ax:
        pts = np.column_stack([Y1.ravel(), Y2.ravel(), np.full(Y1.size, r1)])
        keep = in_chart_domain(pts, R)
        total += weight_4d(pts[keep]).sum() * h1 * h1 * h3
    exact = math.pi**2 / 2 * ((R + 1) ** 4 - (R - 1) ** 4)
    assert total == pytest.approx(exact, rel=1e-2)


# ---------------------------------------------------------------- recovery


def test_recover_constant_profile():
    rng = np.random.default_rng(5)
    x = random_shell_points(rng, 100, 10.0)
    assert np.all(recover_from_profile(lambda c: np.ones(c.shape[0]), x) == 1.0)


def test_recovered_bump_lives_near_polar_orbit():
    R = 10.0
    bump = ChartBump((0.0, 0.0, R), 0.8)
    rng = np.random.default_rng(6)
    x = random_shell_points(rng, 20_000, R)
    u = recover_from_profile(bump.value, x)
    support = x[u > 0]
    assert support.shape[0] > 0
    d = tube_distances(GroupSpec.gk4(1), np.array([R, 0, 0, 0]), support)
    assert d.max() <= 0.8 + 1e-9


# ---------------------------------------------------------------- special points and A_kappa


def test_special_points():
    sp = map_special_points(10.0)
    assert np.allclose(sp.N, [0, 0, 10])
    assert np.allclose(sp.M, [10 * S2, 0, 10 * S2])
    assert np.allclose(forward_map_4d([10.0, 0, 0, 0]), sp.N)
    assert np.allclose(map_special_points(10.0, n=6).N0, [0, 0, 0, 0, 10])
    with pytest.raises(ConfigurationError):
        map_special_points(1.5)


def test_akappa_membership():
    sp = map_special_points(10.0)
    assert akappa_contains(0.2, sp.M)
    assert not akappa_contains(0.2, sp.N)
    for bad in (0.0, 0.8):
        with pytest.raises(ConfigurationError):
            akappa_contains(bad, sp.M)


def test_equatorial_distance_matches_sampled_nearest_point():
    # the equal-norm set is invariant under independent pair rotations, so the
    # nearest point is found in the (|pair 1|, |pair 2|) plane along the diagonal
    rng = np.random.default_rng(7)
    diag = np.linspace(0, 12, 100_000)
    for x in random_shell_points(rng, 100, 5.0):
        s, t = math.hypot(x[0], x[1]), math.hypot(x[2], x[3])
        best = np.sqrt((diag - s) ** 2 + (diag - t) ** 2).min()
        exact = equatorial_distance(x)
        assert exact <= best + 1e-12
        assert best == pytest.approx(exact, rel=1e-3, abs=1e-6)


def test_akappa_matches_equatorial_distance():
    rng = np.random.default_rng(8)
    x = random_shell_points(rng, 5000, 10.0)
    kappa = 0.3
    direct = equatorial_distance(x) <= kappa * np.linalg.norm(x, axis=1)
    assert np.array_equal(akappa_contains(kappa, forward_map_4d(x)), direct)


# ---------------------------------------------------------------- higher-dimensional charts


def test_sphere_measure():
    assert sphere_measure(2) == pytest.approx(2 * math.pi)
    assert sphere_measure(3) == pytest.approx(4 * math.pi)


def test_charts_n_weights_and_metrics():
    spec = GroupSpec.gk_prime(2, 7)
    n2 = charts_n(spec, "N2")
    c2 = np.array([0.1, 0.2, 0.3, 0.4, 1.0])
    assert n2.weight(c2) == pytest.approx(sphere_measure(3))
    assert np.allclose(n2.metric(c2), np.eye(5))
    n1, n3 = charts_n(spec, "N1"), charts_n(spec, "N3")
    c3 = np.array([0.2, -0.1, 1.5, 2.0])
    assert n3.weight(c3) == pytest.approx(FOUR_PI * 1.5 * n2.weight(np.array([0, 0, 0, 0, 2.0])))
    assert n1.weight(np.array([0.2, -0.1, 1.5, 0, 0, 0])) == pytest.approx(FOUR_PI * 1.5)
    with pytest.raises(UnsupportedOperationError):
        charts_n(GroupSpec.gk4(2), "N1")
    with pytest.raises(ConfigurationError):
        charts_n(spec, "N4")


def test_chart_n3_integrates_tail_sphere_volume():
    # weighted N3 forward map of points with only r1 and r0 set
    spec = GroupSpec.gk_prime(2, 6)
    chart = charts_n(spec, "N3")
    x = np.array([[0.0, 0, 2.0, 0, 0.6, 0.8]])
    c = chart.forward(x)
    assert np.allclose(c, [[0, 0, 2.0, 1.0]])
    assert chart.weight(c[0]) == pytest.approx(FOUR_PI * 2.0 * 2 * math.pi)


# ---------------------------------------------------------------- identity check


def test_bump_reaching_face_needs_reflection_symmetry():
    with pytest.raises(ConfigurationError):
        verify_reduction_identity(ChartBump((6.9, 0.5, 7.0), 0.6), 10.0, samples=1000)


def test_reference_bumps_cover_special_points():
    bumps = reference_bumps(10.0)
    sp = map_special_points(10.0)
    assert len(bumps) == 5
    assert np.allclose(bumps[0].center, sp.M) and np.allclose(bumps[3].center, sp.N)
    for b in reference_bumps(6.0):
        assert in_chart_domain(np.asarray(b.center), 6.0)


def test_polar_bump_identity_mass():
    bump = ChartBump((0.0, 0.0, 10.0), 0.9)
    rep = verify_reduction_identity(bump, 10.0, ps=[2.0], qs=[2.0], samples=1_000_000, seed=MC_SEED)
    assert rep.relErrors["mass_q=2"] <= 0.02
    assert rep.relErrors["energy_p=2"] <= 0.03


def test_mc_is_deterministic():
    bump = reference_bumps(10.0)[1]
    a = mc_integrals(bump, 10.0, [2.0], [2.0], 20_000, seed=9)
    b = mc_integrals(bump, 10.0, [2.0], [2.0], 20_000, seed=9)
    assert a == b


def test_chart_quadrature_converges():
    bump = reference_bumps(10.0)[2]
    coarse = chart_integrals(bump, 10.0, [2.0], [2.0], n=80)
    fine = chart_integrals(bump, 10.0, [2.0], [2.0], n=160)
    assert coarse[0][2.0] == pytest.approx(fine[0][2.0], rel=5e-3)
    assert coarse[1][2.0] == pytest.approx(fine[1][2.0], rel=5e-3)


@pytest.mark.slow
def test_shrinking_support_ratios_tend_to_one():
    rows = shrinking_support_check((10.0, 20.0, 40.0), samples=400_000)
    errs = [max(abs(r.mass_ratio - 1), abs(r.energy_ratio - 1)) for r in rows]
    assert errs[-1] <= 0.03
    # monotone within noise
    for a, b, r in zip(errs, errs[1:], rows[1:]):
        assert b <= a + 3 * max(r.mass_stderr, r.energy_stderr)
