"""Reduction of circle-invariant functions on a spherical shell in R^4 to a 3D chart.

A point x = (z1, z2) of R^4 (two complex pairs) is sent to chart
coordinates (y1, y2, r1): the pairs are ordered so that |z1| <= |z2|,
r1 = |z2|, and y = z1 * conj(z2) / |z2| is the smaller pair seen in the
frame that turns the larger pair onto the positive first axis.  Integrals
transform with the weight 4*pi*r1 and gradients with the metric
:func:`metric_4d`.

For n >= 6 three further charts collapse the body, the tail or both.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigurationError, DegenerateInputError, UnsupportedOperationError
from .symmetry import Family, GroupSpec

FOUR_PI = 4.0 * math.pi
SQRT2 = math.sqrt(2.0)
MC_SEED = 0x5EED_2024_0001


@dataclass(frozen=True)
class ChartPoint:
    y1: float
    y2: float
    r1: float
    r0: float | None = None

    def as_array(self) -> np.ndarray:
        vals = [self.y1, self.y2, self.r1] + ([self.r0] if self.r0 is not None else [])
        return np.array(vals, dtype=float)


def _chart_array(cp) -> np.ndarray:
    if isinstance(cp, ChartPoint):
        return cp.as_array()
    return np.asarray(cp, dtype=float)


# ---------------------------------------------------------------- 4D chart


def forward_map_4d(x) -> np.ndarray:
    """Chart coordinates (y1, y2, r1) of x; accepts one point or an (N, 4) array."""
    arr = np.asarray(x, dtype=float)
    single = arr.ndim == 1
    pts = np.atleast_2d(arr)
    if pts.shape[-1] != 4:
        raise ConfigurationError("forward_map_4d expects points of R^4")
    n12 = pts[:, 0] ** 2 + pts[:, 1] ** 2
    n34 = pts[:, 2] ** 2 + pts[:, 3] ** 2
    if np.any(n12 + n34 == 0.0):
        raise DegenerateInputError("the origin has no chart image")
    swap = n12 > n34
    small = np.where(swap[:, None], pts[:, 2:4], pts[:, 0:2])
    large = np.where(swap[:, None], pts[:, 0:2], pts[:, 2:4])
    r1 = np.hypot(large[:, 0], large[:, 1])
    c = large[:, 0] / r1
    s = large[:, 1] / r1
    # rotate the small pair by the angle that takes the large pair to (r1, 0)
    y1 = c * small[:, 0] + s * small[:, 1]
    y2 = -s * small[:, 0] + c * small[:, 1]
    out = np.column_stack([y1, y2, r1])
    return out[0] if single else out


def chart_to_4d(c) -> np.ndarray:
    """A representative point of R^4 whose chart image is c (phase of the large pair set to 0)."""
    arr = np.atleast_2d(_chart_array(c))
    out = np.column_stack([arr[:, 0], arr[:, 1], arr[:, 2], np.zeros(arr.shape[0])])
    return out[0] if np.ndim(_chart_array(c)) == 1 else out


def weight_4d(c) -> np.ndarray | float:
    arr = _chart_array(c)
    w = FOUR_PI * arr[..., 2]
    return float(w) if np.ndim(w) == 0 else w


def metric_entries(c) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """The (1,1), (1,2), (2,2) entries of the metric; the third axis is decoupled with entry 1."""
    arr = _chart_array(c)
    y1, y2, r1 = arr[..., 0], arr[..., 1], arr[..., 2]
    if np.any(r1 <= 0.0):
        raise DegenerateInputError("metric is singular at r1 = 0")
    inv = 1.0 / (r1 * r1)
    return 1.0 + y2 * y2 * inv, -y1 * y2 * inv, 1.0 + y1 * y1 * inv


def metric_4d(c) -> np.ndarray:
    a11, a12, a22 = metric_entries(c)
    a11, a12, a22 = np.broadcast_arrays(a11, a12, a22)
    out = np.zeros(a11.shape + (3, 3))
    out[..., 0, 0] = a11
    out[..., 0, 1] = a12
    out[..., 1, 0] = a12
    out[..., 1, 1] = a22
    out[..., 2, 2] = 1.0
    return out


def recover_from_profile(v: Callable[[np.ndarray], np.ndarray], x) -> np.ndarray | float:
    """u(x) = v(chart image of x)."""
    val = v(forward_map_4d(x))
    return float(val) if np.ndim(val) == 0 else val


def in_chart_domain(c, R: float) -> np.ndarray:
    arr = _chart_array(c)
    s2 = arr[..., 0] ** 2 + arr[..., 1] ** 2
    r2 = arr[..., 2] ** 2
    return (arr[..., 2] >= np.sqrt(s2)) & (s2 + r2 > (R - 1.0) ** 2) & (s2 + r2 < (R + 1.0) ** 2)


@dataclass(frozen=True)
class SpecialPoints:
    N: np.ndarray
    M: np.ndarray
    N0: np.ndarray | None = None


def map_special_points(R: float, n: int = 4) -> SpecialPoints:
    if not R > 2:
        raise ConfigurationError("layer radius must exceed 2")
    N = forward_map_4d(np.array([R, 0.0, 0.0, 0.0]))
    M = forward_map_4d(np.array([R / SQRT2, 0.0, R / SQRT2, 0.0]))
    N0 = None
    if n == 6:
        # tail-collapsing chart coordinates (x1..x4, r0)
        N0 = np.array([0.0, 0.0, 0.0, 0.0, R])
    return SpecialPoints(N, M, N0)


# ---------------------------------------------------------------- A_kappa


def equatorial_distance(x) -> np.ndarray | float:
    """Distance from x in R^4 to the cone of points with equal pair norms: |s - t| / sqrt(2)."""
    arr = np.asarray(x, dtype=float)
    s = np.hypot(arr[..., 0], arr[..., 1])
    t = np.hypot(arr[..., 2], arr[..., 3])
    d = np.abs(s - t) / SQRT2
    return float(d) if np.ndim(d) == 0 else d


def check_kappa(kappa: float) -> None:
    if not (0.0 < kappa < 1.0 / SQRT2):
        raise ConfigurationError(f"kappa must lie in (0, 1/sqrt(2)) so that N*R stays outside A_kappa; got {kappa}")


def akappa_contains(kappa: float, c) -> np.ndarray | bool:
    check_kappa(kappa)
    arr = _chart_array(c)
    s = np.hypot(arr[..., 0], arr[..., 1])
    r1 = arr[..., 2]
    inside = (r1 - s) / SQRT2 <= kappa * np.sqrt(r1 * r1 + s * s)
    return bool(inside) if np.ndim(inside) == 0 else inside


# ---------------------------------------------------------------- n >= 6 charts


def sphere_measure(dim_ambient: int) -> float:
    """Surface measure of the unit sphere in R^dim_ambient."""
    return 2.0 * math.pi ** (dim_ambient / 2.0) / math.gamma(dim_ambient / 2.0)


@dataclass
class ReducedChart:
    variant: str
    n: int
    R: float | None
    forward: Callable[[np.ndarray], np.ndarray]
    weight: Callable[[np.ndarray], np.ndarray]
    metric: Callable[[np.ndarray], np.ndarray]
    weight_degree: int
    notes: list[str] = field(default_factory=list)


def _block(a: np.ndarray, extra: int) -> np.ndarray:
    out = np.zeros(a.shape[:-2] + (3 + extra, 3 + extra))
    out[..., :3, :3] = a
    for j in range(extra):
        out[..., 3 + j, 3 + j] = 1.0
    return out


def charts_n(spec: GroupSpec, variant: str, R: float | None = None) -> ReducedChart:
    if spec.family is Family.GK4 or spec.n < 6:
        raise UnsupportedOperationError("body/tail charts exist for n >= 6 only")
    n = spec.n
    tail = n - 4
    area = sphere_measure(tail)
    variant = variant.upper()

    if variant == "N1":

        def fwd(x):
            x = np.atleast_2d(np.asarray(x, dtype=float))
            return np.hstack([forward_map_4d(x[:, :4]), x[:, 4:]])

        def wt(c):
            return FOUR_PI * _chart_array(c)[..., 2]

        def met(c):
            return _block(metric_4d(_chart_array(c)[..., :3]), tail)

        return ReducedChart("N1", n, R, fwd, wt, met, 1)
    if variant == "N2":

        def fwd(x):
            x = np.atleast_2d(np.asarray(x, dtype=float))
            return np.hstack([x[:, :4], np.linalg.norm(x[:, 4:], axis=1)[:, None]])

        def wt(c):
            return area * _chart_array(c)[..., 4] ** (n - 5)

        def met(c):
            arr = _chart_array(c)
            return np.broadcast_to(np.eye(5), arr.shape[:-1] + (5, 5)).copy()

        return ReducedChart("N2", n, R, fwd, wt, met, n - 5)
    if variant == "N3":

        def fwd(x):
            x = np.atleast_2d(np.asarray(x, dtype=float))
            return np.hstack([forward_map_4d(x[:, :4]), np.linalg.norm(x[:, 4:], axis=1)[:, None]])

        def wt(c):
            arr = _chart_array(c)
            return FOUR_PI * arr[..., 2] * area * arr[..., 3] ** (n - 5)

        def met(c):
            return _block(metric_4d(_chart_array(c)[..., :3]), 1)

        return ReducedChart("N3", n, R, fwd, wt, met, n - 4)
    raise ConfigurationError(f"unknown chart variant {variant!r}; expected N1, N2 or N3")


# ---------------------------------------------------------------- test functions and MC identity check


@dataclass(frozen=True)
class ChartBump:
    """v(c) = amplitude * (1 - |c - center|^2 / radius^2)_+^2 on the chart."""

    center: tuple[float, float, float]
    radius: float
    amplitude: float = 1.0

    def value(self, c: np.ndarray) -> np.ndarray:
        d2 = ((np.asarray(c)[..., :3] - np.asarray(self.center)) ** 2).sum(axis=-1) / self.radius**2
        return self.amplitude * np.clip(1.0 - d2, 0.0, None) ** 2

    def grad(self, c: np.ndarray) -> np.ndarray:
        diff = np.asarray(c)[..., :3] - np.asarray(self.center)
        d2 = (diff**2).sum(axis=-1) / self.radius**2
        f = np.clip(1.0 - d2, 0.0, None)
        return (-4.0 * self.amplitude * f / self.radius**2)[..., None] * diff


@dataclass
class ReductionReport:
    bump: ChartBump
    R: float
    samples: int
    lhsQ: dict[float, float]
    rhsQ: dict[float, float]
    lhsP: dict[float, float]
    rhsP: dict[float, float]
    errQ: dict[float, float]
    errP: dict[float, float]
    relErrors: dict[str, float]

    def max_errors(self) -> tuple[float, float]:
        return max(self.relErrors[f"mass_q={q:g}"] for q in self.lhsQ), max(
            self.relErrors[f"energy_p={p:g}"] for p in self.lhsP
        )


def _check_bump(bump: ChartBump, R: float) -> None:
    c = np.asarray(bump.center, dtype=float)
    s0 = math.hypot(c[0], c[1])
    if bump.radius <= 0:
        raise ConfigurationError("bump radius must be positive")
    touches_face = (c[2] - s0) / SQRT2 < bump.radius
    if touches_face and abs(c[1]) > 1e-12:
        raise ConfigurationError("a bump reaching the fold face must be centred on y2 = 0 to give a continuous function")


def _sample_box(bump: ChartBump, R: float):
    c = np.asarray(bump.center, dtype=float)
    s0 = math.hypot(c[0], c[1])
    rho = bump.radius
    small = (max(0.0, s0 - rho), min(s0 + rho, R + 1.0))
    large = (max(0.0, c[2] - rho), min(c[2] + rho, R + 1.0))
    theta0 = math.atan2(c[1], c[0]) if s0 > 0 else 0.0
    w = math.asin(rho / s0) + 1e-3 if s0 > rho else math.pi
    if w >= math.pi:
        windows = [(-math.pi, math.pi)]
    elif abs(theta0) <= w:
        windows = [(-abs(theta0) - w, abs(theta0) + w)]
    else:
        windows = [(theta0 - w, theta0 + w), (-theta0 - w, -theta0 + w)]
    return small, large, windows


def _radial(u: np.ndarray, lo: float, hi: float) -> np.ndarray:
    return np.sqrt(lo * lo + u * (hi * hi - lo * lo))


def mc_integrals(
    bump: ChartBump,
    R: float,
    ps: Sequence[float],
    qs: Sequence[float],
    samples: int,
    seed: int = MC_SEED,
    block: int = 100_000,
) -> tuple[dict, dict, dict, dict]:
    """4D Monte-Carlo integrals of |u|^q and |grad u|^p for u recovered from the bump.

    The smaller and larger pair radii are drawn with density proportional to
    the radius over the bump's radial support, stratified on a 32 x 32 grid,
    and either pair may be the smaller one.  The relative phase is drawn from
    windows that contain the angular support.  The gradient uses central
    differences in R^4.
    """
    if samples < 10_000:
        raise ConfigurationError("at least 10^4 Monte-Carlo samples are required")
    _check_bump(bump, R)
    (slo, shi), (tlo, thi), windows = _sample_box(bump, R)
    wlen = sum(b - a for a, b in windows)
    volume = 2.0 * 0.5 * (shi * shi - slo * slo) * 0.5 * (thi * thi - tlo * tlo) * 2.0 * math.pi * wlen
    rng = np.random.default_rng(seed)
    strata = 32
    fd = 1e-6 * R
    sumsQ: dict = {q: [] for q in qs}
    sumsP: dict = {p: [] for p in ps}
    sqQ: dict = {q: [] for q in qs}
    sqP: dict = {p: [] for p in ps}
    done = 0
    while done < samples:
        nb = min(block, samples - done)
        cell = np.arange(done, done + nb) % (strata * strata)
        i_s, i_t = cell // strata, cell % strata
        s = _radial((i_s + rng.random(nb)) / strata, slo, shi)
        t = _radial((i_t + rng.random(nb)) / strata, tlo, thi)
        swap = rng.random(nb) < 0.5
        a = np.where(swap, t, s)
        b = np.where(swap, s, t)
        alpha = rng.uniform(0.0, 2.0 * math.pi, nb)
        pick = rng.random(nb) * wlen
        delta = np.empty(nb)
        acc = 0.0
        for wa, wb in windows:
            sel = (pick >= acc) & (pick < acc + (wb - wa))
            delta[sel] = wa + (pick[sel] - acc)
            acc += wb - wa
        beta = alpha - delta
        x = np.column_stack([a * np.cos(alpha), a * np.sin(alpha), b * np.cos(beta), b * np.sin(beta)])
        r2 = a * a + b * b
        # each branch only counts points whose smaller pair is the one drawn as small
        inside = (r2 > (R - 1.0) ** 2) & (r2 < (R + 1.0) ** 2) & (s <= t)
        u = bump.value(forward_map_4d(x))
        grad = np.empty((nb, 4))
        for i in range(4):
            e = np.zeros(4)
            e[i] = fd
            grad[:, i] = (bump.value(forward_map_4d(x + e)) - bump.value(forward_map_4d(x - e))) / (2 * fd)
        gn = np.linalg.norm(grad, axis=1)
        for q in qs:
            vals = np.where(inside, np.abs(u) ** q, 0.0)
            sumsQ[q].append(math.fsum(vals))
            sqQ[q].append(math.fsum(vals * vals))
        for p in ps:
            vals = np.where(inside, gn**p, 0.0)
            sumsP[p].append(math.fsum(vals))
            sqP[p].append(math.fsum(vals * vals))
        done += nb

    def finish(sums, sqs):
        mean = {}
        err = {}
        for key in sums:
            m1 = math.fsum(sums[key]) / samples
            m2 = math.fsum(sqs[key]) / samples
            mean[key] = volume * m1
            err[key] = volume * math.sqrt(max(m2 - m1 * m1, 0.0) / samples)
        return mean, err

    lq, eq = finish(sumsQ, sqQ)
    lp, ep = finish(sumsP, sqP)
    return lq, lp, eq, ep


def _chart_cells(bump: ChartBump, R: float, n: int):
    c = np.asarray(bump.center, dtype=float)
    h = 2.0 * bump.radius / n
    ax = (np.arange(n) + 0.5) * h - bump.radius
    for i in range(n):
        g1 = c[0] + ax[i]
        G2, G3 = np.meshgrid(c[1] + ax, c[2] + ax, indexing="ij")
        pts = np.column_stack([np.full(G2.size, g1), G2.ravel(), G3.ravel()])
        keep = in_chart_domain(pts, R) & (((pts - c) ** 2).sum(axis=1) < bump.radius**2)
        yield pts[keep], h**3


def chart_integrals(
    bump: ChartBump,
    R: float,
    ps: Sequence[float],
    qs: Sequence[float],
    n: int = 160,
    frozen_at: np.ndarray | None = None,
) -> tuple[dict, dict]:
    """Midpoint quadrature of the weighted chart integrals (optionally with frozen weight and metric)."""
    accQ = {q: [] for q in qs}
    accP = {p: [] for p in ps}
    for pts, vol in _chart_cells(bump, R, n):
        if pts.shape[0] == 0:
            continue
        v = bump.value(pts)
        g = bump.grad(pts)
        if frozen_at is None:
            w = weight_4d(pts)
            a11, a12, a22 = metric_entries(pts)
        else:
            w = np.full(pts.shape[0], weight_4d(frozen_at))
            a11, a12, a22 = (np.full(pts.shape[0], e) for e in metric_entries(frozen_at))
        quad = a11 * g[:, 0] ** 2 + 2 * a12 * g[:, 0] * g[:, 1] + a22 * g[:, 1] ** 2 + g[:, 2] ** 2
        for q in qs:
            accQ[q].append(math.fsum(np.abs(v) ** q * w * vol))
        for p in ps:
            accP[p].append(math.fsum(quad ** (p / 2) * w * vol))
    return {q: math.fsum(a) for q, a in accQ.items()}, {p: math.fsum(a) for p, a in accP.items()}


def verify_reduction_identity(
    bump: ChartBump,
    R: float,
    ps: Sequence[float] = (2.0,),
    qs: Sequence[float] = (2.0,),
    samples: int = 1_000_000,
    seed: int = MC_SEED,
    quad_n: int = 160,
) -> ReductionReport:
    """Compare 4D Monte-Carlo integrals with weighted chart quadrature."""
    ps = [float(p) for p in ps]
    qs = [float(q) for q in qs]
    if min(ps + qs) < 1.0:
        raise ConfigurationError("exponents must be >= 1")
    lq, lp, eq, ep = mc_integrals(bump, R, ps, qs, samples, seed)
    rq, rp = chart_integrals(bump, R, ps, qs, quad_n)
    rel = {}
    for q in qs:
        rel[f"mass_q={q:g}"] = abs(lq[q] - rq[q]) / abs(rq[q])
    for p in ps:
        rel[f"energy_p={p:g}"] = abs(lp[p] - rp[p]) / abs(rp[p])
    return ReductionReport(bump, R, samples, lq, rq, lp, rp, eq, ep, rel)


@dataclass
class FreezeRow:
    R: float
    mass_ratio: float
    energy_ratio: float
    mass_stderr: float
    energy_stderr: float


def shrinking_support_check(
    R_list: Sequence[float] = (10.0, 20.0, 40.0),
    p: float = 2.0,
    q: float = 2.0,
    radius: float = 1.0,
    samples: int = 1_000_000,
    seed: int = MC_SEED,
    quad_n: int = 160,
) -> list[FreezeRow]:
    """Frozen-coefficient integral over the exact weighted integral for a unit bump at M*R."""
    rows = []
    for R in R_list:
        c = map_special_points(R).M
        bump = ChartBump(tuple(c), radius)
        lq, lp, eq, ep = mc_integrals(bump, R, [p], [q], samples, seed)
        fq, fp = chart_integrals(bump, R, [p], [q], quad_n, frozen_at=c)
        rows.append(FreezeRow(R, fq[q] / lq[q], fp[p] / lp[p], eq[q] / lq[q], ep[p] / lp[p]))
    return rows


_REFERENCE_BUMPS = (  # (centre at R = 10, radius)
    ("M", 0.8),
    ((3.0, 2.0, 8.5), 0.7),
    ((0.5, 0.0, 9.9), 0.6),
    ("N", 0.9),
    ((6.0, 0.0, 7.0), 0.8),
)


def reference_bumps(R: float = 10.0) -> list[ChartBump]:
    """Five test bumps: one at each special point and three off-axis ones.

    Off-axis centres keep their direction and their offset from the middle
    sphere |P| = R, so the set is defined for every R > 2.
    """
    sp = map_special_points(R)
    out = []
    for c, rad in _REFERENCE_BUMPS:
        if c == "M":
            center = tuple(sp.M)
        elif c == "N":
            center = tuple(sp.N)
        else:
            v = np.asarray(c, dtype=float)
            r10 = float(np.linalg.norm(v))
            center = tuple(v if R == 10.0 else v / r10 * (R + r10 - 10.0))
        out.append(ChartBump(tuple(float(t) for t in center), rad))
    return out
