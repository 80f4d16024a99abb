"""Quantitative lemma checks with brute-force oracles.

Contents: the corner solution of a concave minimization over a quadrangle
and its grid-scan oracle, reallocation of mass between two separated humps,
band cut-off functions of the tube distance, Schwarz symmetrization on a
cubic patch, a tube-mass concentration/vanishing detector, a vector power
inequality sampler and a shortest-orbit ordering check.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import kernels
from .errors import ConfigurationError, DegenerateInputError, PreconditionError
from .grid import (
    CORNERS,
    Grid3,
    GridFunction,
    cell_gradient,
    cell_masses,
    energy_and_grad,
    interior_cells,
    mass_and_grad,
)
from .reduction import chart_to_4d
from .symmetry import Family, GroupSpec, orbit_length_formula, orbit_length_numeric, pair_norms, tube_distances

# ---------------------------------------------------------------- concave corner problem


@dataclass(frozen=True)
class ORProblem:
    """Minimize A a^r + B b^r + C c^r over the mass-allocation polytope."""

    A: float
    B: float
    C: float
    r: float
    delta: float | None = None
    eps: float = 0.0

    def __post_init__(self) -> None:
        if not (0.0 < self.A <= self.B):
            raise ConfigurationError("need 0 < A <= B")
        if not (self.C == 0.0 or self.C > self.B):
            raise ConfigurationError("need C > B or C = 0")
        if not (0.0 < self.r < 1.0):
            raise ConfigurationError("need 0 < r < 1")
        if self.eps < 0.0 or self.eps >= 1.0:
            raise ConfigurationError("need 0 <= eps < 1")
        if not (0.0 < self.d < 1.0):
            raise ConfigurationError("need 0 < delta < 1")

    @property
    def d(self) -> float:
        return self.A / (self.A + self.B) if self.delta is None else float(self.delta)

    def objective(self, X: np.ndarray, Y: np.ndarray, Z: np.ndarray) -> np.ndarray:
        """f in terms of the allocated masses X = A a, Y = B b, Z = C c."""
        r = self.r
        out = self.A ** (1 - r) * np.power(X, r) + self.B ** (1 - r) * np.power(Y, r)
        if self.C > 0:
            out = out + self.C ** (1 - r) * np.power(Z, r)
        return out


@dataclass
class ORCorners:
    f1: float | None
    f2: float | None
    f3: float | None
    f4: float
    minimum: float
    pooled_value: float  # min((A + B)^(1-r), C^(1-r))
    lower: float
    exceeds_lower: bool


def or_min_corner(prob: ORProblem) -> ORCorners:
    if prob.eps != 0.0:
        raise ConfigurationError("the corner solution applies to eps = 0")
    A, B, C, r, d = prob.A, prob.B, prob.C, prob.r, prob.d
    f4 = (1 - d) ** r * B ** (1 - r) + d**r * A ** (1 - r)
    lower = B ** (1 - r)
    if C == 0.0:
        return ORCorners(None, None, None, f4, f4, f4, lower, f4 > lower)
    f1 = C ** (1 - r)
    f2 = (1 - d) ** r * B ** (1 - r) + d**r * C ** (1 - r)
    f3 = (1 - d) ** r * C ** (1 - r) + d**r * A ** (1 - r)
    m = min(f1, f2, f3, f4)
    pooled = min((A + B) ** (1 - r), C ** (1 - r))
    return ORCorners(f1, f2, f3, f4, m, pooled, lower, m > lower)


@dataclass
class ORBruteResult:
    value: float | None
    empty: bool
    argmin: tuple[float, float, float] | None
    points: int


def or_bruteforce(prob: ORProblem, grid_n: int = 400, chunk: int = 4_000_000) -> ORBruteResult:
    """Grid scan of f over the feasible set, parametrized by allocated masses.

    Coordinates: total S in [1 - eps, 1], X = A alpha in [0, min(delta, S)],
    and Z = C gamma between its lower bound max(0, delta - eps - X) and S - X;
    Y = S - X - Z.  With eps = 0 the S axis collapses and the scan is grid_n^2.
    """
    if grid_n < 100:
        raise ConfigurationError("grid_n must be at least 100")
    d, eps = prob.d, prob.eps
    t = np.linspace(0.0, 1.0, grid_n)
    S_axis = np.array([1.0]) if eps == 0.0 else np.linspace(1.0 - eps, 1.0, grid_n)
    best = math.inf
    arg = None
    count = 0
    for S in S_axis:
        xmax = min(d, S)
        xlo = max(0.0, d - eps - S) if prob.C == 0.0 else 0.0
        if prob.C == 0.0:
            # gamma does not enter: X must reach delta - eps on its own
            xlo = max(0.0, d - eps)
        if xlo > xmax:
            continue
        X = xlo + (xmax - xlo) * t
        if prob.C == 0.0:
            Z = np.zeros_like(X)
            Y = S - X
            ok = Y >= -1e-15
            vals = np.where(ok, prob.objective(X, np.clip(Y, 0, None), Z), np.inf)
            count += int(ok.sum())
            i = int(np.argmin(vals))
            if vals[i] < best:
                best, arg = float(vals[i]), (float(X[i]), float(max(S - X[i], 0.0)), 0.0)
            continue
        step = max(1, chunk // grid_n)
        for s0 in range(0, grid_n, step):
            Xc = X[s0 : s0 + step, None]
            zlo = np.maximum(0.0, d - eps - Xc)
            zhi = S - Xc
            Z = zlo + (zhi - zlo) * t[None, :]
            Y = np.clip(S - Xc - Z, 0.0, None)
            ok = zhi >= zlo
            vals = np.where(ok, prob.objective(np.broadcast_to(Xc, Z.shape), Y, Z), np.inf)
            count += int(ok.sum()) * grid_n
            i = np.unravel_index(int(np.argmin(vals)), vals.shape)
            if vals[i] < best:
                best = float(vals[i])
                arg = (float(Xc[i[0], 0]), float(Y[i]), float(Z[i]))
    if arg is None:
        return ORBruteResult(None, True, None, 0)
    A, B, C = prob.A, prob.B, prob.C
    alloc = (arg[0] / A, arg[1] / B, arg[2] / C if C > 0 else 0.0)
    return ORBruteResult(best, False, alloc, count)


def or_epsilon_scan(prob: ORProblem, eps_values: Sequence[float], grid_n: int = 200) -> list[tuple[float, float]]:
    """Brute-force minimum for each eps (same A, B, C, r, delta)."""
    out = []
    for e in eps_values:
        p = ORProblem(prob.A, prob.B, prob.C, prob.r, prob.delta, float(e))
        res = or_bruteforce(p, grid_n)
        out.append((float(e), math.nan if res.value is None else res.value))
    return out


# ---------------------------------------------------------------- hump reallocation


def cell_support(u: GridFunction) -> np.ndarray:
    """Cells whose corner values are not all zero."""
    g = u.grid
    ub = u.box_values()
    corners = g.cell_base[:, None] + CORNERS @ np.asarray(g.strides, dtype=np.int64)
    return (ub[corners] != 0.0).any(axis=1)


@dataclass
class HumpTriple:
    a: GridFunction
    b: GridFunction
    c: GridFunction
    p: float
    q: float

    def __post_init__(self) -> None:
        g = self.a.grid
        if self.b.grid is not g or self.c.grid is not g:
            raise ConfigurationError("the three humps must live on the same grid")
        if not (1.0 < self.p < self.q):
            raise ConfigurationError("need 1 < p < q")
        sa, sb, sc = cell_support(self.a), cell_support(self.b), cell_support(self.c)
        if (sa & sb).any() or (sa & sc).any() or (sb & sc).any():
            raise ConfigurationError("hump supports share a cell")
        if not sb.any() or not sc.any():
            raise DegenerateInputError("b and c must be nonzero")
        total = sum(mass_and_grad(g, f.values, self.q, want_grad=False)[0] for f in (self.a, self.b, self.c))
        if abs(total - 1.0) > 1e-10:
            raise ConfigurationError("a + b + c must have unit q-mass")


def hump_profile(Ea: float, Eb: float, Ec: float, t0: float, p: float, q: float) -> Callable[[np.ndarray], np.ndarray]:
    """Energy along the mass-preserving family as a function of the b-share t."""

    def f(t):
        t = np.asarray(t, dtype=float)
        return Ea + (t / t0) ** (p / q) * Eb + ((1.0 - t) / (1.0 - t0)) ** (p / q) * Ec

    return f


def hump_bound_rhs(Eb: float, Mb: float, Mc: float, p: float, q: float) -> float:
    """Claimed lower bound on f(t0) - f(t0/4) (Mb, Mc are q-masses)."""
    s = p / q
    ratio = (2.0 * Mc / (2.0 * Mc + Mb)) ** (2.0 - s) * (Mb * Mb) / (Mc * Mc)
    return p / (16.0 * q) * (1.0 - s) * (Eb + ratio * Eb)


@dataclass
class HumpResult:
    U: GridFunction
    t0: float
    energy_before: float
    energy_after: float
    energy_drop: float
    mass_after: float
    mass_error: float
    derivative_at_t0: float
    concave: bool
    bound_lhs: float
    bound_rhs: float
    bound_holds: bool
    strict_decrease: bool


def hump_destruct(t: HumpTriple) -> HumpResult:
    g = t.a.grid
    p, q = t.p, t.q
    Ea = energy_and_grad(g, t.a.values, p, 0.0, want_grad=False)[0]
    Eb = energy_and_grad(g, t.b.values, p, 0.0, want_grad=False)[0]
    Ec = energy_and_grad(g, t.c.values, p, 0.0, want_grad=False)[0]
    Mb = mass_and_grad(g, t.b.values, q, want_grad=False)[0]
    Mc = mass_and_grad(g, t.c.values, q, want_grad=False)[0]
    if Eb / Mb < Ec / Mc:
        raise PreconditionError("energy-to-mass ratio of b is below that of c; swap b and c")
    t0 = Mb / (Mb + Mc)
    f = hump_profile(Ea, Eb, Ec, t0, p, q)
    U = GridFunction(g, t.a.values + (1.0 / (1.0 - t0)) ** (1.0 / q) * t.c.values)
    before = energy_and_grad(g, t.a.values + t.b.values + t.c.values, p, 0.0, want_grad=False)[0]
    after = energy_and_grad(g, U.values, p, 0.0, want_grad=False)[0]
    mass_after = mass_and_grad(g, U.values, q, want_grad=False)[0]
    dt = 1e-6 * min(t0, 1.0 - t0)
    deriv = float((f(t0 + dt) - f(t0 - dt)) / (2 * dt))
    ts = np.linspace(0.02, 0.98, 49)
    hstep = 1e-3
    second = (f(ts + hstep) - 2 * f(ts) + f(ts - hstep)) / hstep**2
    concave = bool(np.all(second < 0.0))
    lhs = float(f(t0) - f(t0 / 4.0))
    rhs = hump_bound_rhs(Eb, Mb, Mc, p, q)
    return HumpResult(
        U=U,
        t0=t0,
        energy_before=before,
        energy_after=after,
        energy_drop=before - after,
        mass_after=mass_after,
        mass_error=abs(mass_after - 1.0),
        derivative_at_t0=deriv,
        concave=concave,
        bound_lhs=lhs,
        bound_rhs=rhs,
        bound_holds=bool(lhs >= rhs),
        strict_decrease=bool(after < before),
    )


# ---------------------------------------------------------------- cut-off


@dataclass(frozen=True)
class CutoffBands:
    inner: float  # sigma = 1 below
    zero_lo: float  # sigma = 0 on [zero_lo, zero_hi]
    zero_hi: float
    outer: float  # sigma = 1 above

    @classmethod
    def from_radii(cls, rho: float, rho_out: float) -> "CutoffBands":
        if not (rho_out > rho > 0):
            raise ConfigurationError("need rho' > rho > 0")
        return cls((5 * rho + rho_out) / 6, (rho_out + 2 * rho) / 3, (2 * rho_out + rho) / 3, (rho + 5 * rho_out) / 6)

    def value(self, d: np.ndarray) -> np.ndarray:
        d = np.asarray(d, dtype=float)
        down = np.clip((self.zero_lo - d) / (self.zero_lo - self.inner), 0.0, 1.0)
        up = np.clip((d - self.zero_hi) / (self.outer - self.zero_hi), 0.0, 1.0)
        return np.where(d <= self.zero_lo, down, np.where(d >= self.zero_hi, up, 0.0))

    @property
    def slope_bound(self) -> float:
        return 12.0 / (6.0 * (self.outer - self.zero_hi))


def _check_reflection_invariant(spec: GroupSpec, x4: np.ndarray) -> None:
    conj = x4 * np.array([1.0, -1.0, 1.0, -1.0])
    if tube_distances(spec, x4, conj[None, :])[0] > 1e-9 * max(1.0, float(np.linalg.norm(x4))):
        raise ConfigurationError("the grid represents reflection-symmetric functions; the centre orbit is not")


def cutoff_build(grid: Grid3, spec: GroupSpec, center, rho: float, rho_out: float) -> tuple[GridFunction, CutoffBands]:
    """Piecewise-linear function of the tube distance to the orbit of center."""
    if spec.family is not Family.GK4 or spec.k != grid.k:
        raise ConfigurationError("cut-off needs the four-dimensional family matching the grid order")
    bands = CutoffBands.from_radii(rho, rho_out)
    x4 = np.asarray(center, dtype=float)
    if x4.shape == (3,):
        x4 = chart_to_4d(x4)
    _check_reflection_invariant(spec, x4)
    d = tube_distances(spec, x4, chart_to_4d(grid.free_coords()))
    return GridFunction(grid, bands.value(d)), bands


def metric_gradient_norms(u: GridFunction, interior_only: bool = True) -> np.ndarray:
    """Per-cell |grad u| measured in R^4 (through the chart metric).

    By default cells touching the zero boundary layer are reported as 0, since
    a cut-off that equals 1 near the shell spheres jumps there.
    """
    g = cell_gradient(u)
    grid = u.grid
    quad = grid.a11 * g[:, 0] ** 2 + 2 * grid.a12 * g[:, 0] * g[:, 1] + grid.a22 * g[:, 1] ** 2 + g[:, 2] ** 2
    out = np.sqrt(quad)
    if interior_only:
        out = np.where(interior_cells(grid), out, 0.0)
    return out


# ---------------------------------------------------------------- Schwarz symmetrization


@dataclass
class CubePatch:
    """Values on the nodes of an n^3 cube of spacing h centred at the origin."""

    values: np.ndarray
    h: float

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 3 or len(set(self.values.shape)) != 1:
            raise ConfigurationError("patch values must form an n x n x n array")
        if self.h <= 0:
            raise ConfigurationError("spacing must be positive")

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def coords(self) -> np.ndarray:
        ax = (np.arange(self.n) - (self.n - 1) / 2.0) * self.h
        return np.stack(np.meshgrid(ax, ax, ax, indexing="ij"), axis=-1)

    @classmethod
    def from_callable(cls, n: int, h: float, f: Callable[[np.ndarray], np.ndarray]) -> "CubePatch":
        ax = (np.arange(n) - (n - 1) / 2.0) * h
        P = np.stack(np.meshgrid(ax, ax, ax, indexing="ij"), axis=-1)
        return cls(f(P.reshape(-1, 3)).reshape(n, n, n), h)


def patch_mass(v: CubePatch, q: float) -> float:
    return math.fsum(np.abs(v.values.ravel()) ** q) * v.h**3


def patch_energy(v: CubePatch, p: float) -> float:
    """Cell-centred p-Dirichlet energy with unit weight and identity metric."""
    n = v.n
    idx = np.stack(np.meshgrid(*(np.arange(n - 1),) * 3, indexing="ij"), axis=-1).reshape(-1, 3)
    strides = (n * n, n, 1)
    base = np.ascontiguousarray(idx @ np.asarray(strides, dtype=np.int64))
    nc = base.size
    one = np.ones(nc)
    zero = np.zeros(nc)
    w = np.full(nc, v.h**3)
    u = np.ascontiguousarray(v.values.ravel())
    return float(kernels.energy_grad(u, base, *strides, one, zero, one, w, v.h, p, 0.0, np.zeros(1), False))


def symmetrize(v: CubePatch, center=(0.0, 0.0, 0.0)) -> CubePatch:
    """Radially decreasing rearrangement about center: values sorted in decreasing order
    are placed on nodes sorted by distance (ties broken by node index)."""
    if np.any(v.values < 0):
        raise PreconditionError("symmetrization needs a nonnegative function")
    P = v.coords().reshape(-1, 3) - np.asarray(center, dtype=float)
    dist = np.sqrt((P**2).sum(axis=1))
    order = np.lexsort((np.arange(dist.size), np.round(dist / v.h, 9)))
    vals = np.sort(v.values.ravel())[::-1]
    out = np.empty_like(vals)
    out[order] = vals
    return CubePatch(out.reshape(v.values.shape), v.h)


# ---------------------------------------------------------------- concentration detection

DEFAULT_LADDER = (1.0, 2.0, 4.0, 8.0, 16.0)
DETECTOR_EPS = 0.05


@dataclass
class MassField:
    """Point samples of |u|^q mass (cell representatives and cell masses)."""

    points: np.ndarray
    masses: np.ndarray
    R: float

    @classmethod
    def from_grid(cls, u: GridFunction, q: float) -> "MassField":
        m = cell_masses(u, q)
        return cls(chart_to_4d(u.grid.cell_center), m, u.grid.R)


@dataclass
class Verdict:
    kind: str  # "concentration", "vanishing" or "inconclusive"
    lam: float | None
    plateau_radius: float | None
    table: list[list[float]]
    reason: str = ""


def tube_mass_table(
    seq: Sequence[MassField], centers: Sequence, spec: GroupSpec | None, ladder: Sequence[float] = DEFAULT_LADDER
) -> np.ndarray:
    H = np.zeros((len(seq), len(ladder)))
    for j, (field_j, c) in enumerate(zip(seq, centers)):
        total = math.fsum(field_j.masses)
        if total <= 0:
            raise DegenerateInputError("sequence member has zero mass")
        live = np.nonzero(field_j.masses > 0)[0]
        pts = field_j.points[live]
        c = np.asarray(c, dtype=float)
        if spec is None:
            d = np.sqrt(((pts - c) ** 2).sum(axis=1))
        else:
            d = tube_distances(spec, c, pts)
        for l, rho in enumerate(ladder):
            H[j, l] = math.fsum(field_j.masses[live][d <= rho]) / total
    return H


def classify_ladder(H: np.ndarray, ladder: Sequence[float] = DEFAULT_LADDER, eps: float = DETECTOR_EPS) -> Verdict:
    """Concentration / vanishing decision from the tube-mass table H[j, rho]."""
    table = H.tolist()
    if H.shape[0] < 3:
        raise ConfigurationError("need at least three sequence members")
    if np.any(np.diff(H, axis=1) < -1e-12):
        return Verdict("inconclusive", None, None, table, "tube mass decreases with the radius")
    # mass leaving every tube takes precedence: a bounded ladder always ends in a plateau
    if np.all(np.diff(H, axis=0) <= 1e-12) and H[-1, 0] < eps:
        return Verdict("vanishing", None, None, table)
    for l in range(H.shape[1] - 1):
        flat = np.all(H[:, l + 1] - H[:, l] < eps / 2)
        spread = H[:, l].max() - H[:, l].min()
        lam = float(H[:, l].mean())
        if flat and spread <= eps and lam >= eps:
            return Verdict("concentration", lam, float(ladder[l]), table)
    return Verdict("inconclusive", None, None, table, "no stable plateau and no decay")


def concentration_detect(
    seq: Sequence[MassField],
    centers: Sequence[Sequence],
    spec: GroupSpec | None,
    ladder: Sequence[float] = DEFAULT_LADDER,
    eps: float = DETECTOR_EPS,
) -> list[Verdict]:
    """One verdict per tracked centre; centers[i][j] is centre i at sequence member j."""
    if len(seq) < 3:
        raise ConfigurationError("need at least three sequence members")
    out = []
    for track in centers:
        if len(track) != len(seq):
            raise ConfigurationError("each centre track needs one point per sequence member")
        out.append(classify_ladder(tube_mass_table(seq, track, spec, ladder), ladder, eps))
    return out


# ---------------------------------------------------------------- vector inequality


def vector_ineq_constant(s: float) -> float:
    return s * 2.0 ** (s - 1.0)


def vector_ineq_check(s: float, trials: int = 100_000, dim: int = 3, seed: int = 7) -> float:
    """Max of (|a+b|^s - rhs) / rhs over random pairs; nonpositive means the inequality held."""
    if not s > 1:
        raise ConfigurationError("need s > 1")
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((trials, dim)) * 10.0 ** rng.uniform(-3, 3, (trials, 1))
    b = rng.standard_normal((trials, dim)) * 10.0 ** rng.uniform(-3, 3, (trials, 1))
    return vector_ineq_violation(a, b, s)


def vector_ineq_violation(a: np.ndarray, b: np.ndarray, s: float) -> float:
    na = np.linalg.norm(a, axis=-1)
    nb = np.linalg.norm(b, axis=-1)
    lhs = np.linalg.norm(a + b, axis=-1) ** s
    rhs = na**s + vector_ineq_constant(s) * (na ** (s - 1) * nb + nb**s)
    rel = np.where(rhs > 0, (lhs - rhs) / np.where(rhs > 0, rhs, 1.0), lhs)
    return float(rel.max())


# ---------------------------------------------------------------- orbit ordering


def distance_to_equal_norm_set(x: np.ndarray, m: int, l0: int) -> np.ndarray:
    """Distance to points with l0 nonzero pairs of a common norm (other pairs zero)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    n = pair_norms(x, m)
    tail = (x[:, 2 * m :] ** 2).sum(axis=1)
    best = np.full(x.shape[0], np.inf)
    for S in itertools.combinations(range(m), l0):
        sel = n[:, list(S)]
        rest = np.delete(n, list(S), axis=1)
        d2 = ((sel - sel.mean(axis=1, keepdims=True)) ** 2).sum(axis=1) + (rest**2).sum(axis=1)
        best = np.minimum(best, d2)
    return np.sqrt(best + tail)


@dataclass
class OrderReport:
    ok: bool
    ext_min: float
    ext_reference: float
    int_min: float
    int_reference: float
    boundary_min: float
    samples: dict = field(default_factory=dict)
    numeric_checked: int = 0
    numeric_max_rel_error: float = 0.0


def _unit(x: np.ndarray) -> np.ndarray:
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def orbit_order_check(
    spec: GroupSpec, kappa: float, l0: int, samples: int = 100_000, seed: int = 11, numeric_subsample: int = 60
) -> OrderReport:
    """Sampled check that the equal-norm strata give the shortest orbits inside,
    outside and on the boundary of the neighbourhood of the l0 stratum."""
    if spec.family is not Family.GK_TILDE or spec.m0 != 0:
        raise ConfigurationError("ordering check applies to the block-permutation family without tail")
    m, k = spec.m, spec.k
    if not (2 <= l0 <= m):
        raise ConfigurationError("l0 must lie in [2, m]")
    if not (0 < kappa < 1.0 / math.sqrt(l0)):
        raise ConfigurationError(f"kappa must lie in (0, 1/sqrt(l0)) = (0, {1 / math.sqrt(l0):.6g})")
    if samples < 10_000:
        raise ConfigurationError("at least 10^4 samples are required")
    rng = np.random.default_rng(seed)
    dim = 2 * m
    quarter = samples // 4
    # uniform sphere points
    pts = [_unit(rng.standard_normal((samples - 3 * quarter, dim)))]
    # stratum points: random subset of nonzero pairs, optional equal norms, random phases
    strat = np.zeros((quarter, dim))
    for i in range(quarter):
        l = int(rng.integers(1, m + 1))
        S = rng.choice(m, l, replace=False)
        norms = np.ones(l) if rng.random() < 0.5 else rng.uniform(0.1, 1.0, l)
        if l >= 3 and rng.random() < 0.3:
            norms[1] = norms[0]
        ph = rng.uniform(0, 2 * math.pi, l)
        for t, pidx in enumerate(S):
            strat[i, 2 * pidx] = norms[t] * math.cos(ph[t])
            strat[i, 2 * pidx + 1] = norms[t] * math.sin(ph[t])
    pts.append(_unit(strat))
    # points near the l0 stratum (inside) and on the boundary sphere of the neighbourhood
    base = np.zeros((2 * quarter, dim))
    for i in range(2 * quarter):
        S = rng.choice(m, l0, replace=False)
        ph = rng.uniform(0, 2 * math.pi, l0)
        for t, pidx in enumerate(S):
            base[i, 2 * pidx] = math.cos(ph[t])
            base[i, 2 * pidx + 1] = math.sin(ph[t])
    base = _unit(base)
    direc = rng.standard_normal((2 * quarter, dim))
    near = _unit(base[:quarter] + rng.uniform(0, kappa, (quarter, 1)) * _unit(direc[:quarter]))
    pts.append(near)
    b0 = base[quarter:]
    dv = _unit(direc[quarter:])

    def gap(svals):
        y = _unit(b0 + svals[:, None] * dv)
        return distance_to_equal_norm_set(y, m, l0) - kappa

    lo = np.zeros(quarter)
    hi = np.full(quarter, 4.0)
    reach = gap(hi) >= 0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        below = gap(mid) < 0
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    bnd = _unit(b0 + hi[:, None] * dv)[reach]
    X = np.vstack(pts)
    dist = distance_to_equal_norm_set(X, m, l0)
    lengths = np.array([orbit_length_formula(spec, x) for x in X])
    blen = np.array([orbit_length_formula(spec, x) for x in bnd])
    inside = dist < kappa - 1e-9
    outside = dist > kappa + 1e-9

    M1 = np.zeros(dim)
    M1[0] = 1.0
    Ml0 = np.zeros(dim)
    Ml0[0 : 2 * l0 : 2] = 1.0 / math.sqrt(l0)
    L1 = orbit_length_formula(spec, M1)
    Ll0 = orbit_length_formula(spec, Ml0)
    if distance_to_equal_norm_set(M1, m, l0)[0] <= kappa or distance_to_equal_norm_set(Ml0, m, l0)[0] != 0.0:
        raise ConfigurationError("reference points fall on the wrong side of the neighbourhood")
    tol = 1e-9
    ext_min = float(lengths[outside].min()) if outside.any() else math.inf
    int_min = float(lengths[inside].min()) if inside.any() else math.inf
    b_min = float(blen.min()) if blen.size else math.inf
    ok = ext_min >= L1 - tol and int_min >= Ll0 - tol and b_min > Ll0 + tol

    # spot-check the formula against the generator search
    sub = rng.choice(X.shape[0], min(numeric_subsample, X.shape[0]), replace=False)
    errs = [abs(orbit_length_numeric(spec, X[i]) - lengths[i]) / lengths[i] for i in sub]
    return OrderReport(
        ok=bool(ok),
        ext_min=ext_min,
        ext_reference=L1,
        int_min=int_min,
        int_reference=Ll0,
        boundary_min=b_min,
        samples={"total": int(X.shape[0]), "inside": int(inside.sum()), "outside": int(outside.sum()), "boundary": int(bnd.shape[0])},
        numeric_checked=len(errs),
        numeric_max_rel_error=float(max(errs)) if errs else 0.0,
    )


# ---------------------------------------------------------------- random instance generators


def random_or_problems(count: int, seed: int, zero_c_share: float = 0.2) -> list[ORProblem]:
    """A ~ U(0.1, 5), B = A * U(1, 3), C = 0 with probability zero_c_share else B * U(1.05, 4),
    r ~ U(0.05, 0.95), delta = A / (A + B)."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        A = rng.uniform(0.1, 5.0)
        B = A * rng.uniform(1.0, 3.0)
        C = 0.0 if rng.random() < zero_c_share else B * rng.uniform(1.05, 4.0)
        out.append(ORProblem(A, B, C, rng.uniform(0.05, 0.95)))
    return out


HUMP_CENTERS = ((0.5, 0.0, 0.0), (3.0, 1.0, 0.0), (6.2, 0.0, 0.0))


def hump_grid(R: float = 10.0, h: float = 0.25) -> Grid3:
    from .grid import build_grid

    return build_grid(R, 2, h)


def random_hump_triple(
    grid: Grid3, rng: np.random.Generator, amp_range: tuple[float, float] = (0.5, 2.0)
) -> HumpTriple:
    """Three bumps on the shell's middle sphere at fixed separated chart positions.

    p ~ {1.5, 2, 3}, q = p * U(1.2, 1.9) (kept below the critical exponent),
    radii ~ U(0.6, 1), amplitudes ~ U(amp_range); the triple is normalized and
    b, c are ordered so that b has the larger energy-to-mass ratio.
    """
    from .reduction import ChartBump

    p = float(rng.choice([1.5, 2.0, 3.0]))
    q = p * rng.uniform(1.2, 1.9)
    pts = grid.free_coords()
    funcs = []
    for y1, y2, _ in HUMP_CENTERS:
        r1 = math.sqrt(grid.R**2 - y1 * y1 - y2 * y2)
        bump = ChartBump((y1, y2, r1), rng.uniform(0.6, 1.0), rng.uniform(*amp_range))
        funcs.append(GridFunction(grid, bump.value(pts)))
    total = sum(mass_and_grad(grid, f.values, q, want_grad=False)[0] for f in funcs)
    a, b, c = (f.scaled(total ** (-1.0 / q)) for f in funcs)
    ratio = lambda f: energy_and_grad(grid, f.values, p, 0.0, want_grad=False)[0] / mass_and_grad(grid, f.values, q, want_grad=False)[0]  # noqa: E731
    if ratio(b) < ratio(c):
        b, c = c, b
    return HumpTriple(a, b, c, p, q)


def random_smooth_patch(rng: np.random.Generator, n: int = 33, h: float = 0.25) -> CubePatch:
    """Sum of three random (1 - |x - c|^2 / r^2)_+^2 bumps inside the cube."""
    cs = rng.uniform(-2.0, 2.0, (3, 3))
    rs = rng.uniform(0.8, 1.6, 3)
    am = rng.uniform(0.3, 1.5, 3)

    def f(P):
        return sum(a * np.clip(1 - ((P - c) ** 2).sum(axis=1) / r**2, 0, None) ** 2 for c, r, a in zip(cs, rs, am))

    return CubePatch.from_callable(n, h, f)


DETECTOR_FAMILIES = ("concentrating", "vanishing", "split")


def synthetic_family(
    kind: str, R_list: Sequence[float] = (6.0, 10.0, 14.0, 20.0), k: int = 2, q: float = 4.0, h: float = 0.5
) -> tuple[list[MassField], list[list[np.ndarray]]]:
    """Test sequences for the detector, one grid per radius.

    ``concentrating``: a unit bump at M*R; ``vanishing``: bumps
    j^(-3/q) * bump(x / j) at M*R with j = 1, 3, 9, ... on the largest grid;
    ``split``: bumps at M*R and N*R rescaled to equal q-mass.  Centre tracks
    follow M*R (and N*R for ``split``).
    """
    from .grid import build_grid
    from .reduction import ChartBump, map_special_points

    if kind not in DETECTOR_FAMILIES:
        raise ConfigurationError(f"family must be one of {', '.join(DETECTOR_FAMILIES)}")
    seq: list[MassField] = []
    tracks: list[list[np.ndarray]] = [[], []] if kind == "split" else [[]]
    for j, R in enumerate(R_list):
        if kind == "vanishing":
            R = max(R_list)
        grid = build_grid(float(R), k, h)
        sp = map_special_points(float(R))
        pts = grid.free_coords()
        if kind == "vanishing":
            width = 3.0**j
            u = GridFunction(grid, width ** (-3.0 / q) * ChartBump(tuple(sp.M), width).value(pts))
        else:
            u = GridFunction(grid, ChartBump(tuple(sp.M), 1.0).value(pts))
            if kind == "split":
                other = GridFunction(grid, ChartBump(tuple(sp.N), 1.0).value(pts))
                mu = mass_and_grad(grid, u.values, q, want_grad=False)[0]
                mo = mass_and_grad(grid, other.values, q, want_grad=False)[0]
                u = GridFunction(grid, u.values + (mu / mo) ** (1.0 / q) * other.values)
        seq.append(MassField.from_grid(u, q))
        tracks[0].append(chart_to_4d(sp.M))
        if kind == "split":
            tracks[1].append(chart_to_4d(sp.N))
    return seq, tracks
