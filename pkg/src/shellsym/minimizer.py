"""Constrained minimization of the quotient J[u] = E_p(u) / ||u||_q^p on the chart grid.

The descent direction is the gradient of J preconditioned by a fixed
Sobolev operator (weighted p = 2 stiffness plus a lumped mass shift).  A
trial step is retracted onto the feasible set by q-normalization followed by
the A_kappa mass-fraction enforcement, and accepted by Armijo backtracking on J.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.optimize import brentq

from .errors import ConfigurationError, DegenerateInputError, InfeasibleError
from .grid import (
    CORNERS,
    Grid3,
    GridFunction,
    build_grid,
    cell_masses,
    cell_means,
    energy_and_grad,
    mass_and_grad,
    symmetric_images,
)
from .reduction import SQRT2, ChartBump, ChartPoint, akappa_contains, check_kappa, chart_to_4d, map_special_points
from .symmetry import Family, GroupSpec, tube_distances

TUBE_RADIUS = 3.0


def critical_exponent(p: float, dim: int = 3) -> float:
    return dim * p / (dim - p) if p < dim else math.inf


def default_delta(spec: GroupSpec, l: int | None = None) -> Fraction:
    """Admissible mass fraction allowed outside A_kappa for each group family."""
    if spec.family is Family.GK4:
        return Fraction(2, 2 + spec.k)
    if spec.family is Family.GK_PRIME:
        return Fraction(1, 1 + spec.k)
    if l is None:
        raise ConfigurationError("the block-permutation family needs the number l of nonzero pairs")
    if not (1 <= l <= spec.m):
        raise ConfigurationError(f"l must lie in [1, {spec.m}]")
    return Fraction(spec.m, spec.m + math.comb(spec.m, l) * spec.k ** (l - 1))


DEFAULT_DELTA = "group-default"
DELTA_TOKENS = (DEFAULT_DELTA, "paper-default")  # second spelling kept for existing configs


@dataclass
class MinimizeConfig:
    p: float = 2.0
    q: float = 4.0
    k: int = 2
    R: float = 10.0
    kappa: float = 0.2
    delta: float | str = DEFAULT_DELTA
    h: float = 0.25
    eps_reg: float | str = "auto"
    max_iter: int = 2000
    initial_step: float = 1.0
    armijo_c: float = 1e-4
    shrink: float = 0.5
    min_step: float = 1e-10
    tol: float = 1e-7
    window: int = 50
    init_radius: float = 1.0
    precond_shift: float = 1.0
    restart_noise: float = 0.0
    seed: int = 20240601

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        if not self.p > 1:
            raise ConfigurationError("p must exceed 1")
        pstar = critical_exponent(self.p)
        if not (self.p < self.q < pstar):
            raise ConfigurationError(f"q must lie in (p, {pstar:g}) for p = {self.p:g}")
        if int(self.k) != self.k or self.k < 2:
            raise ConfigurationError("k must be an integer >= 2")
        if not self.R > 2:
            raise ConfigurationError("R must exceed 2")
        check_kappa(self.kappa)
        if not isinstance(self.delta, str) and not (0.0 < float(self.delta) < 1.0):
            raise ConfigurationError("delta must lie in (0, 1)")
        if isinstance(self.delta, str):
            if self.delta not in DELTA_TOKENS:
                raise ConfigurationError(f"delta must be a number or '{DEFAULT_DELTA}'")
            self.delta = DEFAULT_DELTA
        if isinstance(self.eps_reg, str) and self.eps_reg != "auto":
            raise ConfigurationError("eps_reg must be a number or 'auto'")
        if not isinstance(self.eps_reg, str) and self.eps_reg < 0:
            raise ConfigurationError("eps_reg must be nonnegative")
        if not (0 < self.h <= 0.5):
            raise ConfigurationError("h must lie in (0, 0.5]")
        if self.max_iter < 1 or self.window < 1:
            raise ConfigurationError("max_iter and window must be positive")
        if not (0 < self.shrink < 1) or not (0 < self.armijo_c < 1):
            raise ConfigurationError("Armijo parameters must lie in (0, 1)")
        if self.initial_step <= 0 or self.min_step <= 0 or self.tol <= 0:
            raise ConfigurationError("step sizes and tolerance must be positive")
        if not (0 < self.init_radius <= 1.0):
            raise ConfigurationError("initial bump radius must lie in (0, 1]")
        if self.restart_noise < 0 or self.precond_shift <= 0:
            raise ConfigurationError("noise must be nonnegative and the preconditioner shift positive")

    @property
    def delta_value(self) -> float:
        if isinstance(self.delta, str):
            return float(default_delta(GroupSpec.gk4(int(self.k))))
        return float(self.delta)

    def as_dict(self) -> dict:
        d = asdict(self)
        d["delta_value"] = self.delta_value
        return d


@dataclass
class Concentration:
    center: list[float]
    center_4d: list[float]
    tube_radius: float
    tube_mass_fraction: float
    center_distance_to_equator_orbit: float


@dataclass
class MinimizeReport:
    J_final: float
    lam: float
    el_residual: float
    akappa_fraction: float
    constraint_active: bool
    concentration: Concentration
    iterations: int
    J_trace: list[float]
    converged: bool
    armijo_failure: bool
    eps_reg: float
    constraint_enforcements: int
    friedrichs_ratio: float
    grid: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return asdict(self)


# ---------------------------------------------------------------- functionals


def evaluate_J(u: GridFunction, p: float, q: float, eps_reg: float = 0.0) -> float:
    e, _ = energy_and_grad(u.grid, u.values, p, eps_reg, want_grad=False)
    m, _ = mass_and_grad(u.grid, u.values, q, want_grad=False)
    if m <= 0.0:
        raise DegenerateInputError("J is undefined for a function with zero q-mass")
    return e / m ** (p / q)


def _J_and_grad(grid: Grid3, x: np.ndarray, p: float, q: float, eps: float):
    e, ge = energy_and_grad(grid, x, p, eps)
    m, gm = mass_and_grad(grid, x, q)
    if m <= 0.0:
        raise DegenerateInputError("J is undefined for a function with zero q-mass")
    den = m ** (p / q)
    return e / den, ge / den - (p / q) * e / (m * den) * gm


def _J_value(grid: Grid3, x: np.ndarray, p: float, q: float, eps: float) -> float:
    e, _ = energy_and_grad(grid, x, p, eps, want_grad=False)
    m, _ = mass_and_grad(grid, x, q, want_grad=False)
    if m <= 0.0:
        return math.inf
    return e / m ** (p / q)


def normalize(u: GridFunction, q: float) -> GridFunction:
    m, _ = mass_and_grad(u.grid, u.values, q, want_grad=False)
    if m <= 0.0:
        raise DegenerateInputError("cannot normalize the zero function")
    return u.scaled(m ** (-1.0 / q))


def init_bump(grid: Grid3, center, radius: float, q: float) -> GridFunction:
    """q-normalized sum of the symmetric images of (1 - |c - center|^2 / radius^2)_+^2."""
    c = np.asarray(center.as_array() if isinstance(center, ChartPoint) else center, dtype=float)[:3]
    if radius <= 0:
        raise ConfigurationError("radius must be positive")
    norm = float(np.linalg.norm(c))
    if norm - radius < grid.R - 1.0 - 1e-12 or norm + radius > grid.R + 1.0 + 1e-12:
        raise ConfigurationError("the bump ball leaves the shell")
    if c[2] < math.hypot(c[0], c[1]) - 1e-12:
        raise ConfigurationError("bump centre must lie in the chart cone")
    images = np.unique(np.round(symmetric_images(c, grid.k), 12), axis=0)
    pts = grid.free_coords()
    vals = np.zeros(pts.shape[0])
    for im in images:
        vals += ChartBump(tuple(im), radius).value(pts)
    u = GridFunction(grid, vals)
    return normalize(u, q)


# ---------------------------------------------------------------- A_kappa constraint


def akappa_fraction(u: GridFunction, q: float, kappa: float) -> float:
    m = cell_masses(u, q)
    total = math.fsum(m)
    if total <= 0.0:
        raise DegenerateInputError("mass fraction of the zero function is undefined")
    inside = akappa_contains(kappa, u.grid.cell_center)
    return math.fsum(m[inside]) / total


def enforce_mass_constraint(u: GridFunction, q: float, kappa: float, delta: float) -> tuple[GridFunction, bool]:
    """Scale the values at nodes outside A_kappa so that the A_kappa fraction is at least 1 - delta.

    Returns the q-normalized result and whether a rescaling was applied.
    """
    if not (0.0 < delta < 1.0):
        raise ConfigurationError("delta must lie in (0, 1)")
    target = 1.0 - delta
    if akappa_fraction(u, q, kappa) >= target:
        return u, False
    grid = u.grid
    outside_nodes = ~akappa_contains(kappa, grid.free_coords())
    cells_in = akappa_contains(kappa, grid.cell_center)
    corners = grid.cell_base[:, None] + CORNERS @ np.asarray(grid.strides, dtype=np.int64)

    def fraction(s: float) -> float:
        vals = np.where(outside_nodes, s * u.values, u.values)
        ub = grid.to_box(vals)
        m = grid.cell_weight * np.abs(ub[corners].mean(axis=1)) ** q
        total = math.fsum(m)
        return math.fsum(m[cells_in]) / total if total > 0 else 0.0

    f0 = fraction(0.0)
    if f0 < target:
        raise InfeasibleError("no rescaling of the mass outside A_kappa reaches the required fraction")
    # closed form when no cell mixes scaled and unscaled nodes
    ext_out = np.abs(grid.extension) @ outside_nodes.astype(float) > 0
    ext_in = np.abs(grid.extension) @ (~outside_nodes).astype(float) > 0
    mixed = (ext_out[corners].any(axis=1) & ext_in[corners].any(axis=1)).any()
    s = None
    if not mixed:
        m = cell_masses(u, q)
        m_in = math.fsum(m[cells_in])
        m_out = math.fsum(m[~cells_in])
        if m_out > 0 and m_in > 0:
            s = (delta / (1.0 - delta) * m_in / m_out) ** (1.0 / q)
    if s is None:
        s = brentq(lambda t: fraction(t) - target, 0.0, 1.0, xtol=1e-15, rtol=4 * np.finfo(float).eps)
        # land on the feasible side
        while fraction(s) < target and s > 0:
            s = math.nextafter(s, 0.0)
    vals = np.where(outside_nodes, s * u.values, u.values)
    return normalize(GridFunction(grid, vals), q), True


# ---------------------------------------------------------------- preconditioner


def sobolev_operator(grid: Grid3, shift: float) -> sp.csc_matrix:
    """E^T (sum_c w_c G_c^T A_c G_c + shift * lumped mass) E on the free nodes."""
    s = np.asarray(grid.strides, dtype=np.int64)
    corners = grid.cell_base[:, None] + CORNERS @ s
    signs = (2.0 * CORNERS - 1.0) / (4.0 * grid.h)  # 8 x 3
    a = np.zeros((grid.n_cells, 3, 3))
    a[:, 0, 0] = grid.a11
    a[:, 0, 1] = a[:, 1, 0] = grid.a12
    a[:, 1, 1] = grid.a22
    a[:, 2, 2] = 1.0
    local = np.einsum("ia,cab,jb->cij", signs, a, signs) * grid.cell_weight[:, None, None]
    local += np.einsum("c,ij->cij", shift * grid.cell_weight / 8.0, np.eye(8))
    rows = np.repeat(corners, 8, axis=1).ravel()
    cols = np.tile(corners, (1, 8)).ravel()
    nbox = int(np.prod(grid.shape))
    L = sp.csr_matrix((local.ravel(), (rows, cols)), shape=(nbox, nbox))
    E = grid.extension
    K = (E.T @ L @ E).tocsc()
    K = K + 1e-12 * sp.identity(grid.n_free, format="csc") * (K.diagonal().max() if K.nnz else 1.0)
    return K.tocsc()


# ---------------------------------------------------------------- diagnostics


def lagrange_and_residual(u: GridFunction, p: float, q: float, eps_reg: float = 0.0) -> tuple[float, float]:
    """lambda = E_p(u) for normalized u and the nodal weak-form residual relative to the term scale."""
    m, gm = mass_and_grad(u.grid, u.values, q)
    if abs(m - 1.0) > 1e-8:
        raise ConfigurationError("lagrange_and_residual expects a q-normalized function")
    e, ge = energy_and_grad(u.grid, u.values, p, eps_reg)
    lam = e
    a = ge / p
    b = lam * gm / q
    scale = max(np.abs(a).max(), np.abs(b).max())
    if scale == 0.0:
        return lam, 0.0
    return lam, float(np.abs(a - b).max() / scale)


def rescale_to_solution(u: GridFunction, lam: float, p: float, q: float) -> GridFunction:
    if lam <= 0:
        raise ConfigurationError("lambda must be positive")
    if q == p:
        raise ConfigurationError("rescaling needs q != p")
    return u.scaled(lam ** (1.0 / (q - p)))


def rescale_factor(lam: float, p: float, q: float) -> float:
    if lam <= 0:
        raise ConfigurationError("lambda must be positive")
    if q == p:
        raise ConfigurationError("rescaling needs q != p")
    return lam ** (1.0 / (q - p))


def friedrichs_ratio(u: GridFunction, R: float, p: float, q: float, eps_reg: float = 0.0) -> float:
    e, _ = energy_and_grad(u.grid, u.values, p, eps_reg, want_grad=False)
    m, _ = mass_and_grad(u.grid, u.values, q, want_grad=False)
    if m <= 0:
        raise DegenerateInputError("ratio undefined for the zero function")
    return e ** (1.0 / p) / (R ** (1.0 / p - 1.0 / q) * m ** (1.0 / q))


def equator_point_4d(R: float) -> np.ndarray:
    return np.array([R / SQRT2, 0.0, R / SQRT2, 0.0])


def concentration(u: GridFunction, q: float, radius: float = TUBE_RADIUS) -> Concentration:
    grid = u.grid
    spec = GroupSpec.gk4(grid.k)
    m = cell_masses(u, q)
    total = math.fsum(m)
    if total <= 0:
        raise DegenerateInputError("concentration of the zero function is undefined")
    means = np.abs(cell_means(u))
    c = grid.cell_center[int(np.argmax(means))]
    target = equator_point_4d(grid.R)
    live = np.nonzero(m > 0)[0]
    d = np.full(m.size, np.inf)
    d[live] = tube_distances(spec, target, chart_to_4d(grid.cell_center[live]))
    frac = math.fsum(m[d <= radius]) / total
    dc = float(tube_distances(spec, target, chart_to_4d(c)[None, :])[0])
    return Concentration(list(map(float, c)), list(map(float, chart_to_4d(c))), radius, frac, dc)


# ---------------------------------------------------------------- descent


def _auto_eps(grid: Grid3, u: GridFunction) -> float:
    from .grid import cell_gradient

    g = cell_gradient(u)
    scale = float(np.sqrt((g**2).sum(axis=1)).max())
    return 1e-6 * scale


def minimize(
    config: MinimizeConfig,
    grid: Grid3 | None = None,
    start: GridFunction | None = None,
    callback: Callable[[int, float], None] | None = None,
) -> tuple[GridFunction, MinimizeReport]:
    config.validate()
    p, q = config.p, config.q
    delta = config.delta_value
    if grid is None:
        grid = build_grid(config.R, config.k, config.h)
    if start is None:
        u = init_bump(grid, map_special_points(config.R).M, config.init_radius, q)
        if config.restart_noise > 0:
            rng = np.random.default_rng(config.seed)
            noisy = u.values * (1.0 + config.restart_noise * rng.standard_normal(u.values.size))
            u = normalize(GridFunction(grid, np.abs(noisy)), q)
    else:
        u = normalize(start, q)
    eps = _auto_eps(grid, u) if isinstance(config.eps_reg, str) else float(config.eps_reg)
    u, _ = enforce_mass_constraint(u, q, config.kappa, delta)
    enforcements = 0

    lu = spla.splu(sobolev_operator(grid, config.precond_shift))

    def retract(x: np.ndarray) -> tuple[GridFunction, bool]:
        v = normalize(GridFunction(grid, x), q)
        return enforce_mass_constraint(v, q, config.kappa, delta)

    J, gJ = _J_and_grad(grid, u.values, p, q, eps)
    trace = [J]
    alpha = config.initial_step
    converged = False
    armijo_failure = False
    it = 0
    for it in range(1, config.max_iter + 1):
        d = lu.solve(gJ)
        slope = float(gJ @ d)
        if slope <= 0:
            converged = True
            break
        accepted = False
        while alpha >= config.min_step:
            cand, enforced = retract(u.values - alpha * d)
            Jc = _J_value(grid, cand.values, p, q, eps)
            if Jc <= J - config.armijo_c * alpha * slope:
                accepted = True
                break
            alpha *= config.shrink
        if not accepted:
            armijo_failure = True
            warnings.warn("Armijo backtracking reached the minimal step; returning the best iterate")
            break
        enforcements += int(enforced)
        u = cand
        J, gJ = _J_and_grad(grid, u.values, p, q, eps)
        trace.append(J)
        if callback is not None:
            callback(it, J)
        alpha = min(alpha / config.shrink, config.initial_step)
        if len(trace) > config.window:
            ref = trace[-1 - config.window]
            if (ref - J) <= config.tol * abs(J):
                converged = True
                break

    lam, res = lagrange_and_residual(u, p, q, eps)
    frac = akappa_fraction(u, q, config.kappa)
    conc = concentration(u, q)
    report = MinimizeReport(
        J_final=J,
        lam=lam,
        el_residual=res,
        akappa_fraction=frac,
        constraint_active=bool(frac <= 1.0 - delta + 1e-9),
        concentration=conc,
        iterations=it,
        J_trace=trace,
        converged=converged,
        armijo_failure=armijo_failure,
        eps_reg=eps,
        constraint_enforcements=enforcements,
        friedrichs_ratio=friedrichs_ratio(u, grid.R, p, q, eps),
        grid=grid.describe(),
    )
    return u, report


# ---------------------------------------------------------------- sweeps


def fit_slope(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Least-squares slope of log(ys) against log(xs)."""
    if len(xs) < 2 or len(xs) != len(ys):
        raise ConfigurationError("need at least two matching points")
    lx = np.log(np.asarray(xs, dtype=float))
    ly = np.log(np.asarray(ys, dtype=float))
    slope, _ = np.polyfit(lx, ly, 1)
    return float(slope)


@dataclass
class SweepRow:
    R: float
    status: str
    J: float
    lam: float
    el_residual: float
    friedrichs_ratio: float
    tube_mass_fraction: float
    iterations: int


@dataclass
class SweepResult:
    rows: list[SweepRow]
    slope: float
    expected_slope: float

    def as_dict(self) -> dict:
        return {"rows": [asdict(r) for r in self.rows], "slope": self.slope, "expected_slope": self.expected_slope}


def sweep_and_fit(template: MinimizeConfig, R_list: Sequence[float]) -> SweepResult:
    if len(R_list) < 3:
        raise ConfigurationError("a sweep needs at least three radii")
    rows = []
    for R in R_list:
        cfg = MinimizeConfig(**{**asdict(template), "R": float(R)})
        try:
            _, rep = minimize(cfg)
            rows.append(
                SweepRow(
                    float(R),
                    "ok" if rep.converged else "not-converged",
                    rep.J_final,
                    rep.lam,
                    rep.el_residual,
                    rep.friedrichs_ratio,
                    rep.concentration.tube_mass_fraction,
                    rep.iterations,
                )
            )
        except Exception as exc:  # keep the partial table
            rows.append(SweepRow(float(R), f"failed: {exc}", math.nan, math.nan, math.nan, math.nan, math.nan, 0))
    good = [r for r in rows if math.isfinite(r.J)]
    slope = fit_slope([r.R for r in good], [r.J for r in good]) if len(good) >= 2 else math.nan
    return SweepResult(rows, slope, 1.0 - template.p / template.q)
