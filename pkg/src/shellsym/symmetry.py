"""Symmetry groups built from paired plane rotations, orbit classes and lengths.

Points of R^n are split into ``m`` coordinate pairs (the "body") followed by
an optional tail of dimension ``m0``.  Every family contains the diagonal
circle ``R_phi`` that rotates all body pairs by the same angle; the discrete
part rotates single pairs by multiples of 2*pi/k and permutes pairs.  The
tail, when present, carries a full orthogonal group.

Orbit lengths come from two independent routes: closed formulas keyed on
the orbit class, and a breadth-first enumeration of the circles that make
up the orbit (:func:`orbit_length_numeric`).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from itertools import permutations
from typing import Callable

import numpy as np

from .errors import (
    ConfigurationError,
    DegenerateInputError,
    InternalError,
    OrbitDimensionError,
    UnsupportedOperationError,
)

TWO_PI = 2.0 * math.pi
REL_TOL = 1e-9


class Family(str, Enum):
    GK4 = "Gk4"
    GK_PRIME = "GkPrime"
    GK_TILDE = "GkTilde"


@dataclass(frozen=True)
class GroupSpec:
    family: Family
    k: int
    n: int = 4
    m: int = 2
    m0: int = 0

    def __post_init__(self) -> None:
        fam = Family(self.family)
        object.__setattr__(self, "family", fam)
        for name in ("k", "n", "m", "m0"):
            val = getattr(self, name)
            if isinstance(val, bool) or int(val) != val:
                raise ConfigurationError(f"{name} must be an integer, got {val!r}")
            object.__setattr__(self, name, int(val))
        if self.k < 1:
            raise ConfigurationError(f"k must be >= 1, got {self.k}")
        if fam is Family.GK4:
            if (self.n, self.m, self.m0) != (4, 2, 0):
                raise ConfigurationError("Gk4 acts on R^4 (n=4, m=2, m0=0)")
        elif fam is Family.GK_PRIME:
            if self.n < 6:
                raise ConfigurationError(f"GkPrime needs n >= 6, got n={self.n}")
            if self.m != 2 or self.m0 != self.n - 4:
                raise ConfigurationError("GkPrime has two body pairs and a tail of dimension n-4")
        else:
            if self.m < 2:
                raise ConfigurationError(f"GkTilde needs m >= 2 pairs, got m={self.m}")
            if self.m0 < 0 or self.m0 == 1:
                raise ConfigurationError("GkTilde tail dimension must be 0 or >= 2")
            if self.n != 2 * self.m + self.m0:
                raise ConfigurationError(f"GkTilde needs n = 2m + m0, got n={self.n}, m={self.m}, m0={self.m0}")

    @classmethod
    def gk4(cls, k: int) -> "GroupSpec":
        return cls(Family.GK4, k, 4, 2, 0)

    @classmethod
    def gk_prime(cls, k: int, n: int) -> "GroupSpec":
        if n < 6:
            raise ConfigurationError(f"GkPrime needs n >= 6, got n={n}")
        return cls(Family.GK_PRIME, k, n, 2, n - 4)

    @classmethod
    def gk_tilde(cls, k: int, m: int, m0: int = 0) -> "GroupSpec":
        return cls(Family.GK_TILDE, k, 2 * m + m0, m, m0)

    @property
    def body_dim(self) -> int:
        return 2 * self.m

    @property
    def tail_dim(self) -> int:
        return self.m0

    def as_dict(self) -> dict:
        return {"family": self.family.value, "k": self.k, "n": self.n, "m": self.m, "m0": self.m0}


# ---------------------------------------------------------------- matrices


def plane_rotation(phi: float) -> np.ndarray:
    c, s = math.cos(phi), math.sin(phi)
    return np.array([[c, s], [-s, c]])


def diagonal_rotation(spec: GroupSpec, phi: float) -> np.ndarray:
    """The circle element R_phi: every body pair turned by T_phi, tail fixed."""
    mat = np.eye(spec.n)
    block = plane_rotation(phi)
    for j in range(spec.m):
        mat[2 * j : 2 * j + 2, 2 * j : 2 * j + 2] = block
    return mat


def _pair_rotation(spec: GroupSpec, pair: int, phi: float) -> np.ndarray:
    mat = np.eye(spec.n)
    mat[2 * pair : 2 * pair + 2, 2 * pair : 2 * pair + 2] = plane_rotation(phi)
    return mat


def _pair_swap(spec: GroupSpec, a: int, b: int) -> np.ndarray:
    perm = list(range(spec.n))
    perm[2 * a], perm[2 * b] = perm[2 * b], perm[2 * a]
    perm[2 * a + 1], perm[2 * b + 1] = perm[2 * b + 1], perm[2 * a + 1]
    return np.eye(spec.n)[perm]


@dataclass
class Generators:
    names: list[str]
    discrete: list[np.ndarray]
    rotation: Callable[[float], np.ndarray]
    tail_group: str = "none"
    notes: list[str] = field(default_factory=list)


def generators(spec: GroupSpec) -> Generators:
    """Discrete generators plus the closed-form circle R_phi."""
    names: list[str] = []
    mats: list[np.ndarray] = []
    if spec.family in (Family.GK4, Family.GK_PRIME):
        names.append("swap_pairs")
        mats.append(_pair_swap(spec, 0, 1))
    names.append(f"rotate_pair1_2pi/{spec.k}")
    mats.append(_pair_rotation(spec, 0, TWO_PI / spec.k))
    if spec.family is Family.GK_TILDE:
        for j in range(spec.m - 1):
            names.append(f"swap_pairs_{j + 1}_{j + 2}")
            mats.append(_pair_swap(spec, j, j + 1))
    tail = "none"
    if spec.tail_dim > 0:
        tail = f"O({spec.tail_dim})"
        refl = np.eye(spec.n)
        refl[spec.body_dim, spec.body_dim] = -1.0
        names.append("tail_reflection")
        mats.append(refl)
    return Generators(names, mats, lambda phi: diagonal_rotation(spec, phi), tail)


def _body_generators(spec: GroupSpec) -> list[np.ndarray]:
    d = spec.body_dim
    return [g[:d, :d] for g, nm in zip(generators(spec).discrete, generators(spec).names) if nm != "tail_reflection"]


@lru_cache(maxsize=32)
def _finite_body_group(spec: GroupSpec) -> np.ndarray:
    """All elements of the finite group generated by the discrete body generators."""
    gens = _body_generators(spec)
    d = spec.body_dim
    ident = np.eye(d)
    seen = {_mat_key(ident): ident}
    frontier = [ident]
    bound = spec.k**spec.m * math.factorial(spec.m)
    while frontier:
        nxt = []
        for g in frontier:
            for s in gens:
                h = s @ g
                key = _mat_key(h)
                if key not in seen:
                    seen[key] = h
                    nxt.append(h)
        frontier = nxt
        if len(seen) > bound:
            raise InternalError("finite group closure exceeded its order bound")
    out = np.array([seen[key] for key in sorted(seen)])
    out.setflags(write=False)
    return out


def _mat_key(a: np.ndarray) -> bytes:
    return np.round(a * 1e8).astype(np.int64).tobytes()


# ---------------------------------------------------------------- point helpers


def _as_point(spec: GroupSpec, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (spec.n,):
        raise ConfigurationError(f"point must have shape ({spec.n},), got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise DegenerateInputError("point has non-finite coordinates")
    if not np.any(x):
        raise DegenerateInputError("the zero vector has no orbit class")
    return x


def rotate_pairs(points: np.ndarray, phi, m: int) -> np.ndarray:
    """Apply R_phi to rows of ``points`` (first 2m coordinates); ``phi`` scalar or per-row."""
    pts = np.array(points, dtype=float, copy=True)
    c = np.cos(phi)
    s = np.sin(phi)
    if np.ndim(phi) > 0:
        c = np.asarray(c)[..., None]
        s = np.asarray(s)[..., None]
    a = pts[..., 0 : 2 * m : 2].copy()
    b = pts[..., 1 : 2 * m : 2].copy()
    pts[..., 0 : 2 * m : 2] = c * a + s * b
    pts[..., 1 : 2 * m : 2] = -s * a + c * b
    return pts


def pair_norms(x: np.ndarray, m: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return np.hypot(x[..., 0 : 2 * m : 2], x[..., 1 : 2 * m : 2])


def best_phase(y: np.ndarray, z: np.ndarray, m: int) -> np.ndarray:
    """phi maximizing <R_phi y, z> row by row: <R_phi y, z> = A cos phi + B sin phi."""
    ya, yb = y[..., 0 : 2 * m : 2], y[..., 1 : 2 * m : 2]
    za, zb = z[..., 0 : 2 * m : 2], z[..., 1 : 2 * m : 2]
    A = (ya * za + yb * zb).sum(axis=-1)
    B = (yb * za - ya * zb).sum(axis=-1)
    return np.arctan2(B, A)


def circle_distance(y: np.ndarray, z: np.ndarray, m: int) -> np.ndarray:
    """min over phi of |R_phi y - z| for matching rows of y and z."""
    y = np.atleast_2d(np.asarray(y, dtype=float))
    z = np.atleast_2d(np.asarray(z, dtype=float))
    return np.linalg.norm(rotate_pairs(y, best_phase(y, z, m), m) - z, axis=-1)


# ---------------------------------------------------------------- classes


@dataclass(frozen=True)
class OrbitClass:
    """Orbit type.  ``stabilizer`` counts pair permutations fixing the orbit's phase pattern."""

    label: str
    l: int | None = None
    equal_norms: bool | None = None
    stabilizer: int = 1

    def __str__(self) -> str:
        if self.label == "pair":
            tag = "M" if self.equal_norms else "F"
            return f"pair(l={self.l},{tag},stab={self.stabilizer})"
        return self.label


POLAR = OrbitClass("polar")
EQUATORIAL = OrbitClass("equatorial")
GENERAL4 = OrbitClass("general4")
TAIL = OrbitClass("tail")
GENERAL_AMBIENT = OrbitClass("general_ambient")
MIXED = OrbitClass("mixed")


@dataclass(frozen=True)
class OrbitInfo:
    cls: OrbitClass
    dim: int
    length: float | None
    components: int | None


def _wrap(a: np.ndarray, period: float) -> np.ndarray:
    """Representative of a modulo period in [-period/2, period/2)."""
    return (a + 0.5 * period) % period - 0.5 * period


def _stabilizer_order(norms: np.ndarray, phases: np.ndarray, k: int, tol_r: float, tol_a: float) -> int:
    """Number of permutations of the nonzero pairs that map the circle of x to a discrete image of itself.

    A permutation sigma qualifies when it preserves the norms and shifts all
    phases by one common amount modulo 2*pi/k.
    """
    l = len(norms)
    period = TWO_PI / k
    count = 0
    for sigma in permutations(range(l)):
        sig = np.array(sigma)
        if np.any(np.abs(norms[sig] - norms) > tol_r):
            continue
        d = phases[sig] - phases
        spread = _wrap(d - d[0], period)
        if np.all(np.abs(spread) <= tol_a):
            count += 1
    return count


def classify_point(spec: GroupSpec, x) -> OrbitClass:
    x = _as_point(spec, x)
    scale = float(np.linalg.norm(x))
    tol = REL_TOL * scale
    body = x[: spec.body_dim]
    tail = x[spec.body_dim :]
    bn = float(np.linalg.norm(body))
    tn = float(np.linalg.norm(tail)) if spec.tail_dim else 0.0
    if spec.tail_dim and tn > tol and bn > tol:
        return GENERAL_AMBIENT if spec.family is Family.GK_PRIME else MIXED
    if bn <= tol:
        return TAIL
    norms = pair_norms(body, spec.m)
    nz = norms > tol
    r = norms[nz]
    th = np.arctan2(body[1::2], body[0::2])[nz]
    l = int(nz.sum())
    tol_a = tol / float(r.min())
    stab = _stabilizer_order(r, th, spec.k, tol, tol_a)
    if spec.family in (Family.GK4, Family.GK_PRIME):
        if l == 1:
            return POLAR
        return EQUATORIAL if stab == 2 else GENERAL4
    equal = bool(np.all(np.abs(r - r[0]) <= tol)) and stab == math.factorial(l)
    return OrbitClass("pair", l, equal, stab)


def _class_components(spec: GroupSpec, cls: OrbitClass) -> int:
    if cls.label == "polar":
        return 2
    if cls.label == "equatorial":
        return spec.k
    if cls.label == "general4":
        return 2 * spec.k
    if cls.label == "pair":
        l = cls.l
        return math.comb(spec.m, l) * (math.factorial(l) // cls.stabilizer) * spec.k ** (l - 1)
    if cls.label == "tail" and spec.tail_dim == 2:
        return 1
    raise OrbitDimensionError(f"orbit of class {cls} is not one-dimensional")


def orbit_dim(spec: GroupSpec, cls: OrbitClass) -> int:
    if cls.label == "tail":
        return spec.tail_dim - 1
    if cls.label in ("general_ambient", "mixed"):
        return spec.tail_dim
    return 1


def orbit_length_formula(spec: GroupSpec, x) -> float:
    """Closed-form orbit length; raises :class:`OrbitDimensionError` for higher-dimensional orbits."""
    x = _as_point(spec, x)
    cls = classify_point(spec, x)
    if orbit_dim(spec, cls) != 1:
        raise OrbitDimensionError(f"orbit of class {cls} has dimension {orbit_dim(spec, cls)}; no length")
    return _class_components(spec, cls) * TWO_PI * float(np.linalg.norm(x))


def orbit_info(spec: GroupSpec, x) -> OrbitInfo:
    x = _as_point(spec, x)
    cls = classify_point(spec, x)
    dim = orbit_dim(spec, cls)
    if dim != 1:
        return OrbitInfo(cls, dim, None, None)
    comps = _class_components(spec, cls)
    return OrbitInfo(cls, 1, comps * TWO_PI * float(np.linalg.norm(x)), comps)


def num_components(spec: GroupSpec, x) -> int:
    if spec.family is not Family.GK4:
        raise UnsupportedOperationError("num_components is defined for the Gk4 family only")
    return _class_components(spec, classify_point(spec, x))


# ---------------------------------------------------------------- BFS oracle


def _canonical_body(points: np.ndarray, m: int, tol: float) -> np.ndarray:
    """Rotate each row by R_phi so that its first nonzero pair lies on the positive first axis."""
    nrm = pair_norms(points, m)
    first = np.argmax(nrm > tol, axis=1)
    rows = np.arange(points.shape[0])
    a = points[rows, 2 * first]
    b = points[rows, 2 * first + 1]
    phi = np.arctan2(b, a)
    # T_phi maps (cos phi, sin phi) to (1, 0)
    return rotate_pairs(points, phi, m)


def _bfs_circle_count(
    x: np.ndarray,
    gens: list[np.ndarray],
    m: int,
    bound: int,
) -> int:
    """Count the distinct R_phi-circles reachable from x under the discrete generators."""
    scale = float(np.linalg.norm(x))
    tol = REL_TOL * scale
    near = 1e-6 * scale
    reps = x[None, :].copy()
    canon = _canonical_body(reps, m, tol)
    frontier = reps
    while frontier.shape[0]:
        cand = np.concatenate([frontier @ g.T for g in gens])
        cc = _canonical_body(cand, m, tol)
        d2 = ((cc[:, None, :] - canon[None, :, :]) ** 2).sum(axis=-1)
        j = np.argmin(d2, axis=1)
        close = np.sqrt(d2[np.arange(len(cand)), j]) < near
        is_new = ~close
        if close.any():
            idx = np.nonzero(close)[0]
            confirm = circle_distance(cand[idx], reps[j[idx]], m) < tol
            is_new[idx[~confirm]] = True
        new_idx = np.nonzero(is_new)[0]
        if new_idx.size:
            nc = cc[new_idx]
            pd = np.sqrt(((nc[:, None, :] - nc[None, :, :]) ** 2).sum(axis=-1))
            first = np.argmax(pd < near, axis=1)
            later = np.nonzero(first < np.arange(new_idx.size))[0]
            keep = np.ones(new_idx.size, dtype=bool)
            if later.size:
                same = circle_distance(cand[new_idx[later]], cand[new_idx[first[later]]], m) < tol
                keep[later[same]] = False
            frontier = cand[new_idx[keep]]
            reps = np.vstack([reps, frontier])
            canon = np.vstack([canon, nc[keep]])
        else:
            frontier = np.empty((0, x.shape[0]))
        if reps.shape[0] > bound:
            raise InternalError(f"BFS found {reps.shape[0]} circles, above the bound {bound}; equality test is broken")
    return int(reps.shape[0])


def orbit_components_numeric(spec: GroupSpec, x) -> int:
    x = _as_point(spec, x)
    scale = float(np.linalg.norm(x))
    tol = REL_TOL * scale
    body = x[: spec.body_dim]
    tail = x[spec.body_dim :]
    bn = float(np.linalg.norm(body))
    tn = float(np.linalg.norm(tail)) if spec.tail_dim else 0.0
    bound = 4 * spec.k**spec.m * math.factorial(spec.m)
    if spec.tail_dim and tn > tol and bn > tol:
        raise OrbitDimensionError("orbit meets both body and tail; dimension exceeds one")
    if bn <= tol:
        if spec.tail_dim != 2:
            raise OrbitDimensionError(f"tail orbit is a sphere of dimension {spec.tail_dim - 1}")
        # circle family = rotations of the tail plane, discrete part = its reflection
        refl = np.diag([1.0, -1.0])
        return _bfs_circle_count(tail, [refl], 1, bound)
    gens = _body_generators(spec)
    return _bfs_circle_count(body, gens, spec.m, bound)


def orbit_length_numeric(spec: GroupSpec, x) -> float:
    """Independent oracle: circles counted by BFS, times 2*pi*|x|."""
    x = _as_point(spec, x)
    return orbit_components_numeric(spec, x) * TWO_PI * float(np.linalg.norm(x))


# ---------------------------------------------------------------- tubes


def tube_distances(spec: GroupSpec, x, ys) -> np.ndarray:
    """dist(orbit of x, y) = min over g of |x - g y| for every row y of ``ys``."""
    x = _as_point(spec, x)
    ys = np.atleast_2d(np.asarray(ys, dtype=float))
    if ys.shape[1] != spec.n:
        raise ConfigurationError(f"points must have {spec.n} coordinates")
    d = spec.body_dim
    group = _finite_body_group(spec)
    xb = x[:d]
    out = np.empty(ys.shape[0])
    ng = group.shape[0]
    chunk = max(1, 20000 // ng)
    for start in range(0, ys.shape[0], chunk):
        yb = ys[start : start + chunk, :d]
        imgs = np.einsum("gij,nj->ngi", group, yb).reshape(-1, d)
        fmin = circle_distance(imgs, np.broadcast_to(xb, imgs.shape), spec.m)
        out[start : start + chunk] = fmin.reshape(-1, ng).min(axis=1)
    if spec.tail_dim:
        xt = float(np.linalg.norm(x[d:]))
        yt = np.linalg.norm(ys[:, d:], axis=1)
        out = np.sqrt(out**2 + (xt - yt) ** 2)
    return out


def tube_distance(spec: GroupSpec, x, y) -> float:
    y = _as_point(spec, y)
    return float(tube_distances(spec, x, y[None, :])[0])


def in_tube(spec: GroupSpec, center, rho: float, y) -> bool:
    if not rho > 0:
        raise ConfigurationError("tube radius must be positive")
    return tube_distance(spec, center, y) < rho


def orbit_samples(spec: GroupSpec, x, n_phi: int = 256) -> np.ndarray:
    """Points of the orbit of x: every finite group element times a uniform phi grid."""
    x = _as_point(spec, x)
    d = spec.body_dim
    imgs = _finite_body_group(spec) @ x[:d]
    phis = TWO_PI * np.arange(n_phi) / n_phi
    pts = np.concatenate([rotate_pairs(imgs, phi, spec.m) for phi in phis])
    if spec.tail_dim:
        pts = np.hstack([pts, np.tile(x[d:], (pts.shape[0], 1))])
    return pts


def orbit_hausdorff(spec_a: GroupSpec, xa, spec_b: GroupSpec, xb, n_phi: int = 256) -> float:
    """Hausdorff distance between the orbit of xa under spec_a and the orbit of xb under spec_b."""
    da = tube_distances(spec_b, xb, orbit_samples(spec_a, xa, n_phi)).max()
    db = tube_distances(spec_a, xa, orbit_samples(spec_b, xb, n_phi)).max()
    return float(max(da, db))


# ---------------------------------------------------------------- degeneracy graphs

_M_LABEL = {1: "M1", 2: "M2", 3: "M3"}


def degeneracy_edges(spec: GroupSpec) -> list[tuple[str, str]]:
    if spec.family is Family.GK4:
        return [("general4", "polar"), ("general4", "equatorial")]
    if spec.family is Family.GK_PRIME:
        return [
            ("general_ambient", "general4"),
            ("general_ambient", "tail"),
            ("general4", "polar"),
            ("general4", "equatorial"),
        ]
    if spec.m == 2:
        body = [("F2_general", "M2"), ("F2_general", "M1")]
        top = "F2_general"
    elif spec.m == 3:
        body = [
            ("F3_general", "F3_two_equal"),
            ("F3_general", "F2_general"),
            ("F3_two_equal", "M3"),
            ("F2_general", "M2"),
            ("F2_general", "M1"),
        ]
        top = "F3_general"
    else:
        raise UnsupportedOperationError("degeneracy graphs are drawn for m in {2, 3} only")
    if spec.tail_dim:
        return [("mixed", top), ("mixed", "tail")] + body
    return body


def graph_label(spec: GroupSpec, cls: OrbitClass) -> str:
    """Node name used by :func:`degeneracy_edges` for an orbit class."""
    if cls.label != "pair":
        return cls.label
    if cls.equal_norms:
        return _M_LABEL.get(cls.l, f"M{cls.l}")
    if cls.l == 3 and cls.stabilizer == 2:
        return "F3_two_equal"
    return f"F{cls.l}_general"


# ---------------------------------------------------------------- k0(m)


def pattern_representatives(m: int, k: int) -> list[np.ndarray]:
    """Unit points covering every pair-norm pattern of R^{2m} (real phases plus one twisted phase each)."""
    reps: list[np.ndarray] = []
    rng = np.random.default_rng(12345)
    for l in range(1, m + 1):
        for blocks in _compositions(l):
            norms = []
            base = 1.0
            for size in blocks:
                norms += [base] * size
                base += 0.37 + 0.11 * len(norms)
            norms = np.array(norms)
            for twist in (False, True):
                phases = np.zeros(l)
                if twist:
                    phases = rng.uniform(0, TWO_PI, l)
                x = np.zeros(2 * m)
                x[0 : 2 * l : 2] = norms * np.cos(phases)
                x[1 : 2 * l : 2] = norms * np.sin(phases)
                reps.append(x / np.linalg.norm(x))
    return reps


def _compositions(l: int) -> list[tuple[int, ...]]:
    """Partitions of l into group sizes (order irrelevant, so non-increasing tuples)."""
    out = []

    def rec(rem, maxpart, acc):
        if rem == 0:
            out.append(tuple(acc))
            return
        for part in range(min(rem, maxpart), 0, -1):
            rec(rem - part, part, acc + [part])

    rec(l, l, [])
    return out


def ordering_holds(m: int, k: int, length: Callable[[GroupSpec, np.ndarray], float] | None = None) -> bool:
    spec = GroupSpec.gk_tilde(k, m)
    length = length or orbit_length_numeric
    by_l: dict[int, list[float]] = {}
    for x in pattern_representatives(m, k):
        l = int((pair_norms(x, m) > REL_TOL).sum())
        by_l.setdefault(l, []).append(length(spec, x))
    return all(max(by_l[l]) < min(by_l[l + 1]) for l in range(1, m))


def k0_min(m: int, k_cap: int = 64) -> int:
    """Smallest k >= 2 for which every orbit in F_l is shorter than every orbit in F_{l+1}."""
    if int(m) != m or m < 2:
        raise ConfigurationError(f"m must be an integer >= 2, got {m}")
    for k in range(2, k_cap + 1):
        if ordering_holds(int(m), k):
            return k
    raise ConfigurationError(f"no k <= {k_cap} orders the orbit lengths for m={m}")


# ---------------------------------------------------------------- random points per orbit class


def class_key(spec: GroupSpec, cls: OrbitClass) -> str:
    return str(cls) if spec.family is Family.GK_TILDE else cls.label


def random_class_points(spec: GroupSpec, per_class: int, seed: int, max_attempts: int = 200_000) -> dict[str, np.ndarray]:
    """Random body points with one-dimensional orbits, bucketed by orbit class.

    Each draw picks the number l of nonzero pairs, a random grouping of them
    into equal-norm blocks, block norms in U(0.2, 2), phases either aligned to
    the lattice (pi/k) Z or uniform, a common random phase and a scale in U(0.5, 3).
    """
    if per_class < 1:
        raise ConfigurationError("per_class must be positive")
    rng = np.random.default_rng(seed)
    m, k = spec.m, spec.k
    buckets: dict[str, list[np.ndarray]] = {}
    comps = {l: _compositions(l) for l in range(1, m + 1)}
    for _ in range(max_attempts):
        l = int(rng.integers(1, m + 1))
        blocks = comps[l][int(rng.integers(len(comps[l])))]
        norms = np.concatenate([np.full(b, rng.uniform(0.2, 2.0)) for b in blocks])
        rng.shuffle(norms)
        if rng.random() < 0.5:
            phases = rng.integers(0, 2 * k, l) * (math.pi / k)
        else:
            phases = rng.uniform(0, TWO_PI, l)
        phases = phases + rng.uniform(0, TWO_PI)
        S = rng.choice(m, l, replace=False)
        x = np.zeros(spec.n)
        x[2 * S] = norms * np.cos(phases)
        x[2 * S + 1] = norms * np.sin(phases)
        x *= rng.uniform(0.5, 3.0) / np.linalg.norm(x)
        cls = classify_point(spec, x)
        if orbit_dim(spec, cls) != 1:
            continue
        key = class_key(spec, cls)
        bucket = buckets.setdefault(key, [])
        if len(bucket) < per_class:
            bucket.append(x)
        if len(buckets) >= _expected_classes(spec) and all(len(b) >= per_class for b in buckets.values()):
            break
    return {key: np.array(v) for key, v in sorted(buckets.items())}


def _expected_classes(spec: GroupSpec) -> int:
    if spec.family is not Family.GK_TILDE:
        return 3
    # one class per (l, stabilizer) pattern reachable by the sampler; a lower bound suffices
    return {1: 1, 2: 3, 3: 6}.get(spec.m, 2 * spec.m)
