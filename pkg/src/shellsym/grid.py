"""Structured grid on the reduced chart domain.

Nodes sit on the lattice h * Z^3 in chart coordinates (y1, y2, r1).  The
unknowns are the values at *free* nodes: lattice points of the closed
sector 0 <= arg(y) <= pi/k inside the cone r1 >= |y| and strictly inside
the shell.  Every other node touched by a cell stencil is either
*Dirichlet* (on or outside a shell sphere, value 0) or a *ghost*.  A ghost
takes the value of the function at its image in the fundamental sector,
found by folding across the cone face and reflecting/rotating the angle,
and interpolated trilinearly.  The resulting linear extension from free
values to all box values is stored as a sparse matrix.

Cells are selected by their centres (staircase boundary); the cell weight
carries the chart weight 4*pi*r1 and the number of sector copies.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp

from . import kernels
from .errors import ConfigurationError, DegenerateInputError, InternalError
from .reduction import FOUR_PI, SQRT2, metric_entries

FREE, GHOST, DIRICHLET, UNUSED = 1, 2, 3, 0
_SNAP = 1e-9
# corner offsets in the order used by the kernels
CORNERS = np.array(
    [[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1], [1, 1, 0], [1, 0, 1], [0, 1, 1], [1, 1, 1]], dtype=np.int64
)


def fundamental_image(points: np.ndarray, k: int) -> np.ndarray:
    """Image of chart-box points in the sector 0 <= arg(y) <= pi/k inside the cone.

    Points outside the cone are folded: (y, r1) -> (r1 * y / |y|, |y|); then the
    angle is reduced modulo 2*pi/k and reflected to be nonnegative.  All maps
    preserve |y|^2 + r1^2.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    y1, y2, r1 = pts[:, 0], pts[:, 1], pts[:, 2]
    s = np.hypot(y1, y2)
    outside = s > r1
    new_s = np.where(outside, r1, s)
    new_r1 = np.where(outside, s, r1)
    theta = np.arctan2(y2, y1)
    period = 2.0 * math.pi / k
    theta = np.abs(np.mod(theta + math.pi / k, period) - math.pi / k)
    return np.column_stack([new_s * np.cos(theta), new_s * np.sin(theta), new_r1])


@dataclass
class Grid3:
    R: float
    k: int
    h: float
    shape: tuple[int, int, int]
    offset: tuple[int, int, int]
    kind: np.ndarray  # per box node
    free_box: np.ndarray  # box flat index of each free node
    extension: sp.csr_matrix  # box values = extension @ free values
    cell_base: np.ndarray
    cell_center: np.ndarray
    cell_weight: np.ndarray
    a11: np.ndarray
    a12: np.ndarray
    a22: np.ndarray

    @property
    def strides(self) -> tuple[int, int, int]:
        n1, n2, n3 = self.shape
        return n2 * n3, n3, 1

    @property
    def n_free(self) -> int:
        return int(self.free_box.size)

    @property
    def n_cells(self) -> int:
        return int(self.cell_base.size)

    @property
    def multiplicity(self) -> int:
        """Number of sector copies that tile the full chart domain."""
        return 2 * self.k

    def node_coords(self, flat: np.ndarray | None = None) -> np.ndarray:
        if flat is None:
            flat = np.arange(int(np.prod(self.shape)))
        idx = np.column_stack(np.unravel_index(flat, self.shape))
        return (idx + np.asarray(self.offset)) * self.h

    def free_coords(self) -> np.ndarray:
        return self.node_coords(self.free_box)

    def to_box(self, values: np.ndarray) -> np.ndarray:
        return self.extension @ values

    def pull_back(self, box_grad: np.ndarray) -> np.ndarray:
        return self.extension.T @ box_grad

    def weighted_volume(self) -> float:
        return math.fsum(self.cell_weight)

    def describe(self) -> dict:
        return {
            "R": self.R,
            "k": self.k,
            "h": self.h,
            "shape": list(self.shape),
            "offset": list(self.offset),
            "free_nodes": self.n_free,
            "ghost_nodes": int((self.kind == GHOST).sum()),
            "dirichlet_nodes": int((self.kind == DIRICHLET).sum()),
            "cells": self.n_cells,
        }


def _classify(idx: np.ndarray, offset, h: float, R: float, k: int) -> np.ndarray:
    """FREE / DIRICHLET / GHOST for integer lattice indices (rows of idx)."""
    g = idx + np.asarray(offset)
    i, j, l = g[:, 0], g[:, 1], g[:, 2]
    rad2 = (i * i + j * j + l * l) * (h * h)
    dirichlet = (rad2 <= (R - 1.0) ** 2) | (rad2 >= (R + 1.0) ** 2)
    cone = l * l >= i * i + j * j
    half = math.pi / k
    y1 = i * h
    y2 = j * h
    tol = 1e-9 * h
    sector = (j >= 0) & (y2 * math.cos(half) <= y1 * math.sin(half) + tol) & (l >= 0)
    kind = np.full(idx.shape[0], GHOST, dtype=np.int8)
    kind[cone & sector] = FREE
    kind[dirichlet] = DIRICHLET
    return kind


def _stencil(points: np.ndarray, offset, h: float, shape) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Trilinear stencils (row, box flat index, weight) for points, snapping to lattice planes."""
    f = points / h - np.asarray(offset)
    base = np.floor(f).astype(np.int64)
    frac = f - base
    lo_snap = frac < _SNAP
    hi_snap = frac > 1.0 - _SNAP
    base = base + hi_snap
    frac = np.where(lo_snap | hi_snap, 0.0, frac)
    rows, cols, vals = [], [], []
    n = points.shape[0]
    for c in CORNERS:
        w = np.ones(n)
        for ax in range(3):
            w = w * (frac[:, ax] if c[ax] else 1.0 - frac[:, ax])
        keep = w > 0.0
        nb = base[keep] + c
        if np.any(nb < 0) or np.any(nb >= np.asarray(shape)):
            raise InternalError("ghost stencil leaves the node box")
        rows.append(np.nonzero(keep)[0])
        cols.append(np.ravel_multi_index(nb.T, shape))
        vals.append(w[keep])
    return np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)


def build_grid(R: float, k: int, h: float) -> Grid3:
    if not R > 2:
        raise ConfigurationError("layer radius must exceed 2")
    if not (0 < h <= 0.5):
        raise ConfigurationError("spacing must lie in (0, 0.5]")
    if int(k) != k or k < 2:
        raise ConfigurationError("wedge order must be an integer >= 2")
    k = int(k)
    half = math.pi / k
    ymax = (R + 1.0) / SQRT2
    margin = 2
    lo = (
        -margin,
        -margin,
        int(math.floor((R - 1.0) / SQRT2 / h)) - margin,
    )
    hi = (
        int(math.ceil(ymax / h)) + margin,
        int(math.ceil(ymax * math.sin(min(half, math.pi / 2)) / h)) + margin,
        int(math.ceil((R + 1.0) / h)) + margin,
    )
    shape = tuple(hi[a] - lo[a] + 1 for a in range(3))
    nbox = int(np.prod(shape))
    strides = (shape[1] * shape[2], shape[2], 1)

    # candidate cells: lower corners over the box minus the top layer
    ci = np.stack(np.meshgrid(*(np.arange(s - 1) for s in shape), indexing="ij"), axis=-1).reshape(-1, 3)
    centers = (ci + np.asarray(lo) + 0.5) * h
    cy = np.hypot(centers[:, 0], centers[:, 1])
    ctheta = np.arctan2(centers[:, 1], centers[:, 0])
    tol = 1e-12
    in_sector = (ctheta >= -tol) & (ctheta <= half + tol)
    in_cone = centers[:, 2] >= cy
    cand = in_sector & in_cone
    ci = ci[cand]
    centers = centers[cand]
    ctheta = ctheta[cand]
    corner_idx = ci[:, None, :] + CORNERS[None, :, :]
    corner_kind = _classify(corner_idx.reshape(-1, 3), lo, h, R, k).reshape(-1, 8)
    alive = (corner_kind != DIRICHLET).any(axis=1)
    ci, centers, ctheta, corner_idx = ci[alive], centers[alive], ctheta[alive], corner_idx[alive]
    if ci.shape[0] == 0:
        raise ConfigurationError("grid has no active cells; decrease the spacing")
    mirror = np.abs(ctheta - half) <= 1e-12
    copies = np.where(mirror, float(k), 2.0 * k)
    cell_weight = FOUR_PI * centers[:, 2] * h**3 * copies
    a11, a12, a22 = metric_entries(centers)
    cell_base = ci @ np.asarray(strides, dtype=np.int64)

    # node classification for every box node
    all_idx = np.column_stack(np.unravel_index(np.arange(nbox), shape))
    kind = _classify(all_idx, lo, h, R, k)
    used = np.zeros(nbox, dtype=bool)
    used[np.unique(corner_idx.reshape(-1, 3) @ np.asarray(strides, dtype=np.int64))] = True

    # ghost closure: stencils of ghost images may reference further ghosts
    ghost_rows: dict[int, tuple[np.ndarray, np.ndarray]] = {}
    frontier = np.nonzero(used & (kind == GHOST))[0]
    while frontier.size:
        pts = (all_idx[frontier] + np.asarray(lo)) * h
        img = fundamental_image(pts, k)
        rows, cols, vals = _stencil(img, lo, h, shape)
        order = np.argsort(rows, kind="stable")
        rows, cols, vals = rows[order], cols[order], vals[order]
        splits = np.searchsorted(rows, np.arange(frontier.size + 1))
        new = []
        for t, g in enumerate(frontier):
            c = cols[splits[t] : splits[t + 1]]
            v = vals[splits[t] : splits[t + 1]]
            keep = kind[c] != DIRICHLET
            c, v = c[keep], v[keep]
            if np.any((c == g) & (v > 1.0 - 1e-12)):
                raise InternalError("ghost node maps onto itself")
            ghost_rows[int(g)] = (c, v)
            for cc in c:
                if kind[cc] == GHOST and not used[cc]:
                    used[cc] = True
                    new.append(cc)
        frontier = np.array(sorted(set(new)), dtype=np.int64)
    kind[~used] = UNUSED

    free_box = np.nonzero(kind == FREE)[0]
    if free_box.size == 0:
        raise ConfigurationError("grid has no interior nodes; decrease the spacing")
    free_pos = np.full(nbox, -1, dtype=np.int64)
    free_pos[free_box] = np.arange(free_box.size)
    ghosts = np.array(sorted(ghost_rows), dtype=np.int64)
    ghost_pos = np.full(nbox, -1, dtype=np.int64)
    ghost_pos[ghosts] = np.arange(ghosts.size)

    # W_GF and W_GG, then X = W_GF + W_GG X by fixed-point iteration
    gf_r, gf_c, gf_v, gg_r, gg_c, gg_v = [], [], [], [], [], []
    for t, g in enumerate(ghosts):
        c, v = ghost_rows[int(g)]
        isf = kind[c] == FREE
        gf_r.append(np.full(isf.sum(), t))
        gf_c.append(free_pos[c[isf]])
        gf_v.append(v[isf])
        gg_r.append(np.full((~isf).sum(), t))
        gg_c.append(ghost_pos[c[~isf]])
        gg_v.append(v[~isf])
    ng, nf = ghosts.size, free_box.size
    if ng:
        W_gf = sp.csr_matrix((np.concatenate(gf_v), (np.concatenate(gf_r), np.concatenate(gf_c))), shape=(ng, nf))
        W_gg = sp.csr_matrix((np.concatenate(gg_v), (np.concatenate(gg_r), np.concatenate(gg_c))), shape=(ng, ng))
        # a ghost near the cone face can lie in its own stencil; solve that loop exactly
        self_w = W_gg.diagonal()
        scale = sp.diags(1.0 / (1.0 - self_w))
        W_gg = (scale @ (W_gg - sp.diags(self_w))).tocsr()
        W_gg.eliminate_zeros()
        W_gf = (scale @ W_gf).tocsr()
        X = W_gf.copy()
        for _ in range(500):
            if W_gg.nnz == 0:
                break
            X_new = W_gf + W_gg @ X
            X_new.data[np.abs(X_new.data) < 1e-15] = 0.0
            X_new.eliminate_zeros()
            diff = abs(X_new - X).max() if X_new.nnz else 0.0
            X = X_new
            if diff < 1e-14:
                break
        else:
            raise InternalError("ghost extension did not converge")
        X = X.tocoo()
    rows = [free_box]
    cols = [np.arange(nf)]
    vals = [np.ones(nf)]
    if ng:
        rows.append(ghosts[X.row])
        cols.append(X.col)
        vals.append(X.data)
    ext = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(nbox, nf))

    return Grid3(
        R=float(R),
        k=k,
        h=float(h),
        shape=shape,
        offset=lo,
        kind=kind,
        free_box=free_box,
        extension=ext,
        cell_base=np.ascontiguousarray(cell_base, dtype=np.int64),
        cell_center=centers,
        cell_weight=np.ascontiguousarray(cell_weight),
        a11=np.ascontiguousarray(a11),
        a12=np.ascontiguousarray(a12),
        a22=np.ascontiguousarray(a22),
    )


# ---------------------------------------------------------------- grid functions


@dataclass
class GridFunction:
    grid: Grid3
    values: np.ndarray  # one value per free node

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.n_free,):
            raise ConfigurationError("value vector does not match the free nodes of the grid")
        if not np.all(np.isfinite(self.values)):
            raise DegenerateInputError("grid function has non-finite values")

    @classmethod
    def from_callable(cls, grid: Grid3, f: Callable[[np.ndarray], np.ndarray]) -> "GridFunction":
        """Sample f at the free nodes; f should be invariant under the sector symmetries."""
        return cls(grid, np.asarray(f(grid.free_coords()), dtype=float))

    def box_values(self) -> np.ndarray:
        return self.grid.to_box(self.values)

    def scaled(self, c: float) -> "GridFunction":
        return GridFunction(self.grid, c * self.values)

    def copy(self) -> "GridFunction":
        return GridFunction(self.grid, self.values.copy())


def symmetric_images(center, k: int) -> np.ndarray:
    """The 2k chart images of a point under the angle rotations by 2*pi/k and the reflection y2 -> -y2."""
    c = np.asarray(center, dtype=float)
    s = math.hypot(c[0], c[1])
    theta = math.atan2(c[1], c[0])
    out = []
    for j in range(k):
        for sign in (1.0, -1.0):
            t = sign * theta + 2.0 * math.pi * j / k
            out.append((s * math.cos(t), s * math.sin(t), c[2]))
    return np.array(out)


def cell_gradient(u: GridFunction) -> np.ndarray:
    """Cell-centred gradient (average of the four edge differences per axis)."""
    g = u.grid
    ub = u.box_values()
    s = np.asarray(g.strides, dtype=np.int64)
    corners = g.cell_base[:, None] + CORNERS @ s
    vals = ub[corners]
    signs = 2.0 * CORNERS - 1.0
    return vals @ signs / (4.0 * g.h)


def energy_p(u: GridFunction, p: float, eps_reg: float = 0.0) -> float:
    return energy_and_grad(u.grid, u.values, p, eps_reg, want_grad=False)[0]


def energy_and_grad(grid: Grid3, values: np.ndarray, p: float, eps_reg: float = 0.0, want_grad: bool = True):
    if p <= 1:
        raise ConfigurationError("p must exceed 1")
    if eps_reg < 0:
        raise ConfigurationError("regularization must be nonnegative")
    ub = np.ascontiguousarray(grid.to_box(values))
    gb = np.zeros_like(ub)
    s1, s2, s3 = grid.strides
    e = kernels.energy_grad(
        ub, grid.cell_base, s1, s2, s3, grid.a11, grid.a12, grid.a22, grid.cell_weight, grid.h, p, eps_reg, gb, want_grad
    )
    return float(e), (grid.pull_back(gb) if want_grad else None)


def mass_and_grad(grid: Grid3, values: np.ndarray, q: float, want_grad: bool = True):
    if q < 1:
        raise ConfigurationError("q must be at least 1")
    ub = np.ascontiguousarray(grid.to_box(values))
    gb = np.zeros_like(ub)
    s1, s2, s3 = grid.strides
    m = kernels.mass_grad(ub, grid.cell_base, s1, s2, s3, grid.cell_weight, q, gb, want_grad)
    return float(m), (grid.pull_back(gb) if want_grad else None)


def norm_q(u: GridFunction, q: float) -> float:
    return mass_and_grad(u.grid, u.values, q, want_grad=False)[0] ** (1.0 / q)


def interior_cells(grid: Grid3) -> np.ndarray:
    """Cells with no Dirichlet corner."""
    corners = grid.cell_base[:, None] + CORNERS @ np.asarray(grid.strides, dtype=np.int64)
    return (grid.kind[corners] != DIRICHLET).all(axis=1)


def cell_means(u: GridFunction) -> np.ndarray:
    g = u.grid
    ub = u.box_values()
    corners = g.cell_base[:, None] + CORNERS @ np.asarray(g.strides, dtype=np.int64)
    return ub[corners].mean(axis=1)


def cell_masses(u: GridFunction, q: float) -> np.ndarray:
    return u.grid.cell_weight * np.abs(cell_means(u)) ** q


def mass_in_region(u: GridFunction, q: float, predicate: Callable[[np.ndarray], np.ndarray]) -> float:
    """Fraction of the q-mass carried by cells whose centres satisfy the predicate."""
    m = cell_masses(u, q)
    total = math.fsum(m)
    if total <= 0.0:
        raise DegenerateInputError("mass fraction of the zero function is undefined")
    sel = np.asarray(predicate(u.grid.cell_center), dtype=bool)
    return math.fsum(m[sel]) / total


# ---------------------------------------------------------------- dumps


def dump_grid(u: GridFunction, path, binary: bool = False) -> None:
    """Write node coordinates, kinds and values.

    Text format: '#'-prefixed header lines (R, k, h, shape, offset, ordering)
    followed by CSV rows i1,i2,i3,y1,y2,r1,kind,value over nodes in use.
    Binary format: one header line terminated by '\\n', then little-endian
    float64 values for the whole box in C order (index (i1, i2, i3), i3 fastest).
    """
    g = u.grid
    ub = u.box_values()
    header = (
        f"# shellsym grid v1\n# R={g.R!r} k={g.k} h={g.h!r}\n# shape={g.shape[0]},{g.shape[1]},{g.shape[2]}"
        f" offset={g.offset[0]},{g.offset[1]},{g.offset[2]}\n"
        f"# ordering=C (i1 slowest, i3 fastest); kind 1=interior 2=identified 3=boundary\n"
    )
    if binary:
        with open(path, "wb") as fh:
            fh.write(header.replace("\n", " ").strip().encode() + b"\n")
            fh.write(np.asarray(ub, dtype="<f8").tobytes())
        return
    flat = np.nonzero(g.kind != UNUSED)[0]
    idx = np.column_stack(np.unravel_index(flat, g.shape))
    xyz = g.node_coords(flat)
    with open(path, "w") as fh:
        fh.write(header)
        fh.write("i1,i2,i3,y1,y2,r1,kind,value\n")
        for t in range(flat.size):
            fh.write(
                f"{idx[t,0]},{idx[t,1]},{idx[t,2]},{xyz[t,0]:.17g},{xyz[t,1]:.17g},{xyz[t,2]:.17g},"
                f"{int(g.kind[flat[t]])},{ub[flat[t]]:.17g}\n"
            )


def read_binary_dump(path) -> tuple[str, np.ndarray]:
    with open(path, "rb") as fh:
        header = fh.readline().decode()
        data = np.frombuffer(fh.read(), dtype="<f8")
    return header, data
