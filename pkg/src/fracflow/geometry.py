"""Cartesian coarse grid, fracture-grid intersections and fracture projection paths.

All operations here are pure geometry: no flow quantities, no side effects.
"""

from __future__ import annotations

import warnings
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .exceptions import (
    DegenerateSegmentWarning,
    FractureOnGridLine,
    PathDiscontinuity,
)

# Degree-4 quadrature on the reference triangle (barycentric points, weights sum to 1).
_TRI_Q_PTS = np.array(
    [
        [0.445948490915965, 0.445948490915965, 0.108103018168070],
        [0.445948490915965, 0.108103018168070, 0.445948490915965],
        [0.108103018168070, 0.445948490915965, 0.445948490915965],
        [0.091576213509771, 0.091576213509771, 0.816847572980459],
        [0.091576213509771, 0.816847572980459, 0.091576213509771],
        [0.816847572980459, 0.091576213509771, 0.091576213509771],
    ]
)
_TRI_Q_WTS = np.array(
    [
        0.223381589678011,
        0.223381589678011,
        0.223381589678011,
        0.109951743655322,
        0.109951743655322,
        0.109951743655322,
    ]
)


@dataclass(frozen=True)
class FractureSegment:
    """A straight lower-dimensional fracture with constant aperture.

    The unit tangent points from ``p0`` to ``p1``; the unit normal completes a
    positively oriented pair (tangent, normal).
    """

    p0: tuple[float, float]
    p1: tuple[float, float]
    aperture: float
    k_tau: float
    k_n: float

    def __post_init__(self):
        if self.aperture <= 0 or self.k_tau <= 0 or self.k_n <= 0:
            raise ValueError("aperture and permeabilities must be strictly positive")
        if np.hypot(self.p1[0] - self.p0[0], self.p1[1] - self.p0[1]) == 0.0:
            raise ValueError("fracture endpoints coincide")

    @property
    def length(self) -> float:
        return float(np.hypot(self.p1[0] - self.p0[0], self.p1[1] - self.p0[1]))

    @property
    def tangent(self) -> np.ndarray:
        t = np.array([self.p1[0] - self.p0[0], self.p1[1] - self.p0[1]])
        return t / np.linalg.norm(t)

    @property
    def normal(self) -> np.ndarray:
        t = self.tangent
        return np.array([-t[1], t[0]])

    def point_at(self, t: float) -> np.ndarray:
        p0 = np.asarray(self.p0, dtype=float)
        p1 = np.asarray(self.p1, dtype=float)
        return p0 + t * (p1 - p0)


@dataclass
class CoarseGrid:
    """Cartesian background grid with per-cell diagonal permeability and porosity."""

    nx: int
    ny: int
    dx: float
    dy: float
    origin: tuple[float, float] = (0.0, 0.0)
    kx: np.ndarray | None = None
    ky: np.ndarray | None = None
    phi: np.ndarray | None = None

    def __post_init__(self):
        if self.nx < 1 or self.ny < 1 or self.dx <= 0 or self.dy <= 0:
            raise ValueError("grid needs positive cell counts and spacings")
        n = self.nx * self.ny
        if self.kx is None:
            self.kx = np.ones(n)
        if self.ky is None:
            self.ky = self.kx.copy()
        if self.phi is None:
            self.phi = np.ones(n)
        for name in ("kx", "ky", "phi"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape == ():
                arr = np.full(n, float(arr))
            if arr.shape != (n,):
                raise ValueError(f"{name} must have one value per cell")
            if np.any(arr <= 0):
                raise ValueError(f"{name} must be strictly positive")
            setattr(self, name, arr)

    @classmethod
    def uniform(cls, n, lx=1.0, ly=None, kx=1.0, ky=None, phi=1.0, origin=(0.0, 0.0)):
        ly = lx if ly is None else ly
        ky = kx if ky is None else ky
        ncell = n * n
        return cls(
            nx=n,
            ny=n,
            dx=lx / n,
            dy=ly / n,
            origin=origin,
            kx=np.full(ncell, kx),
            ky=np.full(ncell, ky),
            phi=np.full(ncell, phi),
        )

    @property
    def n_cells(self) -> int:
        return self.nx * self.ny

    @property
    def cell_area(self) -> float:
        return self.dx * self.dy

    def cell_index(self, ix: int, iy: int) -> int:
        return iy * self.nx + ix

    def cell_ij(self, idx: int) -> tuple[int, int]:
        return idx % self.nx, idx // self.nx

    def cell_of_point(self, x: float, y: float) -> tuple[int, int]:
        ix = min(max(int((x - self.origin[0]) / self.dx), 0), self.nx - 1)
        iy = min(max(int((y - self.origin[1]) / self.dy), 0), self.ny - 1)
        return ix, iy

    def cell_rect(self, ix: int, iy: int) -> tuple[float, float, float, float]:
        x0 = self.origin[0] + ix * self.dx
        y0 = self.origin[1] + iy * self.dy
        return (x0, y0, x0 + self.dx, y0 + self.dy)

    def cell_center(self, ix: int, iy: int) -> np.ndarray:
        x0, y0, x1, y1 = self.cell_rect(ix, iy)
        return np.array([0.5 * (x0 + x1), 0.5 * (y0 + y1)])

    @property
    def extent(self) -> tuple[float, float, float, float]:
        return (
            self.origin[0],
            self.origin[1],
            self.origin[0] + self.nx * self.dx,
            self.origin[1] + self.ny * self.dy,
        )


@dataclass
class CutCellInfo:
    """One coarse cell crossed by a fracture sub-segment."""

    cell: int  # flat cell index
    frac_index: int  # position along the fracture, from p0
    p_start: np.ndarray
    p_end: np.ndarray
    length: float
    avg_dist: float
    ci: float

    @property
    def midpoint(self) -> np.ndarray:
        return 0.5 * (self.p_start + self.p_end)


# ---------------------------------------------------------------------------
# polygon helpers


def polygon_area(poly) -> float:
    """Shoelace area of a (possibly empty) polygon given as a vertex sequence."""
    if len(poly) < 3:
        return 0.0
    a = 0.0
    n = len(poly)
    for i in range(n):
        x0, y0 = poly[i]
        x1, y1 = poly[(i + 1) % n]
        a += x0 * y1 - x1 * y0
    return abs(a) / 2.0


def clip_halfplane(poly, normal, offset, keep_positive=True):
    """Clip a convex polygon against s(x) = normal.x - offset >= 0 (or <= 0)."""
    sgn = 1.0 if keep_positive else -1.0
    out = []
    n = len(poly)
    if n == 0:
        return out
    svals = [sgn * (normal[0] * p[0] + normal[1] * p[1] - offset) for p in poly]
    for i in range(n):
        j = (i + 1) % n
        pi, pj = poly[i], poly[j]
        si, sj = svals[i], svals[j]
        if si >= 0.0:
            out.append(pi)
            if sj < 0.0:
                t = si / (si - sj)
                out.append((pi[0] + t * (pj[0] - pi[0]), pi[1] + t * (pj[1] - pi[1])))
        elif sj >= 0.0:
            t = si / (si - sj)
            out.append((pi[0] + t * (pj[0] - pi[0]), pi[1] + t * (pj[1] - pi[1])))
    return out


def clip_polygon_to_rect(poly, rect) -> float:
    """Area of the intersection of a convex polygon with an axis-aligned rectangle."""
    x0, y0, x1, y1 = rect
    p = list(poly)
    p = clip_halfplane(p, (1.0, 0.0), x0, keep_positive=True)
    p = clip_halfplane(p, (1.0, 0.0), x1, keep_positive=False)
    p = clip_halfplane(p, (0.0, 1.0), y0, keep_positive=True)
    p = clip_halfplane(p, (0.0, 1.0), y1, keep_positive=False)
    return polygon_area(p)


def _integrate_linear(poly, normal, offset) -> float:
    """Integral of (normal.x - offset) over a convex polygon, by fan quadrature.

    Exact for the linear integrand (degree-4 rule on each fan triangle).
    """
    if len(poly) < 3:
        return 0.0
    total = 0.0
    p0 = poly[0]
    for i in range(1, len(poly) - 1):
        p1, p2 = poly[i], poly[i + 1]
        area = 0.5 * abs(
            (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1])
        )
        if area == 0.0:
            continue
        xs = (
            _TRI_Q_PTS[:, 0, None] * np.asarray(p0)
            + _TRI_Q_PTS[:, 1, None] * np.asarray(p1)
            + _TRI_Q_PTS[:, 2, None] * np.asarray(p2)
        )
        vals = xs[:, 0] * normal[0] + xs[:, 1] * normal[1] - offset
        total += area * float(np.dot(_TRI_Q_WTS, vals))
    return total


def average_distance(rect, seg_point, normal) -> float:
    """Mean |(x - x_f) . n| over a rectangle, n the fracture unit normal.

    The integrand has a kink along the fracture line, so the rectangle is split
    by the line first and the (then linear) integrand is integrated by Gauss
    quadrature on each part.
    """
    x0, y0, x1, y1 = rect
    poly = [(x0, y0), (x1, y0), (x1, y1), (x0, y1)]
    offset = normal[0] * seg_point[0] + normal[1] * seg_point[1]
    pos = clip_halfplane(poly, normal, offset, keep_positive=True)
    neg = clip_halfplane(poly, normal, offset, keep_positive=False)
    integral = _integrate_linear(pos, normal, offset) - _integrate_linear(
        neg, normal, offset
    )
    area = (x1 - x0) * (y1 - y0)
    return integral / area


# ---------------------------------------------------------------------------
# fracture-grid intersection


def intersect_fracture(
    grid: CoarseGrid, frac: FractureSegment, merge_tol: float = 1e-12
) -> list[CutCellInfo]:
    """Cut a fracture segment against the coarse grid.

    Returns one :class:`CutCellInfo` per crossed cell, ordered from ``p0`` to
    ``p1``.  Sub-segments shorter than ``merge_tol * min(dx, dy)`` are merged
    into the adjacent fracture cell with a warning.
    """
    gx0, gy0, gx1, gy1 = grid.extent
    p0 = np.asarray(frac.p0, dtype=float)
    p1 = np.asarray(frac.p1, dtype=float)
    eps = 1e-12 * max(gx1 - gx0, gy1 - gy0)
    for p in (p0, p1):
        if not (gx0 - eps <= p[0] <= gx1 + eps and gy0 - eps <= p[1] <= gy1 + eps):
            raise ValueError(f"fracture endpoint {p} outside the domain")

    d = p1 - p0
    line_tol = 1e-12 * min(grid.dx, grid.dy)
    if abs(d[1]) < line_tol:
        # horizontal segment: reject if collinear with a horizontal grid line
        r = (p0[1] - gy0) / grid.dy
        if abs(r - round(r)) * grid.dy < line_tol and 0 < round(r) < grid.ny:
            raise FractureOnGridLine(
                f"horizontal fracture at y={p0[1]} lies on a coarse face"
            )
    if abs(d[0]) < line_tol:
        r = (p0[0] - gx0) / grid.dx
        if abs(r - round(r)) * grid.dx < line_tol and 0 < round(r) < grid.nx:
            raise FractureOnGridLine(
                f"vertical fracture at x={p0[0]} lies on a coarse face"
            )

    # parametric crossing times with interior grid lines
    ts = [0.0, 1.0]
    if abs(d[0]) > 0.0:
        for i in range(1, grid.nx):
            t = (gx0 + i * grid.dx - p0[0]) / d[0]
            if 0.0 < t < 1.0:
                ts.append(t)
    if abs(d[1]) > 0.0:
        for j in range(1, grid.ny):
            t = (gy0 + j * grid.dy - p0[1]) / d[1]
            if 0.0 < t < 1.0:
                ts.append(t)
    ts = sorted(set(ts))

    # raw sub-segments, then merge the degenerate ones
    floor = merge_tol * min(grid.dx, grid.dy)
    length_total = frac.length
    pieces = []
    for ta, tb in zip(ts[:-1], ts[1:]):
        seg_len = (tb - ta) * length_total
        pieces.append([ta, tb, seg_len])
    merged = []
    for piece in pieces:
        if piece[2] < floor and merged:
            warnings.warn(
                "sub-segment below length floor merged into its neighbor",
                DegenerateSegmentWarning,
            )
            merged[-1][1] = piece[1]
            merged[-1][2] += piece[2]
        else:
            merged.append(piece)
    # a leading degenerate piece merges forward
    if merged and merged[0][2] < floor and len(merged) > 1:
        warnings.warn(
            "sub-segment below length floor merged into its neighbor",
            DegenerateSegmentWarning,
        )
        merged[1][0] = merged[0][0]
        merged[1][2] += merged[0][2]
        merged = merged[1:]

    normal = frac.normal
    cuts: list[CutCellInfo] = []
    for k, (ta, tb, _) in enumerate(merged):
        pa = frac.point_at(ta)
        pb = frac.point_at(tb)
        mid = 0.5 * (pa + pb)
        ix, iy = grid.cell_of_point(mid[0], mid[1])
        rect = grid.cell_rect(ix, iy)
        seg_len = float(np.linalg.norm(pb - pa))
        avg = average_distance(rect, mid, normal)
        cuts.append(
            CutCellInfo(
                cell=grid.cell_index(ix, iy),
                frac_index=k,
                p_start=pa,
                p_end=pb,
                length=seg_len,
                avg_dist=avg,
                ci=seg_len / avg,
            )
        )
    return cuts


# ---------------------------------------------------------------------------
# projection path (continuous fracture projection onto coarse faces)


@dataclass(frozen=True)
class FaceRef:
    """A coarse grid face: axis 'v' for vertical (x = const), 'h' for horizontal."""

    axis: str
    i: int
    j: int

    def nodes(self) -> tuple[tuple[int, int], tuple[int, int]]:
        if self.axis == "v":
            return ((self.i, self.j), (self.i, self.j + 1))
        return ((self.i, self.j), (self.i + 1, self.j))

    def cells(self, grid: CoarseGrid):
        """(negative-side cell, positive-side cell); None outside the domain."""
        if self.axis == "v":
            lo = grid.cell_index(self.i - 1, self.j) if self.i > 0 else None
            hi = grid.cell_index(self.i, self.j) if self.i < grid.nx else None
        else:
            lo = grid.cell_index(self.i, self.j - 1) if self.j > 0 else None
            hi = grid.cell_index(self.i, self.j) if self.j < grid.ny else None
        return lo, hi

    def measure(self, grid: CoarseGrid) -> float:
        return grid.dy if self.axis == "v" else grid.dx

    def center(self, grid: CoarseGrid) -> np.ndarray:
        gx0, gy0 = grid.origin
        if self.axis == "v":
            return np.array([gx0 + self.i * grid.dx, gy0 + (self.j + 0.5) * grid.dy])
        return np.array([gx0 + (self.i + 0.5) * grid.dx, gy0 + self.j * grid.dy])


@dataclass
class ProjEntry:
    """Projection of one fracture cell onto one coarse face."""

    face: FaceRef
    area: float  # projected face portion (2D measure of a face piece)
    nn_cell: int | None  # cell on the far side of the face (None on the boundary)
    nn_dist: float | None  # centroid distance from nn_cell to the fracture cell


@dataclass
class ProjectionPath:
    """Per-fracture-cell face projections plus any repair faces added for continuity."""

    grid: CoarseGrid
    entries_x: list[ProjEntry | None]
    entries_y: list[ProjEntry | None]
    repairs: list[tuple[int, ProjEntry]] = field(default_factory=list)

    def face_set(self, k: int) -> list[FaceRef]:
        faces = []
        if self.entries_x[k] is not None:
            faces.append(self.entries_x[k].face)
        if self.entries_y[k] is not None:
            faces.append(self.entries_y[k].face)
        faces.extend(e.face for owner, e in self.repairs if owner == k)
        return faces

    @property
    def n_cells(self) -> int:
        return len(self.entries_x)

    @property
    def repair_count(self) -> int:
        return len(self.repairs)

    def is_continuous(self) -> bool:
        """Node-connectivity predicate: consecutive face sets share a grid node."""
        sets = [self.face_set(k) for k in range(self.n_cells)]
        if any(len(s) == 0 for s in sets):
            return False
        for a, b in zip(sets[:-1], sets[1:]):
            nodes_a = {n for f in a for n in f.nodes()}
            nodes_b = {n for f in b for n in f.nodes()}
            if not (nodes_a & nodes_b):
                return False
        return True


def _select_entry(grid, cut, axis, cut_cells):
    """Nearest-face selection for one axis; ties break toward the negative side."""
    ix, iy = grid.cell_ij(cut.cell)
    mid = cut.midpoint
    cx, cy = grid.cell_center(ix, iy)
    if axis == "x":
        extent = abs(cut.p_end[1] - cut.p_start[1])
        side = 0 if mid[0] <= cx else 1
        face = FaceRef("v", ix + side, iy)
    else:
        extent = abs(cut.p_end[0] - cut.p_start[0])
        side = 0 if mid[1] <= cy else 1
        face = FaceRef("h", ix, iy + side)
    if extent <= 1e-14 * min(grid.dx, grid.dy):
        return None
    lo, hi = face.cells(grid)
    nn = lo if hi == cut.cell else hi
    if nn is None:
        dist = None
    else:
        nn_center = grid.cell_center(*grid.cell_ij(nn))
        dist = float(np.linalg.norm(nn_center - mid))
    return ProjEntry(face=face, area=float(extent), nn_cell=nn, nn_dist=dist)


def _bridge_faces(grid, frac, set_a, set_b, max_band):
    """Shortest face path (BFS over grid nodes) connecting two face sets.

    The search is restricted to nodes within ``max_band`` of the fracture so
    repairs stay local; ordering is deterministic.
    """
    nodes_a = sorted({n for f in set_a for n in f.nodes()})
    nodes_b = {n for f in set_b for n in f.nodes()}
    p0 = np.asarray(frac.p0, float)
    t = frac.tangent
    length = frac.length

    def near(nd):
        gx0, gy0 = grid.origin
        p = np.array([gx0 + nd[0] * grid.dx, gy0 + nd[1] * grid.dy])
        s = float(np.dot(p - p0, t))
        s = min(max(s, 0.0), length)
        return float(np.linalg.norm(p - (p0 + s * t))) <= max_band

    prev: dict = {n: None for n in nodes_a}
    queue = deque(nodes_a)
    goal = None
    while queue:
        nd = queue.popleft()
        if nd in nodes_b:
            goal = nd
            break
        i, j = nd
        for nxt in ((i - 1, j), (i + 1, j), (i, j - 1), (i, j + 1)):
            if not (0 <= nxt[0] <= grid.nx and 0 <= nxt[1] <= grid.ny):
                continue
            if nxt in prev or not near(nxt):
                continue
            prev[nxt] = nd
            queue.append(nxt)
    if goal is None:
        return None
    faces = []
    nd = goal
    while prev[nd] is not None:
        pr = prev[nd]
        if pr[0] == nd[0]:  # vertical move -> vertical face at x = i
            faces.append(FaceRef("v", nd[0], min(pr[1], nd[1])))
        else:
            faces.append(FaceRef("h", min(pr[0], nd[0]), nd[1]))
        nd = pr
    return faces


def build_projection_path(
    grid: CoarseGrid,
    cuts: list[CutCellInfo],
    frac: FractureSegment,
    neighbor_only: bool = False,
    repair: bool = True,
) -> ProjectionPath:
    """Build the continuous fracture projection path.

    ``neighbor_only=True`` reproduces the defective variant that only admits
    projections toward cells not cut by the fracture (and never repairs unless
    asked): the path it produces can have holes.  The default algorithm keeps
    every nearest-face projection and bridges any remaining node-connectivity
    gaps with repair faces, which may belong to cells not adjacent to any cut
    cell.
    """
    cut_cells = {c.cell for c in cuts}
    ex: list[ProjEntry | None] = []
    ey: list[ProjEntry | None] = []
    for cut in cuts:
        entry_x = _select_entry(grid, cut, "x", cut_cells)
        entry_y = _select_entry(grid, cut, "y", cut_cells)
        if neighbor_only:
            if entry_x is not None and (
                entry_x.nn_cell is None or entry_x.nn_cell in cut_cells
            ):
                entry_x = None
            if entry_y is not None and (
                entry_y.nn_cell is None or entry_y.nn_cell in cut_cells
            ):
                entry_y = None
        ex.append(entry_x)
        ey.append(entry_y)

    path = ProjectionPath(grid=grid, entries_x=ex, entries_y=ey)
    if not repair or path.is_continuous():
        return path

    # repair pass: bridge consecutive face sets that do not share a node
    band = 2.5 * max(grid.dx, grid.dy)
    sets = [path.face_set(k) for k in range(path.n_cells)]
    anchor = None
    anchor_k = None
    for k, s in enumerate(sets):
        if not s:
            continue
        if anchor is None:
            anchor, anchor_k = list(s), k
            continue
        nodes_prev = {n for f in anchor for n in f.nodes()}
        nodes_cur = {n for f in s for n in f.nodes()}
        if not (nodes_prev & nodes_cur):
            bridge = _bridge_faces(grid, frac, anchor, s, band)
            if bridge is None:
                raise PathDiscontinuity(
                    f"cannot bridge projection faces between fracture cells "
                    f"{anchor_k} and {k}"
                )
            for f in bridge:
                lo, hi = f.cells(grid)
                mid = cuts[k].midpoint
                nn = None
                dist = None
                for cand in (lo, hi):
                    if cand is not None and cand not in cut_cells:
                        nn = cand
                        c = grid.cell_center(*grid.cell_ij(cand))
                        dist = float(np.linalg.norm(c - mid))
                        break
                path.repairs.append(
                    (k, ProjEntry(face=f, area=f.measure(grid), nn_cell=nn, nn_dist=dist))
                )
        anchor, anchor_k = list(path.face_set(k)), k
    if not path.is_continuous():
        raise PathDiscontinuity("projection path still disconnected after repair")
    return path
