"""Multiscale 9-point flux stencils for near-fracture matrix-matrix coupling.

Interaction regions of the dual grid (squares spanned by four cell centers)
are solved with reduced one-dimensional boundary conditions; the resulting
4x4 transmissibility matrices relate corner-cell pressures to the fluxes
through the four subinterfaces meeting at the central node.  Faces between
near-fracture cells then trade their two-point flux for the sum of the two
adjacent subinterface flux expressions, producing rows coupling up to nine
cells.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import fvcore as fv
from .exceptions import ZeroPressureGap
from .fvcore import ConnectionList, StencilFlux
from .geometry import CoarseGrid, FractureSegment
from .ledfm import LedfmResult, clip_segment_to_rect
from .runtime import batch_map
from .trimesh import Constraint, FractureSpec, TriMesh, boundary_faces_tri, dfm_discretize, triangulate

_SUB_NAMES = ("bottom", "right", "top", "left")
# CCW flux orientation per subinterface: +x, +y, -x, -y
_CCW_AXIS = ((0, 1.0), (1, 1.0), (0, -1.0), (1, -1.0))

_CORNERS = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
_EDGE_OF = ((0, 1), (1, 2), (2, 3), (3, 0))  # boundary edges by corner pair, CCW


@dataclass
class InteractionRegion:
    """Dual-grid square spanned by four cell centers around an interior node."""

    node: tuple[int, int]
    rect: tuple[float, float, float, float]
    corner_cells: tuple[int, int, int, int]  # CCW from the lower-left cell
    cut: bool
    frac_local: tuple[tuple[float, float], tuple[float, float]] | None = None


@dataclass
class RegionProblem:
    """Normalized unit-square interaction-region problem."""

    frac_full: tuple[tuple[float, float], tuple[float, float]] | None
    aperture: float
    k_tau: float
    k_n: float
    k_m: float
    h_fine: float = 1 / 32

    def clipped_fracture(self):
        if self.frac_full is None:
            return None
        seg = clip_segment_to_rect(self.frac_full[0], self.frac_full[1], (0, 0, 1, 1))
        if seg is None:
            return None
        q0, q1 = seg
        if np.linalg.norm(q1 - q0) < 1e-12:
            return None
        return (tuple(q0), tuple(q1))

    def edge_crossing(self, edge: int):
        """Parameter of the fracture crossing along boundary edge ``edge`` or None."""
        if self.frac_full is None:
            return None
        a = _CORNERS[_EDGE_OF[edge][0]]
        b = _CORNERS[_EDGE_OF[edge][1]]
        p0 = np.asarray(self.frac_full[0])
        p1 = np.asarray(self.frac_full[1])
        d1 = p1 - p0
        d2 = b - a
        den = d1[0] * d2[1] - d1[1] * d2[0]
        if abs(den) < 1e-14:
            return None
        r = a - p0
        t = (r[0] * d2[1] - r[1] * d2[0]) / den  # along the fracture
        s = (r[0] * d1[1] - r[1] * d1[0]) / den  # along the edge
        if 1e-12 < t < 1 - 1e-12 and 1e-9 < s < 1 - 1e-9:
            return float(s)
        return None


def build_dual_grid(grid: CoarseGrid, frac: FractureSegment | None) -> list[InteractionRegion]:
    """Interior interaction regions with cut flags."""
    if grid.nx < 3 or grid.ny < 3:
        raise ValueError("dual grid needs at least 3 cells per axis")
    gx0, gy0 = grid.origin
    regions = []
    for j in range(1, grid.ny):
        for i in range(1, grid.nx):
            rect = (
                gx0 + (i - 0.5) * grid.dx,
                gy0 + (j - 0.5) * grid.dy,
                gx0 + (i + 0.5) * grid.dx,
                gy0 + (j + 0.5) * grid.dy,
            )
            corners = (
                grid.cell_index(i - 1, j - 1),
                grid.cell_index(i, j - 1),
                grid.cell_index(i, j),
                grid.cell_index(i - 1, j),
            )
            cut = False
            frac_local = None
            if frac is not None:
                seg = clip_segment_to_rect(frac.p0, frac.p1, rect)
                if seg is not None and np.linalg.norm(seg[1] - seg[0]) > 1e-12 * grid.dx:
                    cut = True
                s = grid.dx
                frac_local = (
                    ((frac.p0[0] - rect[0]) / s, (frac.p0[1] - rect[1]) / s),
                    ((frac.p1[0] - rect[0]) / s, (frac.p1[1] - rect[1]) / s),
                )
            regions.append(
                InteractionRegion(
                    node=(i, j), rect=rect, corner_cells=corners, cut=cut,
                    frac_local=frac_local,
                )
            )
    return regions


def reduced_boundary_profile(
    p_a: float,
    p_b: float,
    k_m: float,
    crossing: float | None = None,
    aperture: float = 0.0,
    k_f: float = 0.0,
):
    """1D pressure profile along a unit boundary segment.

    Linear between the corner values; when a fracture crosses the segment the
    profile is the lower-dimensional closed form: equal slopes on both sides
    of the crossing and a jump proportional to d k_m/(k_f + d k_m).
    """
    if crossing is None:
        return lambda s: p_a + (p_b - p_a) * np.asarray(s)
    den = k_f + aperture * k_m
    slope = k_f / den * (p_b - p_a)

    def profile(s):
        s = np.asarray(s)
        left = p_a + slope * s
        right = p_b - slope * (1.0 - s)
        return np.where(s < crossing, left, right)

    return profile


def _region_mesh(problem: RegionProblem) -> TriMesh:
    constraints = [
        Constraint((0.5, 0.0), (0.5, 0.5), "s_bottom"),
        Constraint((0.5, 0.5), (1.0, 0.5), "s_right"),
        Constraint((0.5, 0.5), (0.5, 1.0), "s_top"),
        Constraint((0.0, 0.5), (0.5, 0.5), "s_left"),
    ]
    frac = problem.clipped_fracture()
    if frac is not None:
        constraints.append(Constraint(frac[0], frac[1], "frac"))
    return triangulate(1.0, 1.0, problem.h_fine, constraints)


def _identify_subinterfaces(mesh: TriMesh):
    """Map geometric subinterface slots to constraint chains (rotation-proof)."""
    anchors = {
        0: np.array([0.5, 0.0]),
        1: np.array([1.0, 0.5]),
        2: np.array([0.5, 1.0]),
        3: np.array([0.0, 0.5]),
    }
    out = {}
    for tag, chain in mesh.chains.items():
        if not tag.startswith("s_"):
            continue
        ends = mesh.points[chain[0]], mesh.points[chain[-1]]
        for slot, anchor in anchors.items():
            for e0, e1 in ((ends[0], ends[1]), (ends[1], ends[0])):
                if np.linalg.norm(e0 - anchor) < 1e-9 and np.linalg.norm(
                    e1 - np.array([0.5, 0.5])
                ) < 1e-9:
                    out[slot] = chain
    if len(out) != 4:
        raise ValueError("subinterface chains not found in the region mesh")
    return out


def solve_interaction_region(
    problem: RegionProblem, mesh: TriMesh | None = None
) -> np.ndarray:
    """4x4 transmissibility matrix of one interaction region.

    Column j holds the four CCW subinterface fluxes of the basis solve whose
    reduced boundary data comes from unit pressure at corner j.  Matrix fine
    fluxes only; a fracture crossing a subinterface contributes through the
    coarse fracture-fracture connection instead.
    """
    if mesh is None:
        mesh = _region_mesh(problem)
    frac = problem.clipped_fracture()
    fractures = {}
    if frac is not None and mesh.chains.get("frac"):
        fractures["frac"] = FractureSpec(problem.aperture, problem.k_tau, problem.k_n)
    disc = dfm_discretize(mesh, problem.k_m, problem.k_m, fractures)

    crossings = [problem.edge_crossing(e) for e in range(4)]

    # flux bookkeeping along the four subinterfaces
    subs = _identify_subinterfaces(mesh)
    cents = mesh.tri_centroids()
    pair_to_trans = {}
    c = disc.connections
    for i in range(len(c)):
        a_, b_ = int(c.cell_a[i]), int(c.cell_b[i])
        pair_to_trans[(min(a_, b_), max(a_, b_))] = float(c.trans[i])
    sub_edges = {}
    for slot, chain in subs.items():
        axis, sign = _CCW_AXIS[slot]
        entries = []
        for a, b in zip(chain[:-1], chain[1:]):
            key = (min(a, b), max(a, b))
            ts = disc.edge_tris.get(key, [])
            if len(ts) != 2:
                continue
            t_neg, t_pos = ts
            if cents[t_neg][axis] > cents[t_pos][axis]:
                t_neg, t_pos = t_pos, t_neg
            entries.append((pair_to_trans[(min(ts), max(ts))], t_neg, t_pos, sign))
        sub_edges[slot] = entries

    t_matrix = np.empty((4, 4))
    system_cache = None
    for j in range(4):
        corner_vals = np.zeros(4)
        corner_vals[j] = 1.0

        profiles = []
        for e in range(4):
            ca, cb = _EDGE_OF[e]
            profiles.append(
                reduced_boundary_profile(
                    corner_vals[ca],
                    corner_vals[cb],
                    problem.k_m,
                    crossings[e],
                    problem.aperture,
                    problem.k_n,
                )
            )

        def classify(center):
            x, y = center
            tol = 1e-9
            if abs(y) < tol:
                return ("dirichlet", float(profiles[0](x)))
            if abs(x - 1.0) < tol:
                return ("dirichlet", float(profiles[1](y)))
            if abs(y - 1.0) < tol:
                return ("dirichlet", float(profiles[2](1.0 - x)))
            if abs(x) < tol:
                return ("dirichlet", float(profiles[3](1.0 - y)))
            return None

        bnd = boundary_faces_tri(disc, problem.k_m, problem.k_m, classify)
        system = fv.assemble(disc.n_cells, disc.connections, bnd, mu=1.0)
        p = fv.solve(system)
        for slot in range(4):
            f = 0.0
            for t_edge, t_neg, t_pos, sign in sub_edges[slot]:
                f += sign * t_edge * (p[t_neg] - p[t_pos])
            t_matrix[slot, j] = f
    return t_matrix


_UNCUT_CACHE: dict = {}


def uncut_region_matrix(h_fine: float) -> np.ndarray:
    """Homogeneous unit-permeability region matrix (memoized per mesh size)."""
    key = round(1.0 / h_fine)
    if key not in _UNCUT_CACHE:
        prob = RegionProblem(None, 0.0, 0.0, 0.0, 1.0, h_fine)
        _UNCUT_CACHE[key] = solve_interaction_region(prob)
    return _UNCUT_CACHE[key]


def homogeneous_region_matrix() -> np.ndarray:
    """Analytic region matrix for homogeneous unit permeability.

    The four basis solutions with linear reduced data are the bilinear corner
    interpolants, whose subinterface fluxes integrate to the circulant
    (1/8) [3, -3, -1, 1] pattern.
    """
    row = np.array([3.0, -3.0, -1.0, 1.0]) / 8.0
    return np.array([np.roll(row, k) for k in range(4)])


@dataclass
class MsfvResult:
    connections: ConnectionList
    stencils: list[StencilFlux]
    n_replaced: int
    near_cells: set = field(default_factory=set)


def apply_msfv_stencils(
    grid: CoarseGrid,
    frac: FractureSegment,
    ledfm_result: LedfmResult,
    h_fine: float = 1 / 32,
    regions: list[InteractionRegion] | None = None,
) -> MsfvResult:
    """Replace near-fracture matrix-matrix fluxes with 9-point stencil fluxes.

    A cell is near-fracture iff at least one of its interaction regions is
    cut.  A face is replaced only when both adjacent regions exist (interior)
    and both its cells are near-fracture; all other faces, and every MF/FF
    connection, pass through unchanged.
    """
    if regions is None:
        regions = build_dual_grid(grid, frac)
    by_node = {r.node: r for r in regions}
    cut_nodes = {r.node for r in regions if r.cut}
    if not cut_nodes:
        return MsfvResult(
            connections=ledfm_result.connections, stencils=[], n_replaced=0
        )

    near = set()
    for iy in range(grid.ny):
        for ix in range(grid.nx):
            nodes = [(ix, iy), (ix + 1, iy), (ix, iy + 1), (ix + 1, iy + 1)]
            if any(nd in cut_nodes for nd in nodes):
                near.add(grid.cell_index(ix, iy))

    # candidate faces: between two near cells with both adjacent regions interior
    faces = []
    for cell in sorted(near):
        ix, iy = grid.cell_ij(cell)
        if ix + 1 < grid.nx:
            b = grid.cell_index(ix + 1, iy)
            if b in near:
                up, low = (ix + 1, iy + 1), (ix + 1, iy)
                if up in by_node and low in by_node:
                    faces.append(("v", cell, b, up, low))
        if iy + 1 < grid.ny:
            b = grid.cell_index(ix, iy + 1)
            if b in near:
                left, right = (ix, iy + 1), (ix + 1, iy + 1)
                if left in by_node and right in by_node:
                    faces.append(("h", cell, b, right, left))

    needed_nodes = sorted({f[3] for f in faces} | {f[4] for f in faces})

    def region_matrix(node):
        r = by_node[node]
        k_m = float(grid.kx[r.corner_cells[0]])
        if not r.cut:
            return k_m * uncut_region_matrix(h_fine)
        prob = RegionProblem(
            frac_full=r.frac_local,
            aperture=frac.aperture / grid.dx,
            k_tau=frac.k_tau,
            k_n=frac.k_n,
            k_m=k_m,
            h_fine=h_fine,
        )
        return solve_interaction_region(prob)

    mats = dict(zip(needed_nodes, batch_map(region_matrix, needed_nodes)))

    conns = ledfm_result.connections
    drop = np.zeros(len(conns), dtype=bool)
    pair_index = {}
    for i in range(len(conns)):
        pair_index[(int(conns.cell_a[i]), int(conns.cell_b[i]))] = i

    stencils = []
    for axis, a, b, r_pos, r_neg in faces:
        drop[pair_index[(a, b)]] = True
        coeffs: dict[int, float] = {}
        if axis == "v":
            # +x flux: s_bottom of the upper region, minus s_top of the lower
            for node, slot, sgn in ((r_pos, 0, 1.0), (r_neg, 2, -1.0)):
                row = mats[node][slot]
                for c_idx, cell in enumerate(by_node[node].corner_cells):
                    coeffs[cell] = coeffs.get(cell, 0.0) + sgn * row[c_idx]
        else:
            # +y flux: s_right of the left region, minus s_left of the right
            for node, slot, sgn in ((r_neg, 1, 1.0), (r_pos, 3, -1.0)):
                row = mats[node][slot]
                for c_idx, cell in enumerate(by_node[node].corner_cells):
                    coeffs[cell] = coeffs.get(cell, 0.0) + sgn * row[c_idx]
        cells = np.array(sorted(coeffs), dtype=np.int64)
        stencils.append(
            StencilFlux(
                cell_a=a,
                cell_b=b,
                cells=cells,
                coeffs=np.array([coeffs[c] for c in cells]),
            )
        )

    kept = ConnectionList(
        cell_a=conns.cell_a[~drop],
        cell_b=conns.cell_b[~drop],
        trans=conns.trans[~drop],
        kind=conns.kind[~drop],
    )
    return MsfvResult(
        connections=kept, stencils=stencils, n_replaced=len(faces), near_cells=near
    )
