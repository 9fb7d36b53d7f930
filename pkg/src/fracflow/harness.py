"""Method dispatch, error norms, convergence studies and net-flux diagnostics."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from . import fvcore as fv
from .edfm import edfm_connections, ff_chain, normal_permeability, edfm_mf_transmissibility
from .exceptions import MeshTooCoarse
from .fvcore import ConnectionList, Kind, StencilFlux
from .geometry import (
    CoarseGrid,
    CutCellInfo,
    FractureSegment,
    build_projection_path,
    clip_polygon_to_rect,
    intersect_fracture,
)
from .ledfm import build_ledfm_connections
from .msfv import apply_msfv_stencils
from .pedfm import pedfm_connections
from .reference import ReferenceField, reference_solution
from .runtime import batch_map
from .scenario import Scenario
from .trimesh import FractureSpec, boundary_faces_tri, dfm_discretize, triangulate, Constraint


@dataclass
class Solution:
    """A solved flow field with enough structure for diagnostics and norms."""

    method: str
    pressures: np.ndarray  # all unknowns: matrix cells then fracture cells
    n_matrix: int
    connections: ConnectionList
    boundary: list
    mu: float
    stencils: list[StencilFlux] = field(default_factory=list)
    grid: CoarseGrid | None = None
    cuts: list[CutCellInfo] | None = None
    # conforming solutions
    ref_field: ReferenceField | None = None
    frac_arc: np.ndarray | None = None  # arc-length midpoints of fracture cells
    frac_cell_ids: np.ndarray | None = None

    @property
    def cut_cells(self) -> set:
        return {c.cell for c in (self.cuts or [])}

    def fluxes(self) -> np.ndarray:
        return fv.recover_fluxes(self.pressures, self.connections, self.mu, self.stencils)

    def boundary_fluxes(self) -> np.ndarray:
        return fv.boundary_fluxes(self.pressures, self.boundary, self.mu)

    def imbalance(self) -> np.ndarray:
        return fv.cell_balance(
            self.pressures.size,
            self.pressures,
            self.connections,
            self.boundary,
            None,
            self.mu,
            self.stencils,
        )


def _grid_from_scenario(scn: Scenario, n: int | None = None) -> CoarseGrid:
    n = n or scn.n
    ncell = n * n
    return CoarseGrid(
        nx=n,
        ny=n,
        dx=scn.lx / n,
        dy=scn.ly / n,
        kx=np.full(ncell, scn.kx),
        ky=np.full(ncell, scn.ky),
        phi=np.full(ncell, scn.phi),
    )


def _arc_positions(cuts: list[CutCellInfo]) -> np.ndarray:
    lengths = np.array([c.length for c in cuts])
    ends = np.cumsum(lengths)
    return ends - lengths / 2.0


def run_scenario(scn: Scenario, method: str | None = None, n: int | None = None) -> Solution:
    """Solve one scenario with one method on an n-by-n grid."""
    method = method or scn.method
    n = n or scn.n

    if method == "dfm-conforming":
        return _run_conforming(scn)
    if method == "reference-equidim":
        return _run_reference_equidim(scn)

    grid = _grid_from_scenario(scn, n)
    bnd = fv.cartesian_boundary(grid, dict(scn.bc))
    n_matrix = grid.n_cells

    all_cuts: list[CutCellInfo] = []
    if method == "edfm":
        conns = fv.cartesian_mm_connections(grid)
        offset = n_matrix
        for frac in scn.fractures:
            cuts = intersect_fracture(grid, frac)
            rows = []
            for k, cut in enumerate(cuts):
                kn = normal_permeability(grid.kx[cut.cell], grid.ky[cut.cell], frac.normal)
                rows.append((cut.cell, offset + k, edfm_mf_transmissibility(cut.ci, kn), Kind.MF))
            rows.extend(ff_chain(cuts, frac, offset))
            conns = conns.extend(ConnectionList.from_rows(rows))
            offset += len(cuts)
            all_cuts.extend(cuts)
        stencils = []
    elif method in ("pedfm-legacy", "pedfm-updated"):
        frac = scn.fractures[0]
        cuts = intersect_fracture(grid, frac)
        path = build_projection_path(grid, cuts, frac)
        conns = pedfm_connections(grid, cuts, path, frac, method.split("-")[1])
        all_cuts = cuts
        stencils = []
    elif method == "ledfm":
        frac = scn.fractures[0]
        res = build_ledfm_connections(grid, frac, scn.h_fine)
        conns = res.connections
        all_cuts = res.cuts
        stencils = []
    elif method == "ledfm-msfv":
        frac = scn.fractures[0]
        res = build_ledfm_connections(grid, frac, scn.h_fine)
        msfv = apply_msfv_stencils(grid, frac, res, scn.h_fine)
        conns = msfv.connections
        all_cuts = res.cuts
        stencils = msfv.stencils
    else:
        raise ValueError(f"unknown method {method!r}")

    n_frac = len(all_cuts)
    system = fv.assemble(n_matrix + n_frac, conns, bnd, mu=scn.mu, stencils=stencils)
    p = fv.solve(system)
    return Solution(
        method=method,
        pressures=p,
        n_matrix=n_matrix,
        connections=conns,
        boundary=bnd,
        mu=scn.mu,
        stencils=stencils,
        grid=grid,
        cuts=all_cuts,
        frac_arc=_arc_positions(all_cuts) if all_cuts else None,
        frac_cell_ids=np.arange(n_matrix, n_matrix + n_frac) if n_frac else None,
    )


def _run_conforming(scn: Scenario) -> Solution:
    constraints = [Constraint(f.p0, f.p1, f"frac{i}") for i, f in enumerate(scn.fractures)]
    mesh = triangulate(scn.lx, scn.ly, scn.h_fine, constraints)
    fractures = {
        f"frac{i}": FractureSpec(f.aperture, f.k_tau, f.k_n)
        for i, f in enumerate(scn.fractures)
    }
    disc = dfm_discretize(mesh, scn.kx, scn.ky, fractures)
    lx, ly = scn.lx, scn.ly
    bc = dict(scn.bc)

    def classify(c):
        tol = 1e-9 * max(lx, ly)
        if abs(c[0]) < tol:
            side = "left"
        elif abs(c[0] - lx) < tol:
            side = "right"
        elif abs(c[1]) < tol:
            side = "bottom"
        elif abs(c[1] - ly) < tol:
            side = "top"
        else:
            return None
        kind, value = bc[side]
        if kind == "neumann" and value == 0.0:
            return None
        return (kind, value)

    bnd = boundary_faces_tri(disc, scn.kx, scn.ky, classify)
    system = fv.assemble(disc.n_cells, disc.connections, bnd, mu=scn.mu)
    p = fv.solve(system)
    mask = np.zeros(disc.n_cells, dtype=bool)
    mask[: disc.n_matrix] = True
    ref = ReferenceField(
        kind="tri", pressures=p, matrix_mask=mask, points=mesh.points, tris=mesh.tris
    )
    arc = None
    ids = None
    if disc.frac_edges:
        lengths = disc.frac_lengths
        arc = np.cumsum(lengths) - lengths / 2.0
        ids = np.arange(disc.n_matrix, disc.n_cells)
    return Solution(
        method="dfm-conforming",
        pressures=p,
        n_matrix=disc.n_matrix,
        connections=disc.connections,
        boundary=bnd,
        mu=scn.mu,
        ref_field=ref,
        frac_arc=arc,
        frac_cell_ids=ids,
    )


def _run_reference_equidim(scn: Scenario) -> Solution:
    ref = reference_solution(scn)
    return Solution(
        method="reference-equidim",
        pressures=ref.pressures,
        n_matrix=ref.n_cells,
        connections=ConnectionList(),
        boundary=[],
        mu=scn.mu,
        ref_field=ref,
    )


# ---------------------------------------------------------------------------
# error norm


@dataclass
class IntersectionTable:
    """Areas of reference-cell / coarse-cell intersections for one (ref, N) pair."""

    ref_idx: np.ndarray
    coarse_idx: np.ndarray
    area: np.ndarray

    @classmethod
    def build(cls, ref: ReferenceField, grid: CoarseGrid) -> "IntersectionTable":
        if ref.kind == "rect":
            return cls._build_rect(ref, grid)
        return cls._build_tri(ref, grid)

    @classmethod
    def _build_rect(cls, ref, grid):
        xs, ys = ref.xs, ref.ys
        gx0, gy0, gx1, gy1 = grid.extent
        cx = np.arange(grid.nx + 1) * grid.dx + gx0
        cy = np.arange(grid.ny + 1) * grid.dy + gy0
        nxr = xs.size - 1
        ref_ids = []
        coarse_ids = []
        areas = []

        # per reference interval, the coarse intervals it overlaps
        def overlaps(lines, coarse_lines, n_coarse):
            out = []
            for i in range(lines.size - 1):
                lo, hi = lines[i], lines[i + 1]
                j0 = max(int(np.searchsorted(coarse_lines, lo, "right")) - 1, 0)
                j1 = min(int(np.searchsorted(coarse_lines, hi, "left")), n_coarse)
                entries = []
                for j in range(j0, j1):
                    w = min(hi, coarse_lines[j + 1]) - max(lo, coarse_lines[j])
                    if w > 0:
                        entries.append((j, w))
                out.append(entries)
            return out

        ox = overlaps(xs, cx, grid.nx)
        oy = overlaps(ys, cy, grid.ny)
        mask = ref.matrix_mask
        for iy in range(ys.size - 1):
            for ix in range(nxr):
                rid = iy * nxr + ix
                if not mask[rid]:
                    continue
                for jx, wx in ox[ix]:
                    for jy, wy in oy[iy]:
                        ref_ids.append(rid)
                        coarse_ids.append(jy * grid.nx + jx)
                        areas.append(wx * wy)
        return cls(
            ref_idx=np.asarray(ref_ids, dtype=np.int64),
            coarse_idx=np.asarray(coarse_ids, dtype=np.int64),
            area=np.asarray(areas),
        )

    @classmethod
    def _build_tri(cls, ref, grid):
        pts = ref.points
        tris = ref.tris
        gx0, gy0, _, _ = grid.extent
        xs = pts[:, 0][tris]
        ys = pts[:, 1][tris]
        # triangle areas (for the fast fully-inside path)
        area2 = 0.5 * np.abs(
            (xs[:, 1] - xs[:, 0]) * (ys[:, 2] - ys[:, 0])
            - (xs[:, 2] - xs[:, 0]) * (ys[:, 1] - ys[:, 0])
        )
        ix0 = np.clip(((xs.min(1) - gx0) / grid.dx).astype(int), 0, grid.nx - 1)
        ix1 = np.clip(((xs.max(1) - gx0) / grid.dx - 1e-12).astype(int), 0, grid.nx - 1)
        iy0 = np.clip(((ys.min(1) - gy0) / grid.dy).astype(int), 0, grid.ny - 1)
        iy1 = np.clip(((ys.max(1) - gy0) / grid.dy - 1e-12).astype(int), 0, grid.ny - 1)
        inside = (ix0 == ix1) & (iy0 == iy1) & ref.matrix_mask[: tris.shape[0]]
        ref_ids = list(np.where(inside)[0])
        coarse_ids = list(iy0[inside] * grid.nx + ix0[inside])
        areas = list(area2[inside])
        straddle = np.where(~inside & ref.matrix_mask[: tris.shape[0]])[0]
        for t in straddle:
            poly = [(xs[t, k], ys[t, k]) for k in range(3)]
            for jy in range(iy0[t], iy1[t] + 1):
                for jx in range(ix0[t], ix1[t] + 1):
                    rect = (
                        gx0 + jx * grid.dx,
                        gy0 + jy * grid.dy,
                        gx0 + (jx + 1) * grid.dx,
                        gy0 + (jy + 1) * grid.dy,
                    )
                    a = clip_polygon_to_rect(poly, rect)
                    if a > 0.0:
                        ref_ids.append(t)
                        coarse_ids.append(jy * grid.nx + jx)
                        areas.append(a)
        return cls(
            ref_idx=np.asarray(ref_ids, dtype=np.int64),
            coarse_idx=np.asarray(coarse_ids, dtype=np.int64),
            area=np.asarray(areas),
        )


def matrix_pressure_error(
    sol: Solution,
    ref: ReferenceField,
    table: IntersectionTable | None = None,
    exclude_cut: bool = False,
    min_ref_cells: int = 0,
) -> float:
    """Intersection-weighted L2 matrix pressure error against the reference."""
    if min_ref_cells and ref.n_cells < min_ref_cells:
        raise MeshTooCoarse(
            f"reference has {ref.n_cells} cells, fewer than required {min_ref_cells}"
        )
    grid = sol.grid
    if table is None:
        table = IntersectionTable.build(ref, grid)
    domain_area = grid.nx * grid.dx * grid.ny * grid.dy
    dp = ref.delta_p
    p_coarse = sol.pressures[table.coarse_idx]
    p_ref = ref.pressures[table.ref_idx]
    w = table.area
    if exclude_cut and sol.cuts:
        cut = np.zeros(sol.n_matrix, dtype=bool)
        cut[list(sol.cut_cells)] = True
        keep = ~cut[table.coarse_idx]
        p_coarse, p_ref, w = p_coarse[keep], p_ref[keep], w[keep]
    err2 = float(np.dot(w, (p_coarse - p_ref) ** 2)) / (domain_area * dp**2)
    return float(np.sqrt(err2))


# ---------------------------------------------------------------------------
# convergence studies


@dataclass
class MethodReport:
    method: str
    grids: list[int]
    h: list[float]
    e_m: list[float]
    e_m_excl_cut: list[float]
    slope: float = float("nan")
    slope_excl: float = float("nan")


def fit_slope(hs, errs) -> float:
    hs = np.asarray(hs, float)
    errs = np.asarray(errs, float)
    good = errs > 0
    if good.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(hs[good]), np.log(errs[good]), 1)[0])


def convergence_study(
    scn: Scenario,
    grids: list[int],
    methods: list[str],
    ref: ReferenceField | None = None,
    min_ref_factor: int = 50,
) -> list[MethodReport]:
    """Errors and fitted slopes over a grid refinement ladder, per method."""
    min_cells = min_ref_factor * max(grids) ** 2
    if ref is None:
        ref = reference_solution(scn, min_cells=min_cells)
    tables = {}
    for n in grids:
        tables[n] = IntersectionTable.build(ref, _grid_from_scenario(scn, n))

    reports = []
    for method in methods:
        rep = MethodReport(method=method, grids=list(grids), h=[], e_m=[], e_m_excl_cut=[])
        for n in grids:
            sol = run_scenario(scn, method, n)
            e = matrix_pressure_error(sol, ref, tables[n], min_ref_cells=min_ref_factor * n * n)
            e_x = matrix_pressure_error(sol, ref, tables[n], exclude_cut=True)
            rep.h.append(scn.lx / n)
            rep.e_m.append(e)
            rep.e_m_excl_cut.append(e_x)
        rep.slope = fit_slope(rep.h, rep.e_m)
        rep.slope_excl = fit_slope(rep.h, rep.e_m_excl_cut)
        reports.append(rep)
    return reports


def write_convergence_csv(path, reports: list[MethodReport]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "N", "h", "e_m", "e_m_excl_cut", "slope"])
        for rep in reports:
            for n, h, e, ex in zip(rep.grids, rep.h, rep.e_m, rep.e_m_excl_cut):
                w.writerow([rep.method, n, repr(h), repr(e), repr(ex), repr(rep.slope)])


def reference_self_consistency(
    scn: Scenario, n: int, method: str, min_ref_factor: int = 50
) -> tuple[float, float]:
    """e_m against the standard and the 2x-refined reference: (e, e_refined)."""
    min_cells = min_ref_factor * n * n
    ref1 = reference_solution(scn, min_cells=min_cells)
    ref2 = reference_solution(scn, min_cells=min_cells, refine=2)
    sol = run_scenario(scn, method, n)
    e1 = matrix_pressure_error(sol, ref1)
    e2 = matrix_pressure_error(sol, ref2)
    return e1, e2


# ---------------------------------------------------------------------------
# net fracture flux


def net_fracture_flux(sol: Solution) -> tuple[np.ndarray, np.ndarray]:
    """Net flux exiting each fracture cell toward the matrix, by arc length."""
    if sol.frac_cell_ids is None:
        raise ValueError("solution has no fracture cells")
    ids = sol.frac_cell_ids
    id_set = set(int(i) for i in ids)
    net = np.zeros(ids.size)
    pos = {int(c): i for i, c in enumerate(ids)}
    c = sol.connections
    f = fv.recover_fluxes(sol.pressures, c, sol.mu)
    for i in range(len(c)):
        kind = c.kind[i]
        if kind not in (Kind.MF, Kind.NNMF):
            continue
        a, b = int(c.cell_a[i]), int(c.cell_b[i])
        if a in id_set:  # flux a->b leaves the fracture
            net[pos[a]] += f[i]
        elif b in id_set:
            net[pos[b]] -= f[i]
    return sol.frac_arc, net


def write_netflux_csv(path, results: dict[str, tuple[np.ndarray, np.ndarray]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["s", "flux", "method"])
        for method, (s, flux) in results.items():
            for si, fi in zip(s, flux):
                w.writerow([repr(float(si)), repr(float(fi)), method])
