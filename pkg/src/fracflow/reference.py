"""Fine-scale reference solvers for error measurement.

Axis-aligned fractures get an equidimensional rectilinear reference with a
resolved fracture layer and geometric grading toward it; oblique fractures get
a fine conforming lower-dimensional DFM triangulation (a valid stand-in at the
apertures considered, guarded by the reference self-consistency check).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import fvcore as fv
from .exceptions import MeshTooCoarse
from .scenario import Scenario
from .trimesh import Constraint, FractureSpec, boundary_faces_tri, dfm_discretize, triangulate

_GRADING_RATIO = 1.15
_LAYER_ROWS = 3


@dataclass
class ReferenceField:
    """Reference pressures with cell polygons for intersection-based norms."""

    kind: str  # 'rect' | 'tri'
    pressures: np.ndarray  # per reference cell (matrix and fracture alike)
    matrix_mask: np.ndarray  # True for matrix cells (enter the error norm)
    # rect layout
    xs: np.ndarray | None = None
    ys: np.ndarray | None = None
    # tri layout
    points: np.ndarray | None = None
    tris: np.ndarray | None = None

    @property
    def n_cells(self) -> int:
        return self.pressures.size

    @property
    def delta_p(self) -> float:
        pm = self.pressures[self.matrix_mask]
        return float(pm.max() - pm.min())


def graded_lines(length: float, frac_pos: float, aperture: float, h_max: float):
    """Grid lines on [0, length]: a resolved layer around ``frac_pos`` graded outward."""
    lo = frac_pos - aperture / 2.0
    hi = frac_pos + aperture / 2.0
    layer = np.linspace(lo, hi, _LAYER_ROWS + 1)

    def march(start, stop, direction):
        lines = []
        s = aperture / _LAYER_ROWS
        pos = start
        while (stop - pos) * direction > 1e-15 * length:
            s = min(s * _GRADING_RATIO, h_max)
            pos = pos + direction * s
            if (stop - pos) * direction <= 0:
                break
            lines.append(pos)
        return lines

    below = march(lo, 0.0, -1.0)
    above = march(hi, length, +1.0)
    lines = sorted(set([0.0, length] + below + above + list(layer)))
    return np.asarray(lines)


def _bc_from_scenario(scn: Scenario):
    return {side: scn.bc[side] for side in ("left", "right", "bottom", "top")}


def reference_equidim(scn: Scenario, min_cells: int = 0, refine: int = 1) -> ReferenceField:
    """Tensor-product equidimensional reference (horizontal fracture or none)."""
    frac = scn.fractures[0] if scn.fractures else None
    if frac is not None and abs(frac.p0[1] - frac.p1[1]) > 1e-12 * scn.ly:
        raise ValueError("equidimensional reference expects a horizontal fracture")

    nx = max(600, int(np.ceil(np.sqrt(max(min_cells, 1))))) * refine
    xs = np.linspace(0.0, scn.lx, nx + 1)
    if frac is not None:
        # snap the fracture x-extent onto grid lines
        for xf in (min(frac.p0[0], frac.p1[0]), max(frac.p0[0], frac.p1[0])):
            i = int(np.argmin(np.abs(xs - xf)))
            xs[i] = xf
        y_f = frac.p0[1]
        target_rows = max(min_cells // nx + 1, 64)
        h_max = scn.ly / max(target_rows - 40, 24)
        ys = graded_lines(scn.ly, y_f, frac.aperture, h_max / refine)
    else:
        ny = max(min_cells // nx + 1, nx)
        ys = np.linspace(0.0, scn.ly, ny + 1)

    nxc, nyc = xs.size - 1, ys.size - 1
    n = nxc * nyc
    kx = np.full(n, scn.kx)
    ky = np.full(n, scn.ky)
    matrix_mask = np.ones(n, dtype=bool)
    if frac is not None:
        xc = 0.5 * (xs[:-1] + xs[1:])
        yc = 0.5 * (ys[:-1] + ys[1:])
        x_lo = min(frac.p0[0], frac.p1[0])
        x_hi = max(frac.p0[0], frac.p1[0])
        y_f = frac.p0[1]
        in_layer_y = np.abs(yc - y_f) < frac.aperture / 2.0
        in_x = (xc > x_lo) & (xc < x_hi)
        cell_in = np.outer(in_layer_y, in_x).ravel()
        kx[cell_in] = frac.k_tau
        ky[cell_in] = frac.k_n
        matrix_mask[cell_in] = False

    conns = fv.rectilinear_mm_connections(xs, ys, kx, ky)
    bnd = fv.rectilinear_boundary(xs, ys, kx, ky, _bc_from_scenario(scn))
    system = fv.assemble(n, conns, bnd, mu=scn.mu)
    p = fv.solve(system)
    return ReferenceField(kind="rect", pressures=p, matrix_mask=matrix_mask, xs=xs, ys=ys)


def reference_dfm(scn: Scenario, min_cells: int = 0, refine: int = 1) -> ReferenceField:
    """Fine conforming lower-dimensional DFM reference on a triangulation."""
    n_side = int(np.ceil(np.sqrt(max(min_cells, 20000) / 2.0))) * refine
    h_ref = scn.lx / n_side
    constraints = [
        Constraint(f.p0, f.p1, f"frac{i}") for i, f in enumerate(scn.fractures)
    ]
    mesh = triangulate(scn.lx, scn.ly, h_ref, constraints)
    fractures = {
        f"frac{i}": FractureSpec(f.aperture, f.k_tau, f.k_n)
        for i, f in enumerate(scn.fractures)
    }
    disc = dfm_discretize(mesh, scn.kx, scn.ky, fractures)

    bc = _bc_from_scenario(scn)
    lx, ly = scn.lx, scn.ly

    def classify(c):
        tol = 1e-9 * max(lx, ly)
        side = None
        if abs(c[0]) < tol:
            side = "left"
        elif abs(c[0] - lx) < tol:
            side = "right"
        elif abs(c[1]) < tol:
            side = "bottom"
        elif abs(c[1] - ly) < tol:
            side = "top"
        if side is None:
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
    return ReferenceField(
        kind="tri",
        pressures=p,
        matrix_mask=mask,
        points=mesh.points,
        tris=mesh.tris,
    )


def reference_solution(scn: Scenario, min_cells: int = 0, refine: int = 1) -> ReferenceField:
    """Reference field for a scenario; the kind follows the fracture geometry."""
    frac = scn.fractures[0] if scn.fractures else None
    horizontal = frac is not None and abs(frac.p0[1] - frac.p1[1]) < 1e-12 * scn.ly
    if frac is None or horizontal:
        ref = reference_equidim(scn, min_cells, refine)
    else:
        ref = reference_dfm(scn, min_cells, refine)
    if min_cells and ref.n_cells < min_cells:
        raise MeshTooCoarse(
            f"reference has {ref.n_cells} cells, fewer than the required {min_cells}"
        )
    return ref
