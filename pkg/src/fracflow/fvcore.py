"""Connection-list finite-volume engine (TPFA).

The discrete operator is a list of two-point connections plus optional
multi-point stencil fluxes; boundary conditions enter as half-connections to
ghost values (Dirichlet) or prescribed fluxes (Neumann).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .exceptions import NonConvergence, SingularSystem
from .geometry import CoarseGrid

DIRECT_SOLVE_LIMIT = 200_000
_ITER_CAP = 100_000


class Kind(IntEnum):
    MM = 0
    FF = 1
    MF = 2
    NNMF = 3


@dataclass
class ConnectionList:
    """Struct-of-arrays container for two-point connections."""

    cell_a: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    cell_b: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    trans: np.ndarray = field(default_factory=lambda: np.empty(0))
    kind: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int8))

    def __len__(self) -> int:
        return self.cell_a.size

    @classmethod
    def from_rows(cls, rows) -> "ConnectionList":
        """Build from an iterable of (cell_a, cell_b, T, kind)."""
        rows = list(rows)
        if not rows:
            return cls()
        a, b, t, k = zip(*rows)
        return cls(
            cell_a=np.asarray(a, dtype=np.int64),
            cell_b=np.asarray(b, dtype=np.int64),
            trans=np.asarray(t, dtype=float),
            kind=np.asarray(k, dtype=np.int8),
        )

    def extend(self, other: "ConnectionList") -> "ConnectionList":
        return ConnectionList(
            cell_a=np.concatenate([self.cell_a, other.cell_a]),
            cell_b=np.concatenate([self.cell_b, other.cell_b]),
            trans=np.concatenate([self.trans, other.trans]),
            kind=np.concatenate([self.kind, other.kind]),
        )

    def rows(self):
        for i in range(len(self)):
            yield (
                int(self.cell_a[i]),
                int(self.cell_b[i]),
                float(self.trans[i]),
                Kind(self.kind[i]),
            )


@dataclass
class BoundaryFace:
    """One boundary face attached to a cell.

    Dirichlet faces carry the half-transmissibility to the boundary value;
    Neumann faces carry the prescribed outward flux density (per unit face
    measure).
    """

    cell: int
    kind: str  # 'dirichlet' | 'neumann'
    value: float
    t_half: float = 0.0
    measure: float = 1.0
    center: tuple[float, float] = (0.0, 0.0)

    @property
    def neumann_outflux(self) -> float:
        return self.value * self.measure


@dataclass
class StencilFlux:
    """Multi-point flux expression for one face: F(a->b) = sum(coeff_k * p_k) / mu."""

    cell_a: int
    cell_b: int
    cells: np.ndarray
    coeffs: np.ndarray


@dataclass
class LinearSystem:
    A: sp.csr_matrix
    b: np.ndarray
    n_cells: int
    has_constraint: bool = False


# ---------------------------------------------------------------------------
# transmissibilities


def half_transmissibility_cartesian(k_axis: float, d_along: float, d_across: float) -> float:
    """Cartesian half-transmissibility 2*k*(face measure)/(cell extent across the face).

    For a vertical face pass (kx, dx, dy); for a horizontal face (ky, dy, dx).
    """
    return 2.0 * k_axis * d_across / d_along


def half_transmissibility_fracture(k_tau: float, aperture: float, length: float) -> float:
    """Along-fracture half-transmissibility 2*k_tau*d/|f|."""
    return 2.0 * k_tau * aperture / length


def full_transmissibility(t_a: float, t_b: float) -> float:
    """Half of the harmonic average of two half-transmissibilities."""
    return t_a * t_b / (t_a + t_b)


def ff_transmissibility(k1: float, l1: float, k2: float, l2: float, aperture: float) -> float:
    """Neighbouring fracture-fracture transmissibility 2 k1 k2 d / (k1 |f2| + k2 |f1|)."""
    return 2.0 * k1 * k2 * aperture / (k1 * l2 + k2 * l1)


# ---------------------------------------------------------------------------
# Cartesian / rectilinear connection builders


def cartesian_mm_connections(grid: CoarseGrid) -> ConnectionList:
    """Plain TPFA matrix-matrix connections of a Cartesian grid."""
    rows = []
    for iy in range(grid.ny):
        for ix in range(grid.nx):
            c = grid.cell_index(ix, iy)
            if ix + 1 < grid.nx:
                d = grid.cell_index(ix + 1, iy)
                ta = half_transmissibility_cartesian(grid.kx[c], grid.dx, grid.dy)
                tb = half_transmissibility_cartesian(grid.kx[d], grid.dx, grid.dy)
                rows.append((c, d, full_transmissibility(ta, tb), Kind.MM))
            if iy + 1 < grid.ny:
                d = grid.cell_index(ix, iy + 1)
                ta = half_transmissibility_cartesian(grid.ky[c], grid.dy, grid.dx)
                tb = half_transmissibility_cartesian(grid.ky[d], grid.dy, grid.dx)
                rows.append((c, d, full_transmissibility(ta, tb), Kind.MM))
    return ConnectionList.from_rows(rows)


def rectilinear_mm_connections(xs: np.ndarray, ys: np.ndarray, kx, ky) -> ConnectionList:
    """TPFA connections for a tensor-product grid with per-cell permeability.

    ``kx``/``ky`` are flat arrays ordered row-major (iy * nx + ix).
    """
    xs = np.asarray(xs, float)
    ys = np.asarray(ys, float)
    nx, ny = xs.size - 1, ys.size - 1
    dx = np.diff(xs)
    dy = np.diff(ys)
    rows = []
    for iy in range(ny):
        for ix in range(nx):
            c = iy * nx + ix
            if ix + 1 < nx:
                d = c + 1
                ta = 2.0 * kx[c] * dy[iy] / dx[ix]
                tb = 2.0 * kx[d] * dy[iy] / dx[ix + 1]
                rows.append((c, d, full_transmissibility(ta, tb), Kind.MM))
            if iy + 1 < ny:
                d = c + nx
                ta = 2.0 * ky[c] * dx[ix] / dy[iy]
                tb = 2.0 * ky[d] * dx[ix] / dy[iy + 1]
                rows.append((c, d, full_transmissibility(ta, tb), Kind.MM))
    return ConnectionList.from_rows(rows)


def cartesian_boundary(grid: CoarseGrid, bc: dict) -> list[BoundaryFace]:
    """Boundary faces of a Cartesian grid from {side: (type, value)}.

    Sides are 'left', 'right', 'bottom', 'top'; type is 'dirichlet' or
    'neumann' (value = outward flux density).
    """
    faces: list[BoundaryFace] = []
    gx0, gy0, gx1, gy1 = grid.extent

    def add(side, cell, t_half, measure, center):
        kind, value = bc[side]
        faces.append(
            BoundaryFace(
                cell=cell,
                kind=kind,
                value=float(value),
                t_half=t_half,
                measure=measure,
                center=center,
            )
        )

    for iy in range(grid.ny):
        yc = gy0 + (iy + 0.5) * grid.dy
        c = grid.cell_index(0, iy)
        add("left", c, half_transmissibility_cartesian(grid.kx[c], grid.dx, grid.dy), grid.dy, (gx0, yc))
        c = grid.cell_index(grid.nx - 1, iy)
        add("right", c, half_transmissibility_cartesian(grid.kx[c], grid.dx, grid.dy), grid.dy, (gx1, yc))
    for ix in range(grid.nx):
        xc = gx0 + (ix + 0.5) * grid.dx
        c = grid.cell_index(ix, 0)
        add("bottom", c, half_transmissibility_cartesian(grid.ky[c], grid.dy, grid.dx), grid.dx, (xc, gy0))
        c = grid.cell_index(ix, grid.ny - 1)
        add("top", c, half_transmissibility_cartesian(grid.ky[c], grid.dy, grid.dx), grid.dx, (xc, gy1))
    return faces


def rectilinear_boundary(xs, ys, kx, ky, bc: dict) -> list[BoundaryFace]:
    xs = np.asarray(xs, float)
    ys = np.asarray(ys, float)
    nx, ny = xs.size - 1, ys.size - 1
    dx = np.diff(xs)
    dy = np.diff(ys)
    faces: list[BoundaryFace] = []

    def add(side, cell, t_half, measure, center):
        kind, value = bc[side]
        faces.append(BoundaryFace(cell, kind, float(value), t_half, measure, center))

    for iy in range(ny):
        yc = 0.5 * (ys[iy] + ys[iy + 1])
        c = iy * nx
        add("left", c, 2.0 * kx[c] * dy[iy] / dx[0], dy[iy], (xs[0], yc))
        c = iy * nx + nx - 1
        add("right", c, 2.0 * kx[c] * dy[iy] / dx[-1], dy[iy], (xs[-1], yc))
    for ix in range(nx):
        xc = 0.5 * (xs[ix] + xs[ix + 1])
        c = ix
        add("bottom", c, 2.0 * ky[c] * dx[ix] / dy[0], dx[ix], (xc, ys[0]))
        c = (ny - 1) * nx + ix
        add("top", c, 2.0 * ky[c] * dx[ix] / dy[-1], dx[ix], (xc, ys[-1]))
    return faces


# ---------------------------------------------------------------------------
# assembly / solve / fluxes


def assemble(
    n_cells: int,
    connections: ConnectionList,
    boundary: list[BoundaryFace] | None = None,
    sources: np.ndarray | None = None,
    mu: float = 1.0,
    null_mean_weights: np.ndarray | None = None,
    stencils: list[StencilFlux] | None = None,
) -> LinearSystem:
    """Assemble the TPFA system: flux balance per cell = integrated source.

    Dirichlet faces enter through their half-transmissibility to the boundary
    value; Neumann faces as right-hand-side fluxes.  A pure-Neumann system must
    pass ``null_mean_weights`` (cell measures); it is closed with one bordered
    Lagrange-multiplier row enforcing the weighted zero mean.
    """
    boundary = boundary or []
    if sources is None:
        sources = np.zeros(n_cells)
    b = np.array(sources, dtype=float)

    rows_i: list[np.ndarray] = []
    rows_j: list[np.ndarray] = []
    vals: list[np.ndarray] = []
    if len(connections):
        a = connections.cell_a
        c = connections.cell_b
        t = connections.trans / mu
        rows_i.extend([a, a, c, c])
        rows_j.extend([a, c, c, a])
        vals.extend([t, -t, t, -t])

    has_dirichlet = False
    for f in boundary:
        if f.kind == "dirichlet":
            has_dirichlet = True
            th = f.t_half / mu
            rows_i.append(np.array([f.cell]))
            rows_j.append(np.array([f.cell]))
            vals.append(np.array([th]))
            b[f.cell] += th * f.value
        elif f.kind == "neumann":
            b[f.cell] -= f.neumann_outflux
        else:
            raise ValueError(f"unknown boundary kind {f.kind!r}")

    for s in stencils or []:
        coeff = s.coeffs / mu
        rows_i.append(np.full(s.cells.size, s.cell_a))
        rows_j.append(s.cells)
        vals.append(coeff)
        rows_i.append(np.full(s.cells.size, s.cell_b))
        rows_j.append(s.cells)
        vals.append(-coeff)

    if not has_dirichlet and null_mean_weights is None:
        raise SingularSystem(
            "pure-Neumann problem assembled without the null-mean constraint"
        )

    if rows_i:
        i = np.concatenate(rows_i)
        j = np.concatenate(rows_j)
        v = np.concatenate(vals)
    else:
        i = j = np.empty(0, dtype=np.int64)
        v = np.empty(0)

    if null_mean_weights is not None:
        w = np.asarray(null_mean_weights, dtype=float)
        n = n_cells + 1
        i = np.concatenate([i, np.full(n_cells, n_cells), np.arange(n_cells)])
        j = np.concatenate([j, np.arange(n_cells), np.full(n_cells, n_cells)])
        v = np.concatenate([v, w, w])
        b = np.concatenate([b, [0.0]])
        A = sp.coo_matrix((v, (i, j)), shape=(n, n)).tocsr()
        return LinearSystem(A=A, b=b, n_cells=n_cells, has_constraint=True)

    A = sp.coo_matrix((v, (i, j)), shape=(n_cells, n_cells)).tocsr()
    return LinearSystem(A=A, b=b, n_cells=n_cells)


def solve(system: LinearSystem, tol: float = 1e-10) -> np.ndarray:
    """Solve to a relative residual <= tol; deterministic.

    Direct sparse factorization up to ``DIRECT_SOLVE_LIMIT`` unknowns
    (symmetrically equilibrated, with iterative refinement); above that,
    AMG-preconditioned CG with a diagonal-preconditioner fallback.  The
    residual criterion is normwise: ||r|| <= tol * (||A|| ||x|| + ||b||),
    which reduces to ||r||/||b|| for well-scaled systems.
    """
    A, b = system.A.tocsc(), system.b
    n = b.size
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return np.zeros(system.n_cells)

    if n <= DIRECT_SOLVE_LIMIT or system.has_constraint:
        d = np.abs(A.diagonal())
        d[d == 0.0] = 1.0
        s = 1.0 / np.sqrt(d)
        S = sp.diags(s)
        lu = spla.splu((S @ A @ S).tocsc())
        x = s * lu.solve(s * b)
        for _ in range(3):
            r = b - A @ x
            if np.linalg.norm(r) <= tol * bnorm:
                break
            x = x + s * lu.solve(s * r)
    else:
        x = _solve_iterative(A, b, tol)

    res = float(np.linalg.norm(b - A @ x))
    if res > tol * bnorm:
        norm_a = float(np.max(np.abs(A).sum(axis=1)))
        scale = norm_a * float(np.linalg.norm(x, np.inf)) + bnorm
        if res > tol * scale:
            raise NonConvergence(res / bnorm, tol)
    return x[: system.n_cells]


def _solve_iterative(A, b, tol):
    try:
        import pyamg

        ml = pyamg.ruge_stuben_solver(A.tocsr())
        M = ml.aspreconditioner(cycle="V")
    except Exception:  # pragma: no cover - pyamg is installed in practice
        d = A.diagonal()
        d[d == 0.0] = 1.0
        M = spla.LinearOperator(A.shape, matvec=lambda v: v / d)
    x, info = spla.cg(A, b, rtol=tol * 0.1, maxiter=_ITER_CAP, M=M)
    if info != 0:
        raise NonConvergence(float(np.linalg.norm(b - A @ x) / np.linalg.norm(b)), tol)
    return x


def recover_fluxes(
    pressures: np.ndarray,
    connections: ConnectionList,
    mu: float = 1.0,
    stencils: list[StencilFlux] | None = None,
) -> np.ndarray:
    """Per-connection flux F = T/mu (p_a - p_b); stencil faces appended after."""
    f = connections.trans / mu * (pressures[connections.cell_a] - pressures[connections.cell_b])
    if stencils:
        extra = np.array([float(np.dot(s.coeffs, pressures[s.cells])) / mu for s in stencils])
        f = np.concatenate([f, extra])
    return f


def boundary_fluxes(pressures, boundary: list[BoundaryFace], mu: float = 1.0) -> np.ndarray:
    """Outward flux through each boundary face."""
    out = np.empty(len(boundary))
    for i, f in enumerate(boundary):
        if f.kind == "dirichlet":
            out[i] = f.t_half / mu * (pressures[f.cell] - f.value)
        else:
            out[i] = f.neumann_outflux
    return out


def cell_balance(
    n_cells: int,
    pressures: np.ndarray,
    connections: ConnectionList,
    boundary: list[BoundaryFace],
    sources: np.ndarray | None = None,
    mu: float = 1.0,
    stencils: list[StencilFlux] | None = None,
) -> np.ndarray:
    """Signed flux imbalance per cell (should vanish for a solved system)."""
    imbalance = np.zeros(n_cells) if sources is None else np.array(sources, float)
    f = recover_fluxes(pressures, connections, mu)
    np.subtract.at(imbalance, connections.cell_a, f)
    np.add.at(imbalance, connections.cell_b, f)
    for s, fs in zip(stencils or [], recover_fluxes(pressures, ConnectionList(), mu, stencils)):
        imbalance[s.cell_a] -= fs
        imbalance[s.cell_b] += fs
    for face, bf in zip(boundary, boundary_fluxes(pressures, boundary, mu)):
        imbalance[face.cell] -= bf
    return imbalance
