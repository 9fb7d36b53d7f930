"""Classic embedded fracture coupling: connectivity-index matrix-fracture terms.

Valid for highly conductive fractures; the matrix-fracture transmissibility
assumes a linear pressure profile normal to the fracture.
"""

from __future__ import annotations

import numpy as np

from . import fvcore as fv
from .fvcore import ConnectionList, Kind
from .geometry import CoarseGrid, CutCellInfo, FractureSegment


def normal_permeability(kx: float, ky: float, normal) -> float:
    """n^T K n for a diagonal tensor."""
    return kx * normal[0] ** 2 + ky * normal[1] ** 2


def edfm_mf_transmissibility(ci: float, k_normal: float) -> float:
    """T = 2 CI n^T K n."""
    return 2.0 * ci * k_normal


def ff_chain(cuts: list[CutCellInfo], frac: FractureSegment, offset: int):
    rows = []
    for k in range(len(cuts) - 1):
        t = fv.ff_transmissibility(
            frac.k_tau, cuts[k].length, frac.k_tau, cuts[k + 1].length, frac.aperture
        )
        rows.append((offset + k, offset + k + 1, t, Kind.FF))
    return rows


def edfm_connections(
    grid: CoarseGrid, cuts: list[CutCellInfo], frac: FractureSegment
) -> ConnectionList:
    """Full coarse connection list: plain Cartesian MM plus MF and FF terms.

    Fracture cells are numbered after the matrix cells, in fracture order.
    """
    n_matrix = grid.n_cells
    normal = frac.normal
    rows = []
    for k, cut in enumerate(cuts):
        kn = normal_permeability(grid.kx[cut.cell], grid.ky[cut.cell], normal)
        rows.append((cut.cell, n_matrix + k, edfm_mf_transmissibility(cut.ci, kn), Kind.MF))
    rows.extend(ff_chain(cuts, frac, n_matrix))
    return fv.cartesian_mm_connections(grid).extend(ConnectionList.from_rows(rows))
