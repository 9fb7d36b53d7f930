"""Legacy ASCII VTK writers for field inspection."""

from __future__ import annotations

import numpy as np


def write_unstructured_tri(path, points, tris, cell_data: dict[str, np.ndarray]):
    """UNSTRUCTURED_GRID of triangles with per-cell scalar fields."""
    points = np.asarray(points)
    tris = np.asarray(tris)
    with open(path, "w") as fh:
        fh.write("# vtk DataFile Version 3.0\nfracflow field\nASCII\n")
        fh.write("DATASET UNSTRUCTURED_GRID\n")
        fh.write(f"POINTS {len(points)} double\n")
        for p in points:
            fh.write(f"{p[0]:.17g} {p[1]:.17g} 0\n")
        fh.write(f"CELLS {len(tris)} {4 * len(tris)}\n")
        for t in tris:
            fh.write(f"3 {t[0]} {t[1]} {t[2]}\n")
        fh.write(f"CELL_TYPES {len(tris)}\n")
        fh.write("5\n" * len(tris))
        if cell_data:
            fh.write(f"CELL_DATA {len(tris)}\n")
            for name, values in cell_data.items():
                fh.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
                for v in values:
                    fh.write(f"{float(v):.17g}\n")


def write_structured_cells(path, xs, ys, cell_data: dict[str, np.ndarray]):
    """RECTILINEAR_GRID with per-cell scalar fields."""
    xs = np.asarray(xs)
    ys = np.asarray(ys)
    nx, ny = xs.size - 1, ys.size - 1
    with open(path, "w") as fh:
        fh.write("# vtk DataFile Version 3.0\nfracflow field\nASCII\n")
        fh.write("DATASET RECTILINEAR_GRID\n")
        fh.write(f"DIMENSIONS {xs.size} {ys.size} 1\n")
        fh.write(f"X_COORDINATES {xs.size} double\n")
        fh.write(" ".join(f"{x:.17g}" for x in xs) + "\n")
        fh.write(f"Y_COORDINATES {ys.size} double\n")
        fh.write(" ".join(f"{y:.17g}" for y in ys) + "\n")
        fh.write("Z_COORDINATES 1 double\n0\n")
        if cell_data:
            fh.write(f"CELL_DATA {nx * ny}\n")
            for name, values in cell_data.items():
                fh.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
                for v in values:
                    fh.write(f"{float(v):.17g}\n")


def write_polyline(path, points, point_data: dict[str, np.ndarray] | None = None):
    """POLYDATA polyline (e.g. a fracture with per-vertex values)."""
    points = np.asarray(points)
    n = len(points)
    with open(path, "w") as fh:
        fh.write("# vtk DataFile Version 3.0\nfracflow polyline\nASCII\n")
        fh.write("DATASET POLYDATA\n")
        fh.write(f"POINTS {n} double\n")
        for p in points:
            fh.write(f"{p[0]:.17g} {p[1]:.17g} 0\n")
        fh.write(f"LINES 1 {n + 1}\n")
        fh.write(str(n) + " " + " ".join(str(i) for i in range(n)) + "\n")
        if point_data:
            fh.write(f"POINT_DATA {n}\n")
            for name, values in point_data.items():
                fh.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
                for v in values:
                    fh.write(f"{float(v):.17g}\n")
