"""Constrained triangular meshes and the conforming DFM discretization.

The mesher builds a jittered-lattice Delaunay triangulation in which required
polylines (fractures, coarse interfaces, subinterfaces) appear as mesh edges.
Constraint edges are protected by point spacing: lattice points too close to a
constraint are removed, constraint sample points are spaced so the empty-circle
property forces their edges into the triangulation, and a verify/insert loop
backstops the construction.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import Delaunay

from .exceptions import MeshError, NegativeTransmissibilityWarning
from .fvcore import BoundaryFace, ConnectionList, Kind

_CLEAR_RADIUS = 1.25  # lattice clearing radius around oblique constraints, in h
_BOUNDARY_CLEAR = 0.85  # same, for boundary lattice points, in h
_SAMPLE_SPACING = 0.80  # constraint sample spacing target, in h
_OFFSET_DIST = 0.70  # protection-strip offset row distance, in h
_ALIGNED_DROP = 0.35  # drop aligned-lattice samples this close to a crossing, in h


@dataclass(frozen=True)
class Constraint:
    """A straight segment that must appear as a chain of mesh edges."""

    p0: tuple[float, float]
    p1: tuple[float, float]
    tag: str


@dataclass
class TriMesh:
    """Conforming triangulation with tagged constraint chains."""

    points: np.ndarray  # (np, 2)
    tris: np.ndarray  # (nt, 3)
    chains: dict[str, list[int]] = field(default_factory=dict)

    @property
    def n_tris(self) -> int:
        return self.tris.shape[0]

    def tri_areas(self) -> np.ndarray:
        p = self.points
        a, b, c = p[self.tris[:, 0]], p[self.tris[:, 1]], p[self.tris[:, 2]]
        return 0.5 * np.abs(
            (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1])
            - (c[:, 0] - a[:, 0]) * (b[:, 1] - a[:, 1])
        )

    def tri_centroids(self) -> np.ndarray:
        p = self.points
        return (p[self.tris[:, 0]] + p[self.tris[:, 1]] + p[self.tris[:, 2]]) / 3.0

    def edge_map(self) -> dict[tuple[int, int], list[int]]:
        edges: dict[tuple[int, int], list[int]] = {}
        for t in range(self.n_tris):
            v = self.tris[t]
            for a, b in ((v[0], v[1]), (v[1], v[2]), (v[2], v[0])):
                key = (int(min(a, b)), int(max(a, b)))
                edges.setdefault(key, []).append(t)
        return edges

    def min_angle(self) -> float:
        """Smallest interior angle over all triangles, in degrees."""
        p = self.points
        angles = []
        for i in range(3):
            a = p[self.tris[:, i]]
            b = p[self.tris[:, (i + 1) % 3]]
            c = p[self.tris[:, (i + 2) % 3]]
            u, v = b - a, c - a
            cosang = np.sum(u * v, axis=1) / (
                np.linalg.norm(u, axis=1) * np.linalg.norm(v, axis=1)
            )
            angles.append(np.degrees(np.arccos(np.clip(cosang, -1.0, 1.0))))
        return float(np.min(np.stack(angles)))

    def transformed(self, fn) -> "TriMesh":
        """Copy with points mapped through ``fn`` (orientation fixed afterwards)."""
        pts = np.array([fn(p) for p in self.points])
        mesh = TriMesh(points=pts, tris=self.tris.copy(), chains=dict(self.chains))
        # keep positive orientation for area formulas
        a, b, c = (
            pts[mesh.tris[:, 0]],
            pts[mesh.tris[:, 1]],
            pts[mesh.tris[:, 2]],
        )
        det = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (c[:, 0] - a[:, 0]) * (
            b[:, 1] - a[:, 1]
        )
        flip = det < 0
        mesh.tris[flip, 1], mesh.tris[flip, 2] = (
            mesh.tris[flip, 2].copy(),
            mesh.tris[flip, 1].copy(),
        )
        return mesh


def _hash_jitter(i: int, j: int, salt: int) -> tuple[float, float]:
    """Deterministic pseudo-random offsets in [-1, 1), stable across platforms."""
    h = (i * 0x9E3779B97F4A7C15 + j * 0xC2B2AE3D27D4EB4F + salt * 0x165667B19E3779F9) % (
        1 << 64
    )
    h ^= h >> 33
    h = (h * 0xFF51AFD7ED558CCD) % (1 << 64)
    h ^= h >> 33
    a = (h & 0xFFFFFFFF) / 2**31 - 1.0
    b = ((h >> 32) & 0xFFFFFFFF) / 2**31 - 1.0
    return a, b


def _seg_point_dist(p, a, b):
    ab = b - a
    t = np.clip(np.dot(p - a, ab) / np.dot(ab, ab), 0.0, 1.0)
    return float(np.linalg.norm(p - (a + t * ab)))


def _seg_intersection(a0, a1, b0, b1):
    """Interior intersection point of two segments, or None."""
    d1 = a1 - a0
    d2 = b1 - b0
    den = d1[0] * d2[1] - d1[1] * d2[0]
    if abs(den) < 1e-14 * (np.linalg.norm(d1) * np.linalg.norm(d2)):
        return None
    r = b0 - a0
    t = (r[0] * d2[1] - r[1] * d2[0]) / den
    s = (r[0] * d1[1] - r[1] * d1[0]) / den
    if -1e-12 <= t <= 1 + 1e-12 and -1e-12 <= s <= 1 + 1e-12:
        return a0 + np.clip(t, 0.0, 1.0) * d1
    return None


def triangulate(
    width: float,
    height: float,
    h: float,
    constraints: list[Constraint] | None = None,
    jitter: float = 0.12,
    salt: int = 0,
    max_passes: int = 12,
    smooth: bool = True,
) -> TriMesh:
    """Triangulate [0, width] x [0, height] honoring the given constraints."""
    constraints = constraints or []
    nx = max(int(round(width / h)), 2)
    ny = max(int(round(height / h)), 2)
    hx, hy = width / nx, height / ny
    hmin = min(hx, hy)

    segs = [(np.asarray(c.p0, float), np.asarray(c.p1, float)) for c in constraints]

    # aligned constraints ride on the lattice; oblique ones get their own samples
    def is_aligned(a, b):
        if abs(a[0] - b[0]) < 1e-12 * width:
            r = a[0] / hx
            return abs(r - round(r)) < 1e-9
        if abs(a[1] - b[1]) < 1e-12 * height:
            r = a[1] / hy
            return abs(r - round(r)) < 1e-9
        return False

    aligned = [is_aligned(a, b) for a, b in segs]

    # crossing points between constraint pairs
    crossings: list[list[np.ndarray]] = [[] for _ in segs]
    for i in range(len(segs)):
        for j in range(i + 1, len(segs)):
            x = _seg_intersection(*segs[i], *segs[j])
            if x is not None:
                crossings[i].append(x)
                crossings[j].append(x)

    def sample_chain(idx):
        a, b = segs[idx]
        length = float(np.linalg.norm(b - a))
        params = [0.0, 1.0]
        for x in crossings[idx]:
            t = float(np.dot(x - a, b - a) / length**2)
            if 1e-12 < t < 1 - 1e-12:
                params.append(t)
        params = sorted(set(params))
        if aligned[idx]:
            pts = [a + t * (b - a) for t in params]
            out = [pts[0]]
            for p0, p1, t1 in zip(pts[:-1], pts[1:], params[1:]):
                seg_len = float(np.linalg.norm(p1 - p0))
                n_div = max(int(round(seg_len / hmin)), 1)
                # keep lattice spacing, but do not leave slivers near crossings
                for m in range(1, n_div):
                    q = p0 + (m / n_div) * (p1 - p0)
                    if (
                        np.linalg.norm(q - p0) >= _ALIGNED_DROP * hmin
                        and np.linalg.norm(q - p1) >= _ALIGNED_DROP * hmin
                    ):
                        out.append(q)
                out.append(p1)
            return out
        pts = [a + t * (b - a) for t in params]
        out = [pts[0]]
        for p0, p1 in zip(pts[:-1], pts[1:]):
            seg_len = float(np.linalg.norm(p1 - p0))
            n_div = max(int(round(seg_len / (_SAMPLE_SPACING * hmin))), 1)
            for m in range(1, n_div):
                out.append(p0 + (m / n_div) * (p1 - p0))
            out.append(p1)
        return out

    chain_pts = [sample_chain(i) for i in range(len(segs))]

    # protection strips: offset rows flanking oblique constraints so the cleared
    # band fills with near-equilateral triangles
    strip_pts: list[np.ndarray] = []
    margin = 0.05 * hmin

    def admissible(q):
        if not (-1e-12 <= q[0] <= width + 1e-12 and -1e-12 <= q[1] <= height + 1e-12):
            return False
        return all(
            _seg_point_dist(q, *segs[k]) >= 0.55 * hmin for k in range(len(segs))
        )

    def on_boundary(p):
        return (
            min(p[0], width - p[0]) < 1e-9 * width
            or min(p[1], height - p[1]) < 1e-9 * height
        )

    for idx, ch in enumerate(chain_pts):
        if aligned[idx]:
            continue
        a, b = segs[idx]
        t = (b - a) / np.linalg.norm(b - a)
        nrm = np.array([-t[1], t[0]])
        for p0, p1 in zip(ch[:-1], ch[1:]):
            mid = 0.5 * (np.asarray(p0) + np.asarray(p1))
            for sgn in (1.0, -1.0):
                q = mid + sgn * _OFFSET_DIST * hmin * nrm
                if (
                    margin < q[0] < width - margin
                    and margin < q[1] < height - margin
                    and admissible(q)
                ):
                    strip_pts.append(q)
        # endpoint caps: fill the cleared band around tips and boundary crossings
        for tip, tdir in ((a, -t), (b, t)):
            if on_boundary(tip):
                # cap points along the boundary the tip sits on
                if min(tip[0], width - tip[0]) < 1e-9 * width:
                    tb = np.array([0.0, 1.0])
                else:
                    tb = np.array([1.0, 0.0])
                for sgn in (1.0, -1.0):
                    q = tip + sgn * _OFFSET_DIST * hmin * tb
                    if (
                        -1e-12 <= q[0] <= width + 1e-12
                        and -1e-12 <= q[1] <= height + 1e-12
                        and admissible(q)
                    ):
                        strip_pts.append(np.clip(q, [0, 0], [width, height]))
            else:
                for dirn in (tdir, tdir + nrm, tdir - nrm):
                    dirn = dirn / np.linalg.norm(dirn)
                    q = tip + _OFFSET_DIST * hmin * dirn
                    if (
                        margin < q[0] < width - margin
                        and margin < q[1] < height - margin
                        and admissible(q)
                    ):
                        strip_pts.append(q)

    # background lattice, cleared near oblique constraints
    boundary_tips = [
        p
        for idx, (a, b) in enumerate(segs)
        if not aligned[idx]
        for p in (a, b)
        if on_boundary(p)
    ]
    ii, jj = np.meshgrid(np.arange(nx + 1), np.arange(ny + 1), indexing="xy")
    ii = ii.ravel()
    jj = jj.ravel()
    px = ii * hx
    py = jj * hy
    interior_mask = (0 < ii) & (ii < nx) & (0 < jj) & (jj < ny)
    if jitter > 0:
        off = np.array([_hash_jitter(int(i), int(j), salt) for i, j in zip(ii, jj)])
        px = px + np.where(interior_mask, jitter * hx * off[:, 0], 0.0)
        py = py + np.where(interior_mask, jitter * hy * off[:, 1], 0.0)
    pxy = np.column_stack([px, py])
    keep = np.ones(px.size, dtype=bool)
    for idx, (a, b) in enumerate(segs):
        ab = b - a
        t = np.clip((pxy - a) @ ab / float(ab @ ab), 0.0, 1.0)
        dist = np.linalg.norm(pxy - (a + t[:, None] * ab), axis=1)
        if aligned[idx]:
            r = np.full(px.size, 0.30 * hmin)
        else:
            r = np.where(interior_mask, _CLEAR_RADIUS * hmin, _BOUNDARY_CLEAR * hmin)
        keep &= dist >= r
    for tip in boundary_tips:
        dist = np.linalg.norm(pxy - tip, axis=1)
        keep &= interior_mask | (dist >= _CLEAR_RADIUS * hmin)
    lattice = [pxy[m] for m in np.where(keep)[0]]
    lattice.extend(strip_pts)

    n_bnd_or_fixed = 0  # filled below: movable points are interior lattice + strip

    def build(points_extra, lattice_pts, movable_mask):
        """Dedupe points, triangulate and resolve chain vertex indices."""
        all_pts = list(lattice_pts) + [q for ch in points_extra for q in ch]
        movable = list(movable_mask) + [False] * sum(len(ch) for ch in points_extra)
        tol = 1e-9 * max(width, height)
        seen: dict[tuple[int, int], int] = {}
        pts = []
        mov = []
        index_of = []
        for p, mv in zip(all_pts, movable):
            key = (int(round(p[0] / tol)), int(round(p[1] / tol)))
            if key in seen:
                index_of.append(seen[key])
                mov[seen[key]] = mov[seen[key]] and mv
            else:
                seen[key] = len(pts)
                index_of.append(len(pts))
                pts.append(p)
                mov.append(mv)
        pts = np.asarray(pts)
        tri = Delaunay(pts)
        offs = len(lattice_pts)
        chains = []
        pos = offs
        for ch in points_extra:
            chains.append([index_of[pos + m] for m in range(len(ch))])
            pos += len(ch)
        return pts, tri.simplices.copy(), chains, np.asarray(mov, dtype=bool)

    def edge_array(tris):
        e = np.vstack([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]])
        e.sort(axis=1)
        return np.unique(e, axis=0)

    def verify(pts, tris, chain_idx):
        edges = {(int(a), int(b)) for a, b in edge_array(tris)}
        missing = []
        for ci, ch in enumerate(chain_idx):
            for m, (a, b) in enumerate(zip(ch[:-1], ch[1:])):
                if (min(a, b), max(a, b)) not in edges and a != b:
                    missing.append((ci, m))
        return missing

    movable0 = [0 < p[0] < width and 0 < p[1] < height for p in lattice]

    pts = tris = chain_idx = mov = None
    for _ in range(max_passes):
        pts, tris, chain_idx, mov = build(chain_pts, lattice, movable0)
        missing = verify(pts, tris, chain_idx)
        if not missing:
            break
        for ci, m in sorted(missing, reverse=True):
            ch = chain_pts[ci]
            mid = 0.5 * (np.asarray(ch[m]) + np.asarray(ch[m + 1]))
            chain_pts[ci] = ch[: m + 1] + [mid] + ch[m + 1 :]
    else:
        raise MeshError("constrained edges could not be recovered")

    # Laplacian smoothing of movable vertices (keeps constraint clearance);
    # re-triangulate and fall back one step if a constrained edge is lost.
    for _ in range(3 if smooth else 0):
        edges = edge_array(tris)
        nbr_sum = np.zeros_like(pts)
        nbr_cnt = np.zeros(len(pts))
        np.add.at(nbr_sum, edges[:, 0], pts[edges[:, 1]])
        np.add.at(nbr_sum, edges[:, 1], pts[edges[:, 0]])
        np.add.at(nbr_cnt, edges[:, 0], 1)
        np.add.at(nbr_cnt, edges[:, 1], 1)
        target = nbr_sum / np.maximum(nbr_cnt, 1)[:, None]
        cand = pts + 0.8 * (target - pts)
        ok = mov.copy()
        ok &= (cand[:, 0] > margin) & (cand[:, 0] < width - margin)
        ok &= (cand[:, 1] > margin) & (cand[:, 1] < height - margin)
        for a, b in segs:
            ab = b - a
            t = np.clip((cand - a) @ ab / float(ab @ ab), 0.0, 1.0)
            dist = np.linalg.norm(cand - (a + t[:, None] * ab), axis=1)
            ok &= dist >= 0.55 * hmin
        new_pts = np.where(ok[:, None], cand, pts)
        tri2 = Delaunay(new_pts)
        tris2 = tri2.simplices.copy()
        if verify(new_pts, tris2, chain_idx):
            break
        pts, tris = new_pts, tris2

    mesh = TriMesh(points=pts, tris=tris)
    for c, ch in zip(constraints, chain_idx):
        dedup = [ch[0]]
        for v in ch[1:]:
            if v != dedup[-1]:
                dedup.append(v)
        if c.tag in mesh.chains:
            raise MeshError(f"duplicate constraint tag {c.tag!r}")
        mesh.chains[c.tag] = dedup
    return mesh


# ---------------------------------------------------------------------------
# conforming DFM connections on a TriMesh


@dataclass
class FractureSpec:
    aperture: float
    k_tau: float
    k_n: float


@dataclass
class DfmDiscretization:
    """Cells, measures and connections of a hybrid (lower-dimensional) DFM mesh."""

    mesh: TriMesh
    connections: ConnectionList
    measures: np.ndarray  # tri areas then fracture-cell cross sections  |e| * d
    n_matrix: int
    frac_edges: list[tuple[int, int]]  # vertex pairs, ordered along the fracture
    frac_lengths: np.ndarray
    frac_midpoints: np.ndarray
    mf_connection_idx: np.ndarray  # indices into connections with kind MF
    edge_tris: dict[tuple[int, int], list[int]]

    @property
    def n_cells(self) -> int:
        return self.n_matrix + len(self.frac_edges)


def circumcenters(points, tris) -> np.ndarray:
    a, b, c = points[tris[:, 0]], points[tris[:, 1]], points[tris[:, 2]]
    d = 2.0 * (
        a[:, 0] * (b[:, 1] - c[:, 1])
        + b[:, 0] * (c[:, 1] - a[:, 1])
        + c[:, 0] * (a[:, 1] - b[:, 1])
    )
    a2 = (a**2).sum(1)
    b2 = (b**2).sum(1)
    c2 = (c**2).sum(1)
    ux = (a2 * (b[:, 1] - c[:, 1]) + b2 * (c[:, 1] - a[:, 1]) + c2 * (a[:, 1] - b[:, 1])) / d
    uy = (a2 * (c[:, 0] - b[:, 0]) + b2 * (a[:, 0] - c[:, 0]) + c2 * (b[:, 0] - a[:, 0])) / d
    return np.column_stack([ux, uy])


def _half_trans_many(points, centroids, kx, ky, tri_ids, va, vb):
    """Vectorized TPFA half-transmissibilities of triangles toward edges (va, vb)."""
    e0 = points[va]
    e1 = points[vb]
    ev = e1 - e0
    elen = np.hypot(ev[:, 0], ev[:, 1])
    n = np.column_stack([ev[:, 1], -ev[:, 0]]) / elen[:, None]
    d = 0.5 * (e0 + e1) - centroids[tri_ids]
    sgn = np.sign(np.sum(n * d, axis=1))
    n *= np.where(sgn == 0.0, 1.0, sgn)[:, None]
    kxx = kx[tri_ids]
    kyy = ky[tri_ids]
    num = elen * (kxx * n[:, 0] * d[:, 0] + kyy * n[:, 1] * d[:, 1])
    t = num / np.sum(d * d, axis=1)
    bad = t <= 0.0
    if np.any(bad):
        warnings.warn(
            "non-positive triangle half-transmissibility (mesh quality)",
            NegativeTransmissibilityWarning,
        )
        t = np.where(bad, 1e-14 * elen * np.maximum(kxx, kyy), t)
    return t


def _edge_geometry(points, ccs, centroids, kx, ky, tri_ids, va, vb):
    """Per (edge, cell) data for orthogonal-dual TPFA with centroid fallback.

    Returns (elen, d_ortho, d_cent, k_eff, t_cent): the signed circumcenter
    distance to the edge (positive toward the edge), the centroid distance,
    the normal-direction permeability, and the centroid half-transmissibility.
    On a Delaunay mesh the circumcenter connection line is perpendicular to a
    shared edge, which makes two-point fluxes exact for linear fields with
    isotropic permeability.
    """
    e0 = points[va]
    e1 = points[vb]
    ev = e1 - e0
    elen = np.hypot(ev[:, 0], ev[:, 1])
    n = np.column_stack([ev[:, 1], -ev[:, 0]]) / elen[:, None]
    mid = 0.5 * (e0 + e1)
    dc_vec = mid - centroids[tri_ids]
    sgn = np.sign(np.sum(n * dc_vec, axis=1))
    n *= np.where(sgn == 0.0, 1.0, sgn)[:, None]
    kxx = kx[tri_ids]
    kyy = ky[tri_ids]
    k_eff = kxx * n[:, 0] ** 2 + kyy * n[:, 1] ** 2
    d_ortho = np.sum(n * (mid - ccs[tri_ids]), axis=1)  # signed, may be <= 0
    d_cent = np.sum(n * dc_vec, axis=1)
    num = elen * (kxx * n[:, 0] * dc_vec[:, 0] + kyy * n[:, 1] * dc_vec[:, 1])
    t_cent = num / np.sum(dc_vec * dc_vec, axis=1)
    bad = t_cent <= 0.0
    if np.any(bad):
        warnings.warn(
            "non-positive triangle half-transmissibility (mesh quality)",
            NegativeTransmissibilityWarning,
        )
        t_cent = np.where(bad, 1e-14 * elen * np.maximum(kxx, kyy), t_cent)
    return elen, d_ortho, d_cent, k_eff, t_cent


def _single_side_half(elen, d_ortho, d_cent, k_eff, t_cent):
    """Positive half-transmissibility: orthogonal form when well defined."""
    ok = d_ortho > 0.05 * d_cent
    return np.where(ok, k_eff * elen / np.maximum(d_ortho, 1e-300), t_cent)


def _half_trans_tri(points, tris, centroids, kx, ky, tri, v0, v1):
    """TPFA half-transmissibility of one triangle toward edge (v0, v1)."""
    return float(
        _half_trans_many(
            points,
            centroids,
            np.asarray(kx, float).reshape(-1) if np.ndim(kx) else np.broadcast_to(kx, (len(centroids),)),
            np.asarray(ky, float).reshape(-1) if np.ndim(ky) else np.broadcast_to(ky, (len(centroids),)),
            np.array([tri]),
            np.array([v0]),
            np.array([v1]),
        )[0]
    )


def dfm_discretize(
    mesh: TriMesh,
    kx,
    ky,
    fractures: dict[str, FractureSpec] | None = None,
) -> DfmDiscretization:
    """Build cell measures and the full connection list for a DFM mesh.

    ``kx``/``ky`` are per-triangle diagonal permeabilities (scalars broadcast).
    Fracture chains referenced by ``fractures`` become lower-dimensional cell
    chains; edges on them carry matrix-fracture coupling instead of a direct
    matrix-matrix connection.
    """
    fractures = fractures or {}
    pts = mesh.points
    tris = mesh.tris
    areas = mesh.tri_areas()
    cents = mesh.tri_centroids()
    nt = mesh.n_tris
    kx = np.broadcast_to(np.asarray(kx, float), (nt,)) if np.ndim(kx) == 0 else np.asarray(kx, float)
    ky = np.broadcast_to(np.asarray(ky, float), (nt,)) if np.ndim(ky) == 0 else np.asarray(ky, float)

    # unique edges with their incident triangles, fully vectorized
    all_e = np.vstack([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]])
    all_e.sort(axis=1)
    slot_tri = np.tile(np.arange(nt), 3)
    uniq, inv = np.unique(all_e, axis=0, return_inverse=True)
    ne = uniq.shape[0]
    order = np.argsort(inv, kind="stable")
    counts = np.bincount(inv, minlength=ne)
    starts = np.concatenate([[0], np.cumsum(counts)])
    t_first = slot_tri[order[starts[:-1]]]
    t_second = np.where(counts == 2, slot_tri[order[np.minimum(starts[:-1] + 1, order.size - 1)]], -1)

    ccs = circumcenters(pts, tris)
    elen1, do1, dc1, ke1, tc1 = _edge_geometry(
        pts, ccs, cents, kx, ky, t_first, uniq[:, 0], uniq[:, 1]
    )
    half_first = _single_side_half(elen1, do1, dc1, ke1, tc1)
    interior = counts == 2
    half_second = np.zeros(ne)
    do2 = np.zeros(ne)
    dc2 = np.zeros(ne)
    ke2 = np.ones(ne)
    tc2 = np.ones(ne)
    if np.any(interior):
        elen2, do2i, dc2i, ke2i, tc2i = _edge_geometry(
            pts, ccs, cents, kx, ky, t_second[interior], uniq[interior, 0], uniq[interior, 1]
        )
        do2[interior] = do2i
        dc2[interior] = dc2i
        ke2[interior] = ke2i
        tc2[interior] = tc2i
        half_second[interior] = _single_side_half(elen2, do2i, dc2i, ke2i, tc2i)

    edge_tris: dict[tuple[int, int], list[int]] = {}
    for e in range(ne):
        key = (int(uniq[e, 0]), int(uniq[e, 1]))
        edge_tris[key] = [int(t_first[e])] + ([int(t_second[e])] if interior[e] else [])

    edge_id: dict[tuple[int, int], int] = {
        (int(uniq[e, 0]), int(uniq[e, 1])): e for e in range(ne)
    }

    frac_edge_set: dict[tuple[int, int], int] = {}
    frac_edges: list[tuple[int, int]] = []
    specs: list[FractureSpec] = []
    for tag, spec in fractures.items():
        chain = mesh.chains.get(tag)
        if not chain:
            continue
        for a, b in zip(chain[:-1], chain[1:]):
            key = (min(a, b), max(a, b))
            frac_edge_set[key] = len(frac_edges)
            frac_edges.append((a, b))
            specs.append(spec)

    # matrix-matrix connections on interior non-fracture edges: orthogonal-dual
    # composition with signed distances, centroid-harmonic fallback
    is_frac = np.zeros(ne, dtype=bool)
    for key in frac_edge_set:
        is_frac[edge_id[key]] = True
    mm = interior & ~is_frac
    den = do1[mm] / ke1[mm] + do2[mm] / ke2[mm]
    den_cent = dc1[mm] / ke1[mm] + dc2[mm] / ke2[mm]
    ok = den > 0.05 * den_cent
    elen_mm = elen1[mm]
    t_ortho = elen_mm / np.maximum(den, 1e-300)
    t_fallback = tc1[mm] * tc2[mm] / (tc1[mm] + tc2[mm])
    t_mm = np.where(ok, t_ortho, t_fallback)
    mm_conns = ConnectionList(
        cell_a=t_first[mm].astype(np.int64),
        cell_b=t_second[mm].astype(np.int64),
        trans=t_mm,
        kind=np.full(int(mm.sum()), Kind.MM, dtype=np.int8),
    )

    # fracture cells: matrix-fracture per adjacent triangle, ff along each chain
    rows = []
    fl = np.empty(len(frac_edges))
    fm = np.empty((len(frac_edges), 2))
    for i, (a, b) in enumerate(frac_edges):
        spec = specs[i]
        elen = float(np.linalg.norm(pts[b] - pts[a]))
        fl[i] = elen
        fm[i] = 0.5 * (pts[a] + pts[b])
    ff_rows = []
    for tag, spec in fractures.items():
        chain = mesh.chains.get(tag)
        if not chain:
            continue
        ids = [
            frac_edge_set[(min(a, b), max(a, b))]
            for a, b in zip(chain[:-1], chain[1:])
        ]
        for i, j in zip(ids[:-1], ids[1:]):
            ta = 2.0 * spec.k_tau * spec.aperture / fl[i]
            tb = 2.0 * spec.k_tau * spec.aperture / fl[j]
            ff_rows.append((nt + i, nt + j, ta * tb / (ta + tb), Kind.FF))
    mf_rows = []
    for key, i in frac_edge_set.items():
        spec = specs[i]
        e = edge_id[key]
        beta = 2.0 * spec.k_n * fl[i] / spec.aperture
        for t, alpha in (
            ((t_first[e], half_first[e]),)
            + (((t_second[e], half_second[e]),) if interior[e] else ())
        ):
            mf_rows.append((int(t), nt + i, alpha * beta / (alpha + beta), Kind.MF))

    conns = mm_conns.extend(ConnectionList.from_rows(ff_rows + mf_rows))
    mf_idx = np.arange(len(mm_conns) + len(ff_rows), len(conns), dtype=np.int64)

    measures = np.concatenate(
        [areas, fl * np.array([s.aperture for s in specs])] if frac_edges else [areas]
    )
    return DfmDiscretization(
        mesh=mesh,
        connections=conns,
        measures=measures,
        n_matrix=nt,
        frac_edges=frac_edges,
        frac_lengths=fl,
        frac_midpoints=fm,
        mf_connection_idx=mf_idx,
        edge_tris=edge_tris,
    )


def boundary_faces_tri(
    disc: DfmDiscretization,
    kx,
    ky,
    classify,
) -> list[BoundaryFace]:
    """Boundary faces from a classifier ``classify(center) -> (kind, value) | None``.

    ``None`` means no-flow (face omitted).  Fracture tips on the boundary stay
    no-flow.
    """
    mesh = disc.mesh
    pts = mesh.points
    cents = mesh.tri_centroids()
    ccs = circumcenters(pts, mesh.tris)
    nt = mesh.n_tris
    kx = np.broadcast_to(np.asarray(kx, float), (nt,)) if np.ndim(kx) == 0 else np.asarray(kx, float)
    ky = np.broadcast_to(np.asarray(ky, float), (nt,)) if np.ndim(ky) == 0 else np.asarray(ky, float)
    faces = []
    for (a, b), ts in disc.edge_tris.items():
        if len(ts) != 1:
            continue
        center = 0.5 * (pts[a] + pts[b])
        spec = classify(center)
        if spec is None:
            continue
        kind, value = spec
        elen = float(np.linalg.norm(pts[b] - pts[a]))
        t_half = 0.0
        if kind == "dirichlet":
            geo = _edge_geometry(
                pts, ccs, cents, kx, ky, np.array([ts[0]]), np.array([a]), np.array([b])
            )
            t_half = float(_single_side_half(*geo)[0])
        faces.append(
            BoundaryFace(
                cell=ts[0],
                kind=kind,
                value=float(value),
                t_half=t_half,
                measure=elen,
                center=(float(center[0]), float(center[1])),
            )
        )
    return faces
