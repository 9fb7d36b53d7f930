"""Closed-form 1D fracture models and the exact 1D projection-scheme comparison.

The lower-dimensional 1D model collapses a thin high-contrast layer to a point
and admits a piecewise-linear pressure with equal slopes on both sides and a
jump at the fracture.  The discrete comparison solves the 1D projection-based
systems for both transmissibility variants, evaluates L1 errors against the
analytic profile, and sweeps (R_k, d) error maps.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .pedfm import oned_mf_transmissibility, oned_nnmf_transmissibility


@dataclass(frozen=True)
class OneDConfig:
    """Unit-interval single-fracture configuration.

    ``n`` must be odd so the mid-domain fracture never coincides with a grid
    node.
    """

    x_f: float = 0.5
    d: float = 1e-4
    k_m: float = 1.0
    k_f: float = 1e-4
    p0: float = 0.0
    p1: float = 1.0
    n: int = 5

    def __post_init__(self):
        if not (0.0 < self.x_f < 1.0):
            raise ValueError("x_f must lie inside (0, 1)")
        if self.n % 2 == 0 or self.n < 3:
            raise ValueError("n must be odd and >= 3")
        if self.d <= 0 or self.k_m <= 0 or self.k_f < 0:
            raise ValueError("d and k_m must be positive, k_f nonnegative")
        h = 1.0 / self.n
        r = self.x_f / h
        if abs(r - round(r)) < 1e-12:
            raise ValueError("x_f must not coincide with a grid node")

    @property
    def h(self) -> float:
        return 1.0 / self.n

    @property
    def r_k(self) -> float:
        return self.k_f / self.k_m


def analytic_profile(cfg: OneDConfig):
    """Analytic pressure: (slope, p_L, p_R, p_frac, p(x) callable).

    The slope k_f/(k_f + d k_m) (p1 - p0) is common to both matrix pieces; the
    jump p_R - p_L = d k_m (p1 - p0)/(k_f + d k_m) sits at the fracture.
    """
    den = cfg.k_f + cfg.d * cfg.k_m
    slope = cfg.k_f / den * (cfg.p1 - cfg.p0)
    p_l = ((1 - cfg.x_f) * cfg.k_f + cfg.d * cfg.k_m) / den * cfg.p0 + (
        cfg.x_f * cfg.k_f
    ) / den * cfg.p1
    p_r = ((1 - cfg.x_f) * cfg.k_f) / den * cfg.p0 + (
        cfg.x_f * cfg.k_f + cfg.d * cfg.k_m
    ) / den * cfg.p1
    p_f = 0.5 * (p_l + p_r)

    def p_of_x(x):
        x = np.asarray(x, dtype=float)
        left = cfg.p0 + slope * x
        right = cfg.p1 - slope * (1.0 - x)
        return np.where(x < cfg.x_f, left, right)

    return slope, float(p_l), float(p_r), float(p_f), p_of_x


def _fracture_cell(cfg: OneDConfig) -> int:
    """0-based index of the cell containing the fracture."""
    return min(int(cfg.x_f * cfg.n), cfg.n - 1)


def assemble_1d_pedfm(cfg: OneDConfig, variant: str):
    """Dense (n+1) x (n+1) system: n matrix pressures then the fracture pressure.

    The fracture is projected onto the grid node on its positive side, so the
    matrix-matrix connection across that node is removed (the projection covers
    the whole zero-dimensional face) and the far cell couples to the fracture
    through the non-neighbouring transmissibility.
    """
    n, h, km = cfg.n, cfg.h, cfg.k_m
    jf = _fracture_cell(cfg)
    if jf + 1 >= n:
        raise ValueError("fracture cell must have a right neighbor")
    t_mf = oned_mf_transmissibility(h, cfg.d, km, cfg.k_f, variant)
    t_nnf = oned_nnmf_transmissibility(h, cfg.d, km, cfg.k_f, variant)

    a = np.zeros((n + 1, n + 1))
    q = np.zeros(n + 1)
    t_mm = km / h
    for i in range(n - 1):
        if i == jf:  # projected node: T_mmn = 0
            continue
        a[i, i] += t_mm
        a[i + 1, i + 1] += t_mm
        a[i, i + 1] -= t_mm
        a[i + 1, i] -= t_mm
    # boundary halves (ghost value at distance h/2)
    a[0, 0] += 2.0 * km / h
    q[0] += 2.0 * km / h * cfg.p0
    a[n - 1, n - 1] += 2.0 * km / h
    q[n - 1] += 2.0 * km / h * cfg.p1
    # fracture couplings
    fr = n
    for cell, t in ((jf, t_mf), (jf + 1, t_nnf)):
        a[cell, cell] += t
        a[fr, fr] += t
        a[cell, fr] -= t
        a[fr, cell] -= t
    return a, q


def solve_1d_pedfm(cfg: OneDConfig, variant: str):
    """Matrix pressures and the fracture pressure for one variant."""
    a, q = assemble_1d_pedfm(cfg, variant)
    n = cfg.n
    if a[n, n] == 0.0:
        # fracture row fully isolated (exact zero couplings): eliminate it
        p_m = np.linalg.solve(a[:n, :n], q[:n])
        return p_m, float("nan")
    p = np.linalg.solve(a, q)
    return p[:n], float(p[n])


def _exact_gauss(a: list[list[Fraction]], q: list[Fraction]) -> list[Fraction]:
    """Exact rational Gaussian elimination (small dense systems)."""
    n = len(q)
    a = [row[:] for row in a]
    q = q[:]
    for col in range(n):
        piv = next((r for r in range(col, n) if a[r][col] != 0), None)
        if piv is None:
            raise ZeroDivisionError("singular exact system")
        a[col], a[piv] = a[piv], a[col]
        q[col], q[piv] = q[piv], q[col]
        inv = Fraction(1, 1) / a[col][col]
        for r in range(col + 1, n):
            f = a[r][col] * inv
            if f == 0:
                continue
            for c in range(col, n):
                a[r][c] -= f * a[col][c]
            q[r] -= f * q[col]
    x = [Fraction(0)] * n
    for r in range(n - 1, -1, -1):
        s = q[r]
        for c in range(r + 1, n):
            s -= a[r][c] * x[c]
        x[r] = s / a[r][r]
    return x


def solve_1d_pedfm_exact(cfg: OneDConfig, variant: str) -> list[Fraction]:
    """Exact rational matrix pressures (the float inputs taken as exact values).

    Needed where the error against the analytic profile cancels many digits
    (thin fractures with R_k far below d).
    """
    n = cfg.n
    h = Fraction(1, n)
    km = Fraction(cfg.k_m)
    kf = Fraction(cfg.k_f)
    d = Fraction(cfg.d)
    p0 = Fraction(cfg.p0)
    p1 = Fraction(cfg.p1)
    if variant == "updated":
        t_mf = 4 * km * kf / (2 * km * d + kf * h)
        t_nnf = 2 * km * kf / (km * d + 2 * kf * h)
    else:
        t_mf = (8 / h) * km * kf / (km + kf)
        t_nnf = (2 / h) * km * kf / (km + kf)
    jf = _fracture_cell(cfg)
    size = n + 1
    a = [[Fraction(0) for _ in range(size)] for _ in range(size)]
    q = [Fraction(0) for _ in range(size)]
    t_mm = km / h
    for i in range(n - 1):
        if i == jf:
            continue
        a[i][i] += t_mm
        a[i + 1][i + 1] += t_mm
        a[i][i + 1] -= t_mm
        a[i + 1][i] -= t_mm
    a[0][0] += 2 * km / h
    q[0] += 2 * km / h * p0
    a[n - 1][n - 1] += 2 * km / h
    q[n - 1] += 2 * km / h * p1
    for cell, t in ((jf, t_mf), (jf + 1, t_nnf)):
        a[cell][cell] += t
        a[n][n] += t
        a[cell][n] -= t
        a[n][cell] -= t
    if a[n][n] == 0:
        sub_a = [row[:n] for row in a[:n]]
        return _exact_gauss(sub_a, q[:n])
    return _exact_gauss(a, q)[:n]


def printed_pressures(cfg: OneDConfig, variant: str) -> np.ndarray:
    """Closed-form matrix pressure vectors for n = 5, p0 = 0, p1 = 1."""
    if cfg.n != 5 or cfg.p0 != 0.0 or cfg.p1 != 1.0 or abs(cfg.x_f - 0.5) > 1e-15:
        raise ValueError("closed forms hold for n=5, x_f=0.5, p0=0, p1=1")
    r = cfg.r_k
    d = cfg.d
    if variant == "legacy":
        return np.array(
            [4 * r, 12 * r, 20 * r, 5 + 25 * r, 5 + 33 * r]
        ) / (5 + 37 * r)
    return np.array(
        [2 * r, 6 * r, 10 * r, 20 * d + 15 * r, 20 * d + 19 * r]
    ) / (20 * d + 21 * r)


def printed_l1_error(cfg: OneDConfig, variant: str) -> float:
    """Closed-form L1 errors for n = 5 (fracture shifted to the projection node)."""
    r, d = cfg.r_k, cfg.d
    if variant == "legacy":
        return (13.0 / 50.0) * r * abs(5 - 3 * r - 40 * d) / (
            37 * r**2 + 5 * r + 37 * r * d + 5 * d
        )
    return (13.0 / 50.0) * r**2 / (21 * r**2 + 20 * d**2 + 41 * r * d)


def l1_errors(cfg: OneDConfig, exact: bool = True) -> tuple[float, float]:
    """(legacy, updated) L1 errors of the numeric solves vs the analytic profile.

    For fairness the analytic fracture position is shifted to the node the
    discrete fracture is projected onto (the slope does not depend on x_f).
    With ``exact`` the error is accumulated in rational arithmetic, which
    matters where it cancels many digits (R_k far below d); the float path is
    kept for large sweeps.
    """
    h = cfg.h
    jf = _fracture_cell(cfg)
    # the discrete fracture is projected onto the node right of its cell; the
    # analytic position shifts there (the slope does not depend on x_f)
    x_shift = (jf + 1) * h
    out = []
    if exact:
        km, kf, d = Fraction(cfg.k_m), Fraction(cfg.k_f), Fraction(cfg.d)
        p0, p1 = Fraction(cfg.p0), Fraction(cfg.p1)
        slope = kf / (kf + d * km) * (p1 - p0)
        xs = Fraction(jf + 1, cfg.n)
        cents = [Fraction(2 * i + 1, 2 * cfg.n) for i in range(cfg.n)]
        for variant in ("legacy", "updated"):
            p_m = solve_1d_pedfm_exact(cfg, variant)
            total = Fraction(0)
            for x, pm in zip(cents, p_m):
                pa = p0 + slope * x if x < xs else p1 - slope * (1 - x)
                total += abs(pa - pm)
            out.append(float(Fraction(1, cfg.n) * total))
        return out[0], out[1]

    den = cfg.k_f + cfg.d * cfg.k_m
    slope = cfg.k_f / den * (cfg.p1 - cfg.p0)

    def analytic_at(x):
        return np.where(
            x < x_shift,
            cfg.p0 + slope * x,
            cfg.p1 - slope * (1.0 - x),
        )

    centroids = (np.arange(cfg.n) + 0.5) * h
    for variant in ("legacy", "updated"):
        p_m, _ = solve_1d_pedfm(cfg, variant)
        err = analytic_at(centroids) - p_m
        out.append(h * float(np.abs(err).sum()))
    return out[0], out[1]


def error_map(
    d_range=(1e-8, 1e-1),
    rk_range=(1e-8, 1e8),
    resolution: int = 41,
    cfg: OneDConfig | None = None,
):
    """Log-spaced (d, R_k) sweep of both L1 errors.

    Returns (d values, R_k values, legacy errors, updated errors) with error
    arrays shaped (len(d), len(R_k)).
    """
    base = cfg or OneDConfig()
    ds = np.logspace(np.log10(d_range[0]), np.log10(d_range[1]), resolution)
    rks = np.logspace(np.log10(rk_range[0]), np.log10(rk_range[1]), resolution)
    legacy = np.empty((ds.size, rks.size))
    updated = np.empty((ds.size, rks.size))
    for i, d in enumerate(ds):
        for j, rk in enumerate(rks):
            c = OneDConfig(
                x_f=base.x_f,
                d=float(d),
                k_m=base.k_m,
                k_f=float(rk * base.k_m),
                p0=base.p0,
                p1=base.p1,
                n=base.n,
            )
            legacy[i, j], updated[i, j] = l1_errors(c, exact=False)
    return ds, rks, legacy, updated


def write_error_map_csv(path, ds, rks, legacy, updated) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["d", "R_k", "err_legacy", "err_updated"])
        for i, d in enumerate(ds):
            for j, rk in enumerate(rks):
                w.writerow([repr(float(d)), repr(float(rk)), repr(float(legacy[i, j])), repr(float(updated[i, j]))])
