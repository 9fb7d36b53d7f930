"""Scenario ingestion: JSON schema, validation, and typed access.

All numbers are SI.  Validation errors carry the offending field path (and the
JSON line/column when the file itself cannot be parsed).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ScenarioError
from .geometry import FractureSegment

METHODS = (
    "edfm",
    "pedfm-legacy",
    "pedfm-updated",
    "ledfm",
    "ledfm-msfv",
    "dfm-conforming",
    "reference-equidim",
)

_BC_SIDES = ("bottom", "top", "left", "right")
_BC_TYPES = ("dirichlet", "neumann")


@dataclass
class TransportSpec:
    enabled: bool = False
    c_d: float = 1.0
    t_end: float = 1.0
    steps: int = 1


@dataclass
class Scenario:
    lx: float
    ly: float
    n: int
    fractures: list[FractureSegment]
    kx: float
    ky: float
    phi: float
    mu: float
    bc: dict[str, tuple[str, float]]
    method: str = "edfm"
    h_fine: float = 1 / 32
    transport: TransportSpec = field(default_factory=TransportSpec)

    def validate(self) -> "Scenario":
        if self.lx <= 0 or self.ly <= 0:
            raise ScenarioError("domain.lx/ly: must be positive")
        if self.n < 1:
            raise ScenarioError("grid.n: must be >= 1")
        if min(self.kx, self.ky, self.phi, self.mu) <= 0:
            raise ScenarioError("matrix/fluid: kx, ky, phi, mu must be positive")
        if self.method not in METHODS:
            raise ScenarioError(f"method: {self.method!r} not one of {METHODS}")
        for side in _BC_SIDES:
            if side not in self.bc:
                raise ScenarioError(f"bc.{side}: missing")
            kind, _ = self.bc[side]
            if kind not in _BC_TYPES:
                raise ScenarioError(f"bc.{side}.type: {kind!r} not in {_BC_TYPES}")
        if all(kind == "neumann" for kind, _ in self.bc.values()):
            raise ScenarioError("bc: pure-Neumann scenarios are not supported")
        for i, f in enumerate(self.fractures):
            for p in (f.p0, f.p1):
                if not (0 <= p[0] <= self.lx and 0 <= p[1] <= self.ly):
                    raise ScenarioError(f"fracture[{i}]: endpoint {p} outside the domain")
        for i in range(len(self.fractures)):
            for j in range(i + 1, len(self.fractures)):
                if _segments_intersect(self.fractures[i], self.fractures[j]):
                    raise ScenarioError(f"fracture[{i}]/fracture[{j}]: fractures intersect")
        if self.method in ("ledfm", "ledfm-msfv"):
            if abs(self.lx / self.n - self.ly / self.n) > 1e-12 * self.lx or abs(
                self.lx - self.ly
            ) > 1e-12 * self.lx:
                raise ScenarioError("grid: local upscaling requires square cells")
            if len(self.fractures) != 1:
                raise ScenarioError("fracture: local upscaling supports exactly one fracture")
        if self.method.startswith("pedfm") and len(self.fractures) != 1:
            raise ScenarioError("fracture: projection coupling supports exactly one fracture")
        if self.h_fine <= 0 or self.h_fine > 0.5:
            raise ScenarioError("fine.h_fine: must lie in (0, 0.5]")
        if self.transport.enabled:
            if self.transport.steps < 1 or self.transport.t_end <= 0:
                raise ScenarioError("transport: steps >= 1 and t_end > 0 required")
        return self


def _segments_intersect(f1: FractureSegment, f2: FractureSegment) -> bool:
    p = np.asarray(f1.p0)
    r = np.asarray(f1.p1) - p
    q = np.asarray(f2.p0)
    s = np.asarray(f2.p1) - q
    den = r[0] * s[1] - r[1] * s[0]
    if abs(den) < 1e-14 * np.linalg.norm(r) * np.linalg.norm(s):
        return False
    t = ((q - p)[0] * s[1] - (q - p)[1] * s[0]) / den
    u = ((q - p)[0] * r[1] - (q - p)[1] * r[0]) / den
    return 0 < t < 1 and 0 < u < 1


def _get(d, path, typ, default=None, required=True):
    cur = d
    for part in path.split("."):
        if not isinstance(cur, dict) or part not in cur:
            if required and default is None:
                raise ScenarioError(f"{path}: missing")
            return default
        cur = cur[part]
    try:
        if typ is float:
            if isinstance(cur, bool):
                raise TypeError
            return float(cur)
        if typ is int:
            if isinstance(cur, bool) or (isinstance(cur, float) and cur != int(cur)):
                raise TypeError
            return int(cur)
        if typ is bool:
            if not isinstance(cur, bool):
                raise TypeError
            return cur
        if typ is str:
            if not isinstance(cur, str):
                raise TypeError
            return cur
        if typ is list:
            if not isinstance(cur, list):
                raise TypeError
            return cur
    except (TypeError, ValueError):
        raise ScenarioError(f"{path}: expected {typ.__name__}, got {cur!r}") from None
    return cur


def scenario_from_dict(data: dict) -> Scenario:
    if not isinstance(data, dict):
        raise ScenarioError("top level: expected a JSON object")
    fracs = []
    for i, fd in enumerate(_get(data, "fracture", list, default=[], required=False)):
        if not isinstance(fd, dict):
            raise ScenarioError(f"fracture[{i}]: expected an object")
        try:
            fracs.append(
                FractureSegment(
                    p0=(_get(fd, "x1", float), _get(fd, "y1", float)),
                    p1=(_get(fd, "x2", float), _get(fd, "y2", float)),
                    aperture=_get(fd, "aperture", float),
                    k_tau=_get(fd, "k_tau", float),
                    k_n=_get(fd, "k_n", float),
                )
            )
        except ValueError as exc:
            raise ScenarioError(f"fracture[{i}]: {exc}") from None
    bc = {}
    for side in _BC_SIDES:
        bc[side] = (
            _get(data, f"bc.{side}.type", str),
            _get(data, f"bc.{side}.value", float),
        )
    tr = TransportSpec(
        enabled=_get(data, "transport.enabled", bool, default=False, required=False),
        c_d=_get(data, "transport.c_d", float, default=1.0, required=False),
        t_end=_get(data, "transport.t_end", float, default=1.0, required=False),
        steps=_get(data, "transport.steps", int, default=1, required=False),
    )
    scn = Scenario(
        lx=_get(data, "domain.lx", float),
        ly=_get(data, "domain.ly", float),
        n=_get(data, "grid.n", int),
        fractures=fracs,
        kx=_get(data, "matrix.kx", float),
        ky=_get(data, "matrix.ky", float),
        phi=_get(data, "matrix.phi", float),
        mu=_get(data, "fluid.mu", float),
        bc=bc,
        method=_get(data, "method", str, default="edfm", required=False),
        h_fine=_get(data, "fine.h_fine", float, default=1 / 32, required=False),
        transport=tr,
    )
    return scn.validate()


def load_scenario(path) -> Scenario:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except FileNotFoundError:
        raise ScenarioError(f"{path}: no such file") from None
    except json.JSONDecodeError as exc:
        raise ScenarioError(
            f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}"
        ) from None
    return scenario_from_dict(data)


def scenario_to_dict(scn: Scenario) -> dict:
    return {
        "domain": {"lx": scn.lx, "ly": scn.ly},
        "grid": {"n": scn.n},
        "fracture": [
            {
                "x1": f.p0[0],
                "y1": f.p0[1],
                "x2": f.p1[0],
                "y2": f.p1[1],
                "aperture": f.aperture,
                "k_tau": f.k_tau,
                "k_n": f.k_n,
            }
            for f in scn.fractures
        ],
        "matrix": {"kx": scn.kx, "ky": scn.ky, "phi": scn.phi},
        "fluid": {"mu": scn.mu},
        "bc": {s: {"type": t, "value": v} for s, (t, v) in scn.bc.items()},
        "method": scn.method,
        "fine": {"h_fine": scn.h_fine},
        "transport": {
            "enabled": scn.transport.enabled,
            "c_d": scn.transport.c_d,
            "t_end": scn.transport.t_end,
            "steps": scn.transport.steps,
        },
    }
