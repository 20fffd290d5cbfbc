"""Farm-scale coverage: radius under crops, static site grids, mobile gateway schedules
and fixed-versus-variable height field comparisons."""

from __future__ import annotations

import logging
import math
from collections import OrderedDict
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from croplink.errors import InfeasibleDayError
from croplink.height import ClientSite, MastConstraints, compare_fixed, optimal_height_single
from croplink.propagation import ModelParams

log = logging.getLogger(__name__)

POLICIES = ("paper", "full-cover")
D_MIN = 1.0
D_MAX = 10_000.0


@dataclass(frozen=True)
class FarmExtent:
    width: float
    height: float

    def __post_init__(self):
        if not (self.width > 0 and self.height > 0):
            raise ValueError("farm width and height must be > 0")

    def contains(self, x: float, y: float) -> bool:
        return 0 <= x <= self.width and 0 <= y <= self.height


# -- coverage radius ------------------------------------------------------------

def achievable_rsrp(params: ModelParams, d: float, h_c: float, mast: MastConstraints) -> float:
    """Predicted RSRP at distance ``d`` with the mast at its best height."""
    return optimal_height_single(params, ClientSite(d, h_c), mast).predicted_rsrp


def coverage_radius(
    params: ModelParams,
    h_c: float,
    mast: MastConstraints,
    rsrp_threshold: float,
    d_min: float = D_MIN,
    d_max: float = D_MAX,
    scan_points: int = 64,
    tol: float = 0.01,
) -> float:
    """Largest distance in [d_min, d_max] whose best-height RSRP meets the threshold.

    A log-spaced scan locates the last satisfying point, then bisection narrows
    the crossing to ``tol`` meters. Returns 0 if even ``d_min`` falls short and
    ``d_max`` if the whole range is covered.
    """
    ds = np.geomspace(d_min, d_max, scan_points)
    f = lambda d: achievable_rsrp(params, float(d), h_c, mast)
    vals = np.array([f(d) for d in ds])
    if np.any(np.diff(vals) > 0):
        log.debug("achievable RSRP not monotone in distance for h_c=%s; using last crossing", h_c)
    ok = np.nonzero(vals >= rsrp_threshold)[0]
    if ok.size == 0:
        return 0.0
    i = int(ok[-1])
    if i == len(ds) - 1:
        return float(d_max)
    lo, hi = float(ds[i]), float(ds[i + 1])
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if f(mid) >= rsrp_threshold:
            lo = mid
        else:
            hi = mid
    return lo


# -- static grid ------------------------------------------------------------

@dataclass
class SitePlan:
    count: int
    positions: list
    spacing: float


def static_site_count(farm: FarmExtent, radius: float, spacing_policy: str = "paper") -> SitePlan:
    """Square grid of fixed sites covering the farm.

    ``paper`` spaces sites two radii apart (leaves gaps at cell corners);
    ``full-cover`` uses radius*sqrt(2) so every point is within one radius.
    Sites sit at the centers of ``ceil(W/s) x ceil(H/s)`` equal cells.
    """
    if radius <= 0:
        raise ValueError("radius must be > 0")
    if spacing_policy == "paper":
        s = 2.0 * radius
    elif spacing_policy == "full-cover":
        s = radius * math.sqrt(2.0)
    else:
        raise ValueError(f"unknown spacing policy {spacing_policy!r}; choose from {POLICIES}")
    nx = math.ceil(farm.width / s)
    ny = math.ceil(farm.height / s)
    cw, ch = farm.width / nx, farm.height / ny
    positions = [((i + 0.5) * cw, (j + 0.5) * ch) for j in range(ny) for i in range(nx)]
    return SitePlan(count=nx * ny, positions=positions, spacing=s)


# -- mobile gateway ---------------------------------------------------------

class ScheduleEntry(NamedTuple):
    day: int
    center_x: float
    center_y: float
    gateway_x: float
    gateway_y: float


@dataclass
class MobilityPlan:
    schedule: list
    sites_static: int
    sites_mobile: int = 1
    radius: float = 0.0

    def to_dict(self) -> dict:
        r6 = lambda v: float(f"{v:.6g}")
        return {
            "sites_static": self.sites_static,
            "sites_mobile": self.sites_mobile,
            "radius_m": r6(self.radius),
            "schedule": [
                {"day": e.day, "work_x_m": r6(e.center_x), "work_y_m": r6(e.center_y),
                 "gateway_x_m": r6(e.gateway_x), "gateway_y_m": r6(e.gateway_y)}
                for e in self.schedule
            ],
        }


def _nearest_edge_point(farm: FarmExtent, x: float, y: float):
    candidates = [(0.0, y), (farm.width, y), (x, 0.0), (x, farm.height)]
    return min(candidates, key=lambda p: math.hypot(p[0] - x, p[1] - y))


def mobile_plan(
    farm: FarmExtent,
    work_areas: Sequence[tuple],
    radius: float,
    edge_only: bool = False,
    spacing_policy: str = "paper",
) -> MobilityPlan:
    """One gateway position per day serving that day's work area(s).

    Several areas on the same day share a gateway at their centroid. With
    ``edge_only`` the gateway moves to the nearest point on the farm boundary.

    Raises:
        ValueError: a work area lies outside the farm.
        InfeasibleDayError: some area of a day is farther than ``radius`` from its gateway.
    """
    if radius <= 0:
        raise ValueError("radius must be > 0")
    by_day = OrderedDict()
    for day, x, y in sorted(work_areas, key=lambda a: a[0]):
        if not farm.contains(x, y):
            raise ValueError(f"work area ({x}, {y}) on day {day} lies outside the farm")
        by_day.setdefault(int(day), []).append((float(x), float(y)))

    schedule = []
    for day, areas in by_day.items():
        cx = sum(a[0] for a in areas) / len(areas)
        cy = sum(a[1] for a in areas) / len(areas)
        gx, gy = _nearest_edge_point(farm, cx, cy) if edge_only else (cx, cy)
        for ax, ay in areas:
            if math.hypot(ax - gx, ay - gy) > radius:
                raise InfeasibleDayError(
                    f"day {day}: work area ({ax:g}, {ay:g}) is beyond {radius:g} m of the gateway"
                )
        schedule.append(ScheduleEntry(day, cx, cy, gx, gy))
    static = static_site_count(farm, radius, spacing_policy).count
    return MobilityPlan(schedule=schedule, sites_static=static, sites_mobile=1, radius=radius)


# -- field comparison -------------------------------------------------------

@dataclass(frozen=True)
class FieldSpec:
    """Rectangular subfield sampled at ``nx x ny`` cell centers, base station at (bs_x, bs_y)."""

    x_min: float
    x_max: float
    y_min: float
    y_max: float
    nx: int = 20
    ny: int = 20
    bs_x: float = 0.0
    bs_y: float = 0.0

    def __post_init__(self):
        if self.nx < 2 or self.ny < 2:
            raise ValueError("field grid must be at least 2 x 2")
        if not (self.x_max > self.x_min and self.y_max > self.y_min):
            raise ValueError("empty field extent")

    def points(self) -> list:
        """Cell centers in row-major order (y outer, x inner)."""
        dx = (self.x_max - self.x_min) / self.nx
        dy = (self.y_max - self.y_min) / self.ny
        return [
            (self.x_min + (i + 0.5) * dx, self.y_min + (j + 0.5) * dy)
            for j in range(self.ny)
            for i in range(self.nx)
        ]


class GridPoint(NamedTuple):
    x: float
    y: float
    rsrp_fixed: float
    rsrp_variable: float
    delta: float
    h_star: float


@dataclass
class CoverageReport:
    grid: list
    cdf_fixed: list
    cdf_variable: list
    median_gain: float
    mean_gain: float
    p90_gain: float
    fixed_h: float = 0.0

    def to_csv(self) -> str:
        rows = ["x_m,y_m,rsrp_fixed_dbm,rsrp_variable_dbm,delta_db,h_star_m"]
        rows += [",".join(f"{v:.6g}" for v in p) for p in self.grid]
        return "\n".join(rows) + "\n"

    def to_dict(self) -> dict:
        r6 = lambda v: float(f"{v:.6g}")
        return {
            "fixed_height_m": r6(self.fixed_h),
            "points": len(self.grid),
            "median_gain_db": r6(self.median_gain),
            "mean_gain_db": r6(self.mean_gain),
            "p90_gain_db": r6(self.p90_gain),
            "median_fixed_dbm": r6(float(np.median(self.cdf_fixed))),
            "median_variable_dbm": r6(float(np.median(self.cdf_variable))),
            "cdf_fixed_dbm": [r6(v) for v in self.cdf_fixed],
            "cdf_variable_dbm": [r6(v) for v in self.cdf_variable],
        }


def field_comparison(
    params: ModelParams,
    spec: FieldSpec,
    h_c: float,
    fixed_h: float,
    mast: MastConstraints,
) -> CoverageReport:
    """Per-point RSRP at ``fixed_h`` versus the optimized height, with gain statistics."""
    if not mast.contains(fixed_h):
        raise ValueError(f"fixed height {fixed_h} outside mast range [{mast.h_min}, {mast.h_max}]")
    grid = []
    for x, y in spec.points():
        d = math.hypot(x - spec.bs_x, y - spec.bs_y)
        decision, fixed_v, gain = compare_fixed(params, [ClientSite(d, h_c)], fixed_h, mast)
        grid.append(GridPoint(x, y, fixed_v, decision.predicted_rsrp, gain, decision.h_star))
    deltas = np.array([p.delta for p in grid])
    return CoverageReport(
        grid=grid,
        cdf_fixed=sorted(p.rsrp_fixed for p in grid),
        cdf_variable=sorted(p.rsrp_variable for p in grid),
        median_gain=float(np.median(deltas)),
        mean_gain=float(np.mean(deltas)),
        p90_gain=float(np.percentile(deltas, 90)),
        fixed_h=fixed_h,
    )
