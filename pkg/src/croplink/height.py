"""Mast-height selection for one or many under-canopy clients."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from croplink.errors import EmptyDatasetError
from croplink.propagation import ModelParams, predict_array

INV_PHI = (math.sqrt(5) - 1) / 2
REFINE_TOL = 1e-5
OBJECTIVES = ("mean", "min", "linear")


@dataclass(frozen=True)
class MastConstraints:
    """Allowed antenna heights [h_min, h_max] and the coarse search step, meters."""

    h_min: float = 1.0
    h_max: float = 30.0
    coarse_step: float = 0.25

    def __post_init__(self):
        if not 0 <= self.h_min < self.h_max:
            raise ValueError(f"need 0 <= h_min < h_max, got [{self.h_min}, {self.h_max}]")
        if not 0 < self.coarse_step <= self.h_max - self.h_min:
            raise ValueError(f"coarse_step must lie in (0, {self.h_max - self.h_min}]")

    def contains(self, h: float) -> bool:
        return self.h_min <= h <= self.h_max

    def grid(self) -> np.ndarray:
        """h_min, h_min + step, ... with the final point clamped to h_max."""
        span = self.h_max - self.h_min
        n = int(math.floor(span / self.coarse_step + 1e-9))
        pts = self.h_min + np.arange(n + 1) * self.coarse_step
        pts[-1] = min(pts[-1], self.h_max)
        if pts[-1] < self.h_max:
            pts = np.append(pts, self.h_max)
        return pts


@dataclass(frozen=True)
class ClientSite:
    d: float
    h_c: float = 0.0
    weight: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.d) and self.d > 0):
            raise ValueError(f"client distance must be > 0, got {self.d!r}")
        if not (math.isfinite(self.h_c) and self.h_c >= 0):
            raise ValueError(f"client crop height must be >= 0, got {self.h_c!r}")
        if not (math.isfinite(self.weight) and self.weight >= 0):
            raise ValueError(f"client weight must be >= 0, got {self.weight!r}")


@dataclass
class HeightDecision:
    h_star: float
    predicted_rsrp: float
    profile: list

    def profile_csv(self) -> str:
        rows = ["height_m,objective_dbm"]
        rows += [f"{h:.6g},{v:.6g}" for h, v in self.profile]
        return "\n".join(rows) + "\n"


def objective(params: ModelParams, clients: Sequence[ClientSite], heights, kind: str = "mean") -> np.ndarray:
    """Aggregate predicted RSRP over clients for each candidate height.

    ``mean`` is the weight-normalized mean in dBm, ``min`` the worst positive-weight
    client, ``linear`` the weighted mean received power expressed in dBm.
    """
    if not clients:
        raise EmptyDatasetError("no clients")
    if kind not in OBJECTIVES:
        raise ValueError(f"unknown objective {kind!r}; choose from {OBJECTIVES}")
    heights = np.atleast_1d(np.asarray(heights, dtype=float))
    d = np.array([c.d for c in clients])[:, None]
    hc = np.array([c.h_c for c in clients])[:, None]
    w = np.array([c.weight for c in clients])[:, None]
    if not np.any(w > 0):
        raise ValueError("at least one client needs a positive weight")
    per_client = predict_array(params, d, heights[None, :], hc)
    if kind == "min":
        return np.min(per_client[w[:, 0] > 0], axis=0)
    if kind == "linear":
        mw = np.sum(w * 10.0 ** (per_client / 10.0), axis=0) / np.sum(w)
        return 10.0 * np.log10(mw)
    return np.sum(w * per_client, axis=0) / np.sum(w)


def _golden_max(f, a: float, b: float, tol: float = REFINE_TOL):
    """Golden-section maximization; returns the final bracket and its interior points."""
    c = b - INV_PHI * (b - a)
    e = a + INV_PHI * (b - a)
    fc, fe = f(c), f(e)
    while b - a > tol:
        if fc >= fe:
            b, e, fe = e, c, fc
            c = b - INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, e, fe
            e = a + INV_PHI * (b - a)
            fe = f(e)
    return [a, c, e, b]


def _search(params, clients, mast: MastConstraints, kind: str, extra: Iterable[float] = ()):
    grid = mast.grid()
    coarse = objective(params, clients, grid, kind)
    b = int(np.argmax(coarse))
    lo = max(mast.h_min, grid[b] - mast.coarse_step)
    hi = min(mast.h_max, grid[b] + mast.coarse_step)
    f = lambda h: float(objective(params, clients, [h], kind)[0])
    refined = _golden_max(f, lo, hi)

    # Score every candidate in one batch so comparisons are between identically computed values.
    cand = np.unique(np.concatenate([grid, refined, np.asarray(list(extra), dtype=float)]))
    values = objective(params, clients, cand, kind)
    best = int(np.argmax(values))  # first maximum = lowest height on exact ties
    lookup = dict(zip(cand.tolist(), values.tolist()))
    profile = [(float(h), lookup[float(h)]) for h in grid]
    return float(cand[best]), float(values[best]), profile, lookup


def height_profile(params: ModelParams, client: ClientSite, mast: MastConstraints) -> list:
    """(height, predicted RSRP) over the coarse mast grid."""
    grid = mast.grid()
    values = objective(params, [client], grid)
    return list(zip(grid.tolist(), values.tolist()))


def optimal_height_multi(
    params: ModelParams,
    clients: Sequence[ClientSite],
    mast: MastConstraints,
    kind: str = "mean",
) -> HeightDecision:
    """Height maximizing the aggregate objective: coarse grid, then golden-section refinement
    within one step of the best grid point."""
    if not clients:
        raise EmptyDatasetError("no clients")
    h, v, profile, _ = _search(params, clients, mast, kind)
    return HeightDecision(h_star=h, predicted_rsrp=v, profile=profile)


def optimal_height_single(params: ModelParams, client: ClientSite, mast: MastConstraints) -> HeightDecision:
    return optimal_height_multi(params, [client], mast)


def gain_vs_fixed(
    params: ModelParams,
    clients: Sequence[ClientSite],
    fixed_h: float,
    mast: MastConstraints,
    kind: str = "mean",
) -> float:
    """Objective improvement (dB) of the optimized height over ``fixed_h``; never negative."""
    return compare_fixed(params, clients, fixed_h, mast, kind)[2]


def compare_fixed(params, clients, fixed_h, mast: MastConstraints, kind: str = "mean"):
    """Return ``(decision, objective_at_fixed_h, gain)``.

    ``fixed_h`` joins the candidate set, so the gain is exactly non-negative.
    """
    if not clients:
        raise EmptyDatasetError("no clients")
    if not mast.contains(fixed_h):
        raise ValueError(f"fixed height {fixed_h} outside mast range [{mast.h_min}, {mast.h_max}]")
    h, v, profile, lookup = _search(params, clients, mast, kind, extra=[fixed_h])
    fixed_v = lookup[float(fixed_h)]
    return HeightDecision(h, v, profile), fixed_v, v - fixed_v
