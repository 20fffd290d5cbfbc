"""Estimate model parameters from RSRP measurements.

The fit is a bound-constrained nonlinear least-squares problem solved with a
Levenberg-Marquardt trust-region iteration. Variables sitting on a bound with
the gradient pushing outward are frozen for the step; the remaining step is
projected back into the box, so every iterate is feasible.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from croplink.errors import DegenerateDatasetError, DomainError, EmptyDatasetError
from croplink.propagation import (
    PARAM_KEYS,
    LinkGeometry,
    ModelParams,
    gradient_array,
    model_terms,
    predict_array,
)

log = logging.getLogger(__name__)

BETA_MIN = 1e-6
LOWER = np.array([0.0, BETA_MIN, 0.0, -np.inf])
UPPER = np.array([np.inf, 1.0, np.inf, np.inf])
RSRP_TYPICAL = (-140.0, -40.0)
MIN_SAMPLES = 8


@dataclass(frozen=True)
class MeasurementSample:
    """One observed RSRP value at a known geometry."""

    geometry: LinkGeometry
    rsrp: float
    timestamp: Optional[float] = None
    position: Optional[tuple] = None

    def __post_init__(self):
        if not math.isfinite(self.rsrp):
            raise ValueError(f"rsrp must be finite, got {self.rsrp!r}")

    @property
    def flagged(self) -> bool:
        """True when the RSRP lies outside the typical receiver range."""
        lo, hi = RSRP_TYPICAL
        return not lo <= self.rsrp <= hi


@dataclass
class FitResult:
    params: ModelParams
    rmse: float
    median_abs_error: float
    iterations: int
    converged: bool
    active_bounds: tuple
    cost: float = 0.0
    cost_trace: list = field(default_factory=list)

    def report(self) -> dict:
        """Plain-data view for the fit report, numbers at 6 significant digits."""
        r6 = lambda v: float(f"{v:.6g}")
        return {
            "params": {k: r6(getattr(self.params, k)) for k in PARAM_KEYS},
            "rmse": r6(self.rmse),
            "median_abs_error": r6(self.median_abs_error),
            "iterations": self.iterations,
            "converged": self.converged,
            "active_bounds": list(self.active_bounds),
            "cost": r6(self.cost),
            "cost_trace": [r6(c) for c in self.cost_trace],
        }


def _columns(samples: Sequence[MeasurementSample]):
    if len(samples) == 0:
        raise EmptyDatasetError("no samples")
    d = np.array([s.geometry.d for s in samples], dtype=float)
    h = np.array([s.geometry.h_bs for s in samples], dtype=float)
    hc = np.array([s.geometry.h_c for s in samples], dtype=float)
    obs = np.array([s.rsrp for s in samples], dtype=float)
    if np.any(np.hypot(d, h) <= 0):
        raise DomainError("sample with zero slant range")
    return d, h, hc, obs


def residuals(params: ModelParams, samples: Sequence[MeasurementSample]) -> np.ndarray:
    """Observed minus predicted RSRP for every sample."""
    d, h, hc, obs = _columns(samples)
    return obs - predict_array(params, d, h, hc)


def jacobian(params: ModelParams, samples, method: str = "analytic") -> np.ndarray:
    """Jacobian of :func:`residuals`, shape ``(n, 4)``.

    ``method="fd"`` uses central differences with a relative step of 1e-6.
    """
    d, h, hc, obs = _columns(samples)
    if method == "analytic":
        return -gradient_array(params, d, h, hc)
    if method == "fd":
        return _fd_jacobian(lambda x: obs - _predict_vec(x, d, h, hc), params.as_array())
    raise ValueError(f"unknown jacobian method {method!r}")


def goodness(params: ModelParams, samples) -> dict:
    res = residuals(params, samples)
    return _metrics(res)


def _metrics(res: np.ndarray) -> dict:
    a = np.abs(res)
    return {
        "rmse": float(np.sqrt(np.mean(res * res))),
        "median_abs_error": float(np.median(a)),
        "max_abs_error": float(np.max(a)),
    }


def _predict_vec(x, d, h, hc):
    # No invariant checks here: the solver keeps x inside the box itself.
    a, b, c, g = x
    pl, ca, dg = model_terms(a, b, c, d, h, hc)
    return g + pl + ca + dg


def _fd_jacobian(fun, x, rel_step=1e-6):
    cols = []
    for i in range(x.size):
        step = rel_step * max(1.0, abs(x[i]))
        xp, xm = x.copy(), x.copy()
        xp[i] += step
        xm[i] -= step
        cols.append((fun(xp) - fun(xm)) / (2 * step))
    return np.column_stack(cols)


@dataclass
class _SolveState:
    x: np.ndarray
    cost: float
    iterations: int
    converged: bool
    trace: list


def _solve(fun, jac, x0, lower, upper, max_iter, tol) -> _SolveState:
    x = np.clip(x0, lower, upper)
    r = fun(x)
    cost = 0.5 * float(r @ r)
    trace = [cost]
    J = jac(x)
    scale = np.maximum(np.linalg.norm(J, axis=0), 1e-12)
    lam = 1e-3
    nu = 2.0
    converged = False
    it = 0
    while it < max_iter:
        it += 1
        if cost == 0.0:
            converged = True
            break
        g = J.T @ r
        free = ~(((x <= lower) & (g > 0)) | ((x >= upper) & (g < 0)))
        JtJ = J.T @ J
        accepted = False
        while not accepted:
            A = JtJ[np.ix_(free, free)] + lam * np.diag(scale[free] ** 2)
            p = np.zeros_like(x)
            try:
                p[free] = np.linalg.solve(A, -g[free])
            except np.linalg.LinAlgError:
                p[free] = np.linalg.lstsq(A, -g[free], rcond=None)[0]
            x_new = np.clip(x + p, lower, upper)
            s = x_new - x
            Js = J @ s
            predicted = -(float(g @ s) + 0.5 * float(Js @ Js))
            if not np.any(s):
                predicted = 0.0
            r_new = fun(x_new) if predicted > 0 else r
            cost_new = 0.5 * float(r_new @ r_new)
            actual = cost - cost_new
            rho = actual / predicted if predicted > 0 else -1.0
            if rho > 1e-4 and actual > 0:
                accepted = True
                lam *= max(1.0 / 3.0, 1.0 - (2.0 * rho - 1.0) ** 3)
                nu = 2.0
            else:
                lam *= nu
                nu *= 2.0
                if lam > 1e16:
                    # No representable decrease left: stationary to working precision.
                    converged = True
                    break
        if not accepted:
            break
        small_decrease = actual <= tol * cost
        small_step = np.linalg.norm(scale * s) <= tol * (tol + np.linalg.norm(scale * x))
        x, r, cost = x_new, r_new, cost_new
        trace.append(cost)
        if small_decrease and small_step:
            converged = True
            break
        J = jac(x)
        scale = np.maximum(scale, np.linalg.norm(J, axis=0))
    return _SolveState(x=x, cost=cost, iterations=it, converged=converged, trace=trace)


def default_initial(samples) -> ModelParams:
    """Mid-range starting point with the gain seeded from the strongest sample."""
    d, h, hc, obs = _columns(samples)
    g0 = float(np.max(obs) + 20.0 * np.log10(np.min(np.hypot(d, h))))
    return ModelParams(alpha=0.1, beta=0.5, gamma=1.0, g=g0)


def _jittered_starts(x0: np.ndarray, k: int, seed: int) -> list:
    rng = np.random.Generator(np.random.PCG64(seed))
    starts = [x0]
    for _ in range(k - 1):
        z = rng.standard_normal(4)
        x = x0.copy()
        x[0] = max(x0[0], 0.01) * math.exp(0.5 * z[0])
        x[1] = min(max(x0[1] * math.exp(0.5 * z[1]), 1e-3), 1.0)
        x[2] = max(x0[2], 0.1) * math.exp(0.5 * z[2])
        x[3] = x0[3] + 3.0 * z[3]
        starts.append(x)
    return starts


def fit(
    samples: Sequence[MeasurementSample],
    initial: Optional[ModelParams] = None,
    max_iter: int = 200,
    tol: float = 1e-8,
    starts: int = 5,
    seed: int = 0,
    jacobian_method: str = "analytic",
) -> FitResult:
    """Least-squares fit of alpha, beta, gamma (bounded) and g (free).

    ``starts`` > 1 adds deterministic jittered restarts around ``initial``;
    the lowest-cost solution wins. Non-convergence is reported through
    ``FitResult.converged`` with the best parameters found.

    Raises:
        EmptyDatasetError: no samples.
        DegenerateDatasetError: fewer than 8 samples or a single geometry.
    """
    d, h, hc, obs = _columns(samples)
    if len(samples) < MIN_SAMPLES:
        raise DegenerateDatasetError(
            f"degenerate dataset: {len(samples)} samples, need at least {MIN_SAMPLES}"
        )
    if len(set(zip(d.tolist(), h.tolist(), hc.tolist()))) < 2:
        raise DegenerateDatasetError("degenerate dataset: all samples share one geometry")

    if initial is None:
        initial = default_initial(samples)
    fun = lambda x: obs - _predict_vec(x, d, h, hc)
    if jacobian_method == "analytic":
        jac = lambda x: -gradient_array(ModelParams.from_array(x), d, h, hc)
    elif jacobian_method == "fd":
        jac = lambda x: _fd_jacobian(fun, x)
    else:
        raise ValueError(f"unknown jacobian method {jacobian_method!r}")

    best = None
    for i, x0 in enumerate(_jittered_starts(initial.as_array(), max(1, starts), seed)):
        state = _solve(fun, jac, x0, LOWER, UPPER, max_iter, tol)
        log.debug("start %d: cost=%.6g iterations=%d converged=%s", i, state.cost, state.iterations, state.converged)
        if best is None or state.cost < best.cost:
            best = state

    params = ModelParams.from_array(best.x)
    metrics = _metrics(fun(best.x))
    at_bound = (best.x <= LOWER) | (best.x >= UPPER)
    active = tuple(k for k, hit in zip(PARAM_KEYS[:3], at_bound[:3]) if hit)
    return FitResult(
        params=params,
        rmse=metrics["rmse"],
        median_abs_error=metrics["median_abs_error"],
        iterations=best.iterations,
        converged=best.converged,
        active_bounds=active,
        cost=best.cost,
        cost_trace=best.trace,
    )
