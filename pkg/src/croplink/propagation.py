"""Received signal strength through crop canopy.

The model is a sum of three dB terms plus a lumped system gain::

    rsrp = g - 20*log10(r) - alpha*r_c + 10*log10(max(|sinc(gamma*theta)|, beta))

where ``r`` is the slant range between base-station antenna and client,
``r_c`` the part of that range inside the canopy and ``theta`` the elevation
angle. ``sinc`` is the unnormalized ``sin(x)/x`` with ``x`` in radians.

Every function here accepts scalars or numpy arrays and broadcasts. All model
evaluation (scalar or batched) funnels through :func:`model_terms` so that a
value computed for one geometry is bit-identical to the same geometry
evaluated inside a batch.
"""

from __future__ import annotations

import math
import re
from dataclasses import astuple, dataclass
from pathlib import Path
from typing import Union

import numpy as np

from croplink.errors import DomainError, GeometryError

ArrayLike = Union[float, np.ndarray]

_DB_PER_NEPER_LOG = 10.0 / math.log(10.0)
PARAM_KEYS = ("alpha", "beta", "gamma", "g")


@dataclass(frozen=True)
class ModelParams:
    """Fitted constants of the RSRP model.

    Attributes:
        alpha: crop absorption coefficient, dB per meter of in-crop path.
        beta: directivity floor of the unit-normalized pattern, in (0, 1].
        gamma: beamwidth scale multiplying the elevation angle (radians).
        g: lumped system gain, dBm.
    """

    alpha: float
    beta: float
    gamma: float
    g: float

    def __post_init__(self):
        for name in PARAM_KEYS:
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ValueError(f"{name} must be finite, got {value!r}")
        if self.alpha < 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")
        if not 0 < self.beta <= 1:
            raise ValueError(f"beta must lie in (0, 1], got {self.beta}")
        if self.gamma < 0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")

    def as_array(self) -> np.ndarray:
        return np.array(astuple(self), dtype=float)

    @classmethod
    def from_array(cls, values) -> "ModelParams":
        a, b, c, g = (float(v) for v in values)
        return cls(alpha=a, beta=b, gamma=c, g=g)

    def replace(self, **changes) -> "ModelParams":
        fields = dict(zip(PARAM_KEYS, astuple(self)))
        fields.update(changes)
        return ModelParams(**fields)


# Peak-season corn.
TABLE1_CORN = ModelParams(alpha=0.501, beta=0.185, gamma=3.741, g=-55.420)


@dataclass(frozen=True)
class LinkGeometry:
    """Horizontal distance ``d``, antenna height ``h_bs`` and canopy height ``h_c`` (meters)."""

    d: float
    h_bs: float
    h_c: float = 0.0

    def __post_init__(self):
        for name in ("d", "h_bs", "h_c"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise GeometryError(f"{name} must be finite and >= 0, got {value!r}")

    @property
    def r(self) -> float:
        return float(slant_range(self.d, self.h_bs))

    @property
    def theta(self) -> float:
        return float(elevation_angle(self.d, self.h_bs))

    @property
    def r_c(self) -> float:
        return crop_path_length(self)


@dataclass(frozen=True)
class RsrpPrediction:
    """Predicted RSRP and its additive decomposition (all dB / dBm)."""

    rsrp: float
    path_loss: float
    crop_attenuation: float
    directivity_gain: float


def slant_range(d: ArrayLike, h_bs: ArrayLike) -> ArrayLike:
    return np.hypot(d, h_bs)


def elevation_angle(d: ArrayLike, h_bs: ArrayLike) -> ArrayLike:
    """Elevation of the antenna seen from the client, in radians.

    Returns pi/2 directly above the client. Raises GeometryError when both
    distance and height are zero.
    """
    d = np.asarray(d, dtype=float)
    h = np.abs(np.asarray(h_bs, dtype=float))
    if np.any((d == 0) & (h == 0)):
        raise GeometryError("elevation angle undefined for d = 0 and h_bs = 0")
    out = np.arctan2(h, d)
    return out[()] if out.ndim == 0 else out


def _in_crop_length(r, h_bs, h_c):
    r, h_bs, h_c = np.broadcast_arrays(*(np.asarray(x, dtype=float) for x in (r, h_bs, h_c)))
    # h_bs <= h_c (antenna at or under the canopy top) puts the whole path in crops.
    below = h_bs <= h_c
    safe_h = np.where(below, 1.0, h_bs)
    r_c = np.where(below, r, h_c / safe_h * r)
    r_c = np.where(h_c == 0, 0.0, r_c)
    return r_c[()] if r_c.ndim == 0 else r_c


def crop_path_length(geometry: LinkGeometry) -> float:
    """Length of the direct path that lies inside the canopy, clamped to the slant range."""
    return float(_in_crop_length(geometry.r, geometry.h_bs, geometry.h_c))


def path_loss(r: ArrayLike) -> ArrayLike:
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise DomainError("path loss needs r > 0")
    out = -20.0 * np.log10(r)
    return out[()] if out.ndim == 0 else out


def crop_attenuation(alpha: ArrayLike, r_c: ArrayLike) -> ArrayLike:
    out = -np.asarray(alpha, dtype=float) * np.asarray(r_c, dtype=float)
    return out[()] if out.ndim == 0 else out


def sinc(x: ArrayLike) -> ArrayLike:
    """Unnormalized sinc, ``sin(x)/x`` with ``sinc(0) = 1``."""
    return np.sinc(np.asarray(x, dtype=float) / np.pi)


def _sinc_prime(x):
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1e-4
    xs = np.where(small, 1.0, x)
    exact = (xs * np.cos(xs) - np.sin(xs)) / (xs * xs)
    return np.where(small, -x / 3.0 + x**3 / 30.0, exact)


def directivity_gain(gamma: ArrayLike, beta: ArrayLike, theta: ArrayLike) -> ArrayLike:
    """Capped |sinc| elevation pattern in dB; lies in [10*log10(beta), 0]."""
    pattern = np.maximum(np.abs(sinc(np.asarray(gamma) * np.asarray(theta))), beta)
    out = 10.0 * np.log10(pattern)
    return out[()] if np.ndim(out) == 0 else out


def model_terms(alpha, beta, gamma, d, h_bs, h_c):
    """Batched model evaluation.

    Returns ``(path_loss, crop_attenuation, directivity_gain)`` arrays
    broadcast over the inputs. Raises DomainError if any slant range is zero.
    """
    d = np.asarray(d, dtype=float)
    h_bs = np.asarray(h_bs, dtype=float)
    r = slant_range(d, h_bs)
    if np.any(r <= 0):
        raise DomainError("prediction needs a nonzero slant range")
    theta = np.arctan2(np.abs(h_bs), d)
    r_c = _in_crop_length(r, h_bs, h_c)
    return path_loss(r), crop_attenuation(alpha, r_c), directivity_gain(gamma, beta, theta)


def predict_array(params: ModelParams, d, h_bs, h_c) -> np.ndarray:
    """Predicted RSRP (dBm) for arrays of geometry components."""
    pl, ca, dg = model_terms(params.alpha, params.beta, params.gamma, d, h_bs, h_c)
    return params.g + pl + ca + dg


def predict_rsrp(params: ModelParams, geometry: LinkGeometry) -> RsrpPrediction:
    pl, ca, dg = model_terms(
        params.alpha, params.beta, params.gamma,
        np.array([geometry.d]), np.array([geometry.h_bs]), np.array([geometry.h_c]),
    )
    pl, ca, dg = float(pl[0]), float(ca[0]), float(dg[0])
    return RsrpPrediction(
        rsrp=params.g + pl + ca + dg,
        path_loss=pl,
        crop_attenuation=ca,
        directivity_gain=dg,
    )


def gradient_array(params: ModelParams, d, h_bs, h_c) -> np.ndarray:
    """Partial derivatives of predicted RSRP, shape ``(n, 4)`` in (alpha, beta, gamma, g) order.

    At the cap crossover and at sinc zeros the cap-active branch is used
    (zero derivative in gamma).
    """
    d = np.atleast_1d(np.asarray(d, dtype=float))
    h_bs = np.atleast_1d(np.asarray(h_bs, dtype=float))
    d, h_bs, h_c = np.broadcast_arrays(d, h_bs, np.asarray(h_c, dtype=float))
    r = slant_range(d, h_bs)
    if np.any(r <= 0):
        raise DomainError("gradient needs a nonzero slant range")
    theta = np.arctan2(np.abs(h_bs), d)
    x = params.gamma * theta
    s = sinc(x)
    cap = np.abs(s) <= params.beta
    s_safe = np.where(cap, 1.0, s)

    out = np.empty(d.shape + (4,))
    out[..., 0] = -_in_crop_length(r, h_bs, h_c)
    out[..., 1] = np.where(cap, _DB_PER_NEPER_LOG / params.beta, 0.0)
    out[..., 2] = np.where(cap, 0.0, _DB_PER_NEPER_LOG * _sinc_prime(x) * theta / s_safe)
    out[..., 3] = 1.0
    return out


def rsrp_param_gradient(params: ModelParams, geometry: LinkGeometry) -> np.ndarray:
    """Gradient of predicted RSRP with respect to (alpha, beta, gamma, g)."""
    return gradient_array(params, geometry.d, geometry.h_bs, geometry.h_c)[0]


# -- params file ------------------------------------------------------------

_LINE = re.compile(r"^\s*([A-Za-z_]\w*)\s*[=:]\s*(\S+)\s*$")


def _fmt(value: float) -> str:
    return np.format_float_positional(value, unique=True, trim="0")


def dumps_params(params: ModelParams, header: str | None = None) -> str:
    lines = [f"# {line}" for line in header.splitlines()] if header else []
    lines += [f"{key} = {_fmt(getattr(params, key))}" for key in PARAM_KEYS]
    return "\n".join(lines) + "\n"


def loads_params(text: str) -> ModelParams:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0]
        if not line.strip():
            continue
        m = _LINE.match(line)
        if m is None:
            raise ValueError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = m.group(1).lower(), m.group(2)
        if key not in PARAM_KEYS:
            raise ValueError(f"line {lineno}: unknown key {key!r}")
        try:
            values[key] = float(value)
        except ValueError:
            raise ValueError(f"line {lineno}: {key} is not a number: {value!r}") from None
    missing = [k for k in PARAM_KEYS if k not in values]
    if missing:
        raise ValueError(f"params file missing keys: {', '.join(missing)}")
    return ModelParams(**values)


def load_params(path) -> ModelParams:
    return loads_params(Path(path).read_text(encoding="utf-8"))


def save_params(params: ModelParams, path, header: str | None = None) -> None:
    Path(path).write_text(dumps_params(params, header), encoding="utf-8")
