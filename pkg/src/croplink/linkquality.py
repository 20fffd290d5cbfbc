"""RSRP to throughput mapping and teleoperation capacity."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from croplink.coverage import coverage_radius
from croplink.errors import CurveError, UnknownResolutionError
from croplink.height import MastConstraints
from croplink.propagation import ModelParams

CURVE_HEADER = ("rsrp_dbm", "downlink_mbps", "uplink_mbps")
STREAM_HEADER = ("resolution", "compression_pct", "bitrate_mbps")
DEFAULT_HEADROOM = 0.9


@dataclass(frozen=True)
class LinkQualityCurve:
    """Piecewise-linear throughput curve; knots are (rsrp dBm, downlink Mbps, uplink Mbps)."""

    knots: tuple
    source: str = ""

    def __post_init__(self):
        knots = tuple(tuple(float(v) for v in k) for k in self.knots)
        object.__setattr__(self, "knots", knots)
        if not knots:
            raise CurveError("empty link-quality curve")
        if any(len(k) != 3 for k in knots):
            raise CurveError("each knot needs rsrp, downlink and uplink")
        arr = np.array(knots)
        if not np.all(np.isfinite(arr)):
            raise CurveError("non-finite knot value")
        if np.any(np.diff(arr[:, 0]) <= 0):
            raise CurveError("knots must be strictly increasing in rsrp")
        if np.any(np.diff(arr[:, 1]) < 0) or np.any(np.diff(arr[:, 2]) < 0):
            raise CurveError("throughput must be non-decreasing in rsrp")

    def column(self, direction: str) -> np.ndarray:
        idx = {"down": 1, "up": 2}.get(direction)
        if idx is None:
            raise ValueError(f"direction must be 'up' or 'down', got {direction!r}")
        return np.array([k[idx] for k in self.knots])

    @property
    def rsrp(self) -> np.ndarray:
        return np.array([k[0] for k in self.knots])


def synthetic_default_curve() -> LinkQualityCurve:
    """Logistic stand-in saturating at 100 Mbps down / 20 Mbps up. Not measured data."""
    x = np.arange(-140.0, -39.0, 5.0)
    down = 100.0 / (1.0 + np.exp(-(x + 100.0) / 6.0))
    up = 20.0 / (1.0 + np.exp(-(x + 105.0) / 6.0))
    return LinkQualityCurve(tuple(zip(x, down, up)), source="synthetic logistic default")


def load_curve(source, label: Optional[str] = None) -> LinkQualityCurve:
    """Read a ``rsrp_dbm,downlink_mbps,uplink_mbps`` CSV (path or text)."""
    text, name = _read(source)
    rows = _rows(text, CURVE_HEADER)
    try:
        knots = [tuple(float(v) for v in row) for _, row in rows]
    except ValueError as exc:
        raise CurveError(f"non-numeric curve value: {exc}") from None
    return LinkQualityCurve(tuple(knots), source=label or name)


def _read(source):
    if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source and Path(source).is_file()):
        return Path(source).read_text(encoding="utf-8"), str(source)
    return str(source), "inline"


def _rows(text: str, header: tuple):
    reader = csv.reader(io.StringIO(text))
    first = next(reader, None)
    if first is None or tuple(h.strip().lower() for h in first) != header:
        raise CurveError(f"expected header {','.join(header)}")
    out = []
    for row in reader:
        if not row or not "".join(row).strip():
            continue
        if len(row) != len(header):
            raise CurveError(f"line {reader.line_num}: expected {len(header)} fields")
        out.append((reader.line_num, [v.strip() for v in row]))
    return out


def throughput_from_rsrp(curve: LinkQualityCurve, rsrp: float, direction: str = "down") -> float:
    """Linear interpolation between knots, clamped to the end knots."""
    return float(np.interp(rsrp, curve.rsrp, curve.column(direction)))


def rsrp_for_uplink(curve: LinkQualityCurve, min_uplink: float) -> Optional[float]:
    """Lowest RSRP at which the uplink reaches ``min_uplink``.

    Returns ``-inf`` when every RSRP qualifies and ``None`` when none does.
    """
    x, up = curve.rsrp, curve.column("up")
    if min_uplink <= up[0]:
        return -math.inf
    if min_uplink > up[-1]:
        return None
    k = int(np.argmax(up >= min_uplink))
    frac = (min_uplink - up[k - 1]) / (up[k] - up[k - 1])
    return float(x[k - 1] + frac * (x[k] - x[k - 1]))


def teleop_capacity(uplink_capacity: float, per_stream: float, headroom: float = DEFAULT_HEADROOM) -> int:
    """Number of concurrent video streams the uplink carries after reserving headroom."""
    if uplink_capacity <= 0 or per_stream <= 0:
        raise ValueError("capacity and per-stream rate must be > 0")
    if not 0 < headroom <= 1:
        raise ValueError("headroom must lie in (0, 1]")
    return int(math.floor(uplink_capacity * headroom / per_stream + 1e-9))


def teleop_range(
    params: ModelParams,
    h_c: float,
    mast: MastConstraints,
    curve: LinkQualityCurve,
    min_uplink: float,
    **radius_kwargs,
) -> float:
    """Largest distance whose best-height uplink rate meets ``min_uplink`` (0 if unreachable)."""
    threshold = rsrp_for_uplink(curve, min_uplink)
    if threshold is None:
        return 0.0
    return coverage_radius(params, h_c, mast, threshold, **radius_kwargs)


# -- stream profiles --------------------------------------------------------

@dataclass(frozen=True)
class StreamProfile:
    resolution: str
    compression: float
    bitrate: float

    def __post_init__(self):
        if not 0 <= self.compression <= 100:
            raise ValueError("compression must lie in [0, 100]")
        if not self.bitrate > 0:
            raise ValueError("bitrate must be > 0")


class StreamTable:
    """Video bitrate per resolution as a function of compression percentage."""

    def __init__(self, profiles: Sequence[StreamProfile]):
        rows = {}
        for p in profiles:
            rows.setdefault(_norm_res(p.resolution), []).append((p.compression, p.bitrate))
        self._rows = {}
        for res, pts in rows.items():
            pts.sort()
            comp = np.array([c for c, _ in pts])
            if np.any(np.diff(comp) == 0):
                raise CurveError(f"duplicate compression level for {res}")
            self._rows[res] = (comp, np.array([b for _, b in pts]))

    @property
    def resolutions(self) -> list:
        return sorted(self._rows)

    def bitrate(self, resolution: str, compression: float) -> float:
        key = _norm_res(resolution)
        if key not in self._rows:
            raise UnknownResolutionError(resolution)
        if not 0 <= compression <= 100:
            raise ValueError("compression must lie in [0, 100]")
        comp, rate = self._rows[key]
        return float(np.interp(compression, comp, rate))


def _norm_res(resolution: str) -> str:
    return resolution.strip().lower().replace("×", "x").replace(" ", "")


def load_stream_table(source) -> StreamTable:
    text, _ = _read(source)
    profiles = []
    for lineno, (res, comp, rate) in _rows(text, STREAM_HEADER):
        try:
            profiles.append(StreamProfile(res, float(comp), float(rate)))
        except ValueError as exc:
            raise CurveError(f"line {lineno}: {exc}") from None
    return StreamTable(profiles)


def stream_bitrate(table: StreamTable, resolution: str, compression: float) -> float:
    return table.bitrate(resolution, compression)
