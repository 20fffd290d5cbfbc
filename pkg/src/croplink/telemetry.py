"""Flight-log ingestion, field interpolation and synthetic measurement data."""

from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import dataclass, field
from typing import Iterable, Sequence, Union

import numpy as np
from scipy.interpolate import LinearNDInterpolator
from scipy.spatial import QhullError

from croplink.calibration import MeasurementSample, RSRP_TYPICAL
from croplink.errors import InsufficientSamplesError, MalformedLogError
from croplink.propagation import LinkGeometry, ModelParams, predict_array

FLIGHT_LOG_HEADER = ("timestamp", "lat", "lon", "alt_m", "rsrp_dbm")
_FIELD_NAMES = ("timestamp", "lat", "lon", "altitude", "rsrp")
EARTH_RADIUS_M = 6371008.8
RNG_ALGORITHM = "PCG64"
CAPTURE_RATE_HZ = 2.0


@dataclass(frozen=True)
class FlightLogRecord:
    timestamp: float
    lat: float
    lon: float
    altitude: float
    rsrp: float


@dataclass
class ParseResult:
    """Parsed records plus per-line rejection reasons (1-based line numbers)."""

    records: list
    rejections: list = field(default_factory=list)
    flagged: list = field(default_factory=list)


def _text_lines(source) -> Iterable[str]:
    if isinstance(source, bytes):
        return io.StringIO(source.decode("utf-8-sig"), newline="")
    if isinstance(source, str):
        return io.StringIO(source, newline="")
    if isinstance(source, os.PathLike):
        return open(source, encoding="utf-8-sig", newline="")
    if isinstance(source, io.TextIOBase):
        return source
    return io.TextIOWrapper(source, encoding="utf-8-sig", newline="")


def _check_record(values):
    """Return (record, None) or (None, reason)."""
    nums = []
    for name, raw in zip(_FIELD_NAMES, values):
        raw = raw.strip()
        if raw == "":
            return None, f"missing {name}"
        try:
            v = float(raw)
        except ValueError:
            return None, f"non-numeric {name}"
        if not math.isfinite(v):
            return None, f"non-finite {name}"
        nums.append(v)
    t, lat, lon, alt, rsrp = nums
    if not -90 <= lat <= 90:
        return None, "lat out of range"
    if not -180 <= lon <= 180:
        return None, "lon out of range"
    if alt < 0:
        return None, "altitude out of range"
    return FlightLogRecord(t, lat, lon, alt, rsrp), None


def parse_flight_log(source) -> ParseResult:
    """Parse a ``timestamp,lat,lon,alt_m,rsrp_dbm`` CSV log.

    ``source`` may be bytes, text, a path-like or an open file. Rows with
    missing, non-numeric, non-finite or out-of-range fields are skipped and
    listed in ``rejections``; RSRP outside the typical receiver range is kept
    but its line number goes to ``flagged``.

    Raises:
        MalformedLogError: the file is empty or the header does not match.
    """
    stream = _text_lines(source)
    reader = csv.reader(stream)
    try:
        header = next(reader, None)
        if header is None:
            raise MalformedLogError("empty flight log")
        if tuple(h.lower() for h in header) != FLIGHT_LOG_HEADER:
            raise MalformedLogError(
                f"line 1: malformed header {','.join(header)!r}, "
                f"expected {','.join(FLIGHT_LOG_HEADER)!r}"
            )
        result = ParseResult(records=[])
        lo, hi = RSRP_TYPICAL
        for row in reader:
            lineno = reader.line_num
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != len(FLIGHT_LOG_HEADER):
                result.rejections.append((lineno, "wrong field count"))
                continue
            record, reason = _check_record(row)
            if record is None:
                result.rejections.append((lineno, reason))
                continue
            result.records.append(record)
            if not lo <= record.rsrp <= hi:
                result.flagged.append(lineno)
    finally:
        if isinstance(source, os.PathLike):
            stream.close()
    return result


def format_flight_log(records: Iterable[FlightLogRecord]) -> str:
    """CSV text that parses back to identical records."""
    out = io.StringIO(newline="")
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(FLIGHT_LOG_HEADER)
    for r in records:
        writer.writerow([repr(float(v)) for v in (r.timestamp, r.lat, r.lon, r.altitude, r.rsrp)])
    return out.getvalue()


# -- projection -------------------------------------------------------------

def project(lat, lon, ref_lat, ref_lon):
    """Equirectangular (east, north) offsets in meters from a reference point."""
    k = math.radians(1.0) * EARTH_RADIUS_M
    x = (np.asarray(lon) - ref_lon) * k * math.cos(math.radians(ref_lat))
    y = (np.asarray(lat) - ref_lat) * k
    return x, y


def unproject(x, y, ref_lat, ref_lon):
    k = math.radians(1.0) * EARTH_RADIUS_M
    lat = ref_lat + np.asarray(y) / k
    lon = ref_lon + np.asarray(x) / (k * math.cos(math.radians(ref_lat)))
    return lat, lon


def planar_distance(lat1, lon1, lat2, lon2) -> float:
    """Ground distance in meters, projecting about the pair's mean latitude (symmetric)."""
    mid = 0.5 * (lat1 + lat2)
    k = math.radians(1.0) * EARTH_RADIUS_M
    dx = (lon2 - lon1) * k * math.cos(math.radians(mid))
    dy = (lat2 - lat1) * k
    return math.hypot(dx, dy)


def to_samples(
    records: Sequence[FlightLogRecord],
    bs_lat: float,
    bs_lon: float,
    h_c: float,
    antenna_height: float = 0.0,
) -> list:
    """Turn drone log records into measurement samples.

    The drone altitude plays the base-station height (reciprocity). When the
    stationary antenna is lifted off the ground by ``antenna_height`` both the
    effective height difference and the effective canopy height shrink by it.
    """
    if not (-90 <= bs_lat <= 90 and -180 <= bs_lon <= 180):
        raise ValueError("base station position out of range")
    hc_eff = max(h_c - antenna_height, 0.0)
    out = []
    for rec in records:
        x, y = project(rec.lat, rec.lon, bs_lat, bs_lon)
        x, y = float(x), float(y)
        geometry = LinkGeometry(math.hypot(x, y), max(rec.altitude - antenna_height, 0.0), hc_eff)
        out.append(MeasurementSample(geometry, rec.rsrp, timestamp=rec.timestamp, position=(x, y)))
    return out


# -- field grid -------------------------------------------------------------

@dataclass(frozen=True)
class GridSpec:
    """Cell-centered grid: center (i, j) sits at origin + (i + 0.5, j + 0.5) * spacing."""

    origin_x: float
    origin_y: float
    nx: int
    ny: int
    spacing: float

    def __post_init__(self):
        if self.spacing <= 0:
            raise ValueError("spacing must be > 0")
        if self.nx < 1 or self.ny < 1:
            raise ValueError("grid needs at least one cell per axis")

    def centers(self):
        xs = self.origin_x + (np.arange(self.nx) + 0.5) * self.spacing
        ys = self.origin_y + (np.arange(self.ny) + 0.5) * self.spacing
        return xs, ys


@dataclass
class FieldGrid:
    spec: GridSpec
    values: np.ndarray  # (nx, ny), NaN where masked
    valid: np.ndarray  # (nx, ny) bool

    def to_csv(self) -> str:
        xs, ys = self.spec.centers()
        lines = ["x_m,y_m,rsrp_dbm,valid"]
        for j, y in enumerate(ys):
            for i, x in enumerate(xs):
                ok = bool(self.valid[i, j])
                v = f"{self.values[i, j]:.6g}" if ok else ""
                lines.append(f"{x:.6g},{y:.6g},{v},{int(ok)}")
        return "\n".join(lines) + "\n"


def interpolate_points(points, values, spec: GridSpec) -> FieldGrid:
    """Linear interpolation on a Delaunay triangulation, masked outside the hull.

    Repeated positions are merged by averaging their values.
    """
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    values = np.asarray(values, dtype=float)
    uniq, inverse = np.unique(points, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    sums = np.bincount(inverse, weights=values, minlength=len(uniq))
    counts = np.bincount(inverse, minlength=len(uniq))
    merged = sums / counts
    if len(uniq) < 3:
        raise InsufficientSamplesError(f"need >= 3 distinct positions, got {len(uniq)}")
    try:
        interp = LinearNDInterpolator(uniq, merged, fill_value=np.nan)
    except QhullError as exc:
        raise InsufficientSamplesError("sample positions are collinear") from exc
    xs, ys = spec.centers()
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    grid = interp(gx, gy)
    return FieldGrid(spec=spec, values=grid, valid=~np.isnan(grid))


def grid_interpolate(samples: Sequence[MeasurementSample], spec: GridSpec) -> FieldGrid:
    if any(s.position is None for s in samples):
        raise ValueError("every sample needs a position for grid interpolation")
    pts = [s.position for s in samples]
    return interpolate_points(pts, [s.rsrp for s in samples], spec)


# -- synthetic data ---------------------------------------------------------

Range = Union[float, tuple]


def _draw(rng, spec: Range, n: int) -> np.ndarray:
    if isinstance(spec, (int, float)):
        return np.full(n, float(spec))
    lo, hi = spec
    if hi < lo:
        raise ValueError(f"invalid range {spec!r}")
    return rng.uniform(lo, hi, n)


def synth_generate(
    params: ModelParams,
    n: int,
    noise_sigma: float = 0.0,
    seed: int = 0,
    d_range: Range = (10.0, 60.0),
    h_bs_range: Range = (0.5, 30.0),
    h_c: Range = 1.0,
) -> list:
    """Samples with uniformly drawn geometry and Gaussian noise on the prediction.

    Draw order from a PCG64 generator seeded with ``seed``: distances, heights,
    canopy heights, noise, bearings. Positions lie at the drawn distance on a
    random bearing around the origin; timestamps advance at 2 Hz.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if noise_sigma < 0:
        raise ValueError("noise_sigma must be >= 0")
    rng = np.random.Generator(np.random.PCG64(seed))
    d = _draw(rng, d_range, n)
    h = _draw(rng, h_bs_range, n)
    hc = _draw(rng, h_c, n)
    noise = rng.standard_normal(n) * noise_sigma
    bearing = rng.uniform(0.0, 2 * math.pi, n)
    rsrp = predict_array(params, d, h, hc) + noise
    x = d * np.sin(bearing)
    y = d * np.cos(bearing)
    return [
        MeasurementSample(
            LinkGeometry(float(d[i]), float(h[i]), float(hc[i])),
            float(rsrp[i]),
            timestamp=i / CAPTURE_RATE_HZ,
            position=(float(x[i]), float(y[i])),
        )
        for i in range(n)
    ]


def samples_to_flight_log(samples: Sequence[MeasurementSample], bs_lat: float, bs_lon: float) -> list:
    """Place samples around a base station as drone log records (altitude = h_bs)."""
    out = []
    for i, s in enumerate(samples):
        x, y = s.position if s.position is not None else (0.0, s.geometry.d)
        lat, lon = unproject(x, y, bs_lat, bs_lon)
        t = s.timestamp if s.timestamp is not None else i / CAPTURE_RATE_HZ
        out.append(FlightLogRecord(float(t), float(lat), float(lon), s.geometry.h_bs, s.rsrp))
    return out
