"""Command-line entry point: ``croplink <subcommand> ...``.

Exit status: 0 success, 1 input or I/O error, 2 fit did not converge.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from croplink import calibration, coverage, height, linkquality, telemetry
from croplink.errors import CropLinkError, DegenerateDatasetError
from croplink.propagation import (
    TABLE1_CORN,
    LinkGeometry,
    ModelParams,
    load_params,
    predict_rsrp,
    save_params,
)

log = logging.getLogger("croplink")

EXIT_OK, EXIT_INPUT, EXIT_NOT_CONVERGED = 0, 1, 2


class InputError(Exception):
    pass


def _g(v: float) -> str:
    return f"{v:.6g}"


def _write_json(path, doc) -> None:
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _params_or_default(args) -> ModelParams:
    return load_params(args.params) if args.params else TABLE1_CORN


def _mast(args) -> height.MastConstraints:
    return height.MastConstraints(args.h_min, args.h_max, args.step)


def _read_csv(path, required: tuple, optional: tuple = ()):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        fields = [f.strip().lower() for f in (reader.fieldnames or [])]
        if not set(required) <= set(fields):
            raise InputError(f"{path}: header must contain {','.join(required)}")
        reader.fieldnames = fields
        rows = []
        for row in reader:
            if not any((v or "").strip() for v in row.values()):
                continue
            try:
                vals = {k: float(row[k]) for k in required}
                vals.update({k: float(row[k]) for k in optional if row.get(k) not in (None, "")})
            except (TypeError, ValueError):
                raise InputError(f"{path}: line {reader.line_num}: invalid number") from None
            rows.append((reader.line_num, vals))
    return rows


# -- subcommands ------------------------------------------------------------

def cmd_fit(args) -> int:
    parsed = telemetry.parse_flight_log(Path(args.log))
    for lineno, reason in parsed.rejections:
        log.warning("%s: line %d rejected: %s", args.log, lineno, reason)
    if parsed.flagged:
        log.info("%d samples with atypical RSRP kept", len(parsed.flagged))
    samples = telemetry.to_samples(parsed.records, args.bs_lat, args.bs_lon, args.h_c, args.antenna_height)
    usable = [s for s in samples if s.geometry.r > 0]
    if len(usable) < len(samples):
        log.warning("dropped %d samples at zero slant range", len(samples) - len(usable))
    if not usable:
        raise DegenerateDatasetError("degenerate dataset: no usable samples")

    base = load_params(args.params) if args.params else calibration.default_initial(usable)
    overrides = {k: getattr(args, f"init_{k}") for k in ("alpha", "beta", "gamma", "g")}
    initial = base.replace(**{k: v for k, v in overrides.items() if v is not None})
    result = calibration.fit(
        usable, initial, max_iter=args.max_iter, tol=args.tol, starts=args.starts, seed=args.seed
    )
    out = Path(args.out or "fit_params.txt")
    save_params(result.params, out, header=f"fitted on {len(usable)} samples")
    report = result.report()
    report["samples"] = len(usable)
    report["rejected_rows"] = len(parsed.rejections)
    _write_json(args.report or out.with_suffix(".report.json"), report)
    p = result.params
    print(f"alpha={_g(p.alpha)} beta={_g(p.beta)} gamma={_g(p.gamma)} g={_g(p.g)}")
    print(f"rmse={_g(result.rmse)} median_abs_error={_g(result.median_abs_error)} "
          f"iterations={result.iterations} converged={str(result.converged).lower()}")
    return EXIT_OK if result.converged else EXIT_NOT_CONVERGED


def cmd_predict(args) -> int:
    pred = predict_rsrp(_params_or_default(args), LinkGeometry(args.d, args.h_bs, args.h_c))
    print(f"rsrp_dbm={_g(pred.rsrp)} path_loss_db={_g(pred.path_loss)} "
          f"crop_attenuation_db={_g(pred.crop_attenuation)} directivity_gain_db={_g(pred.directivity_gain)}")
    return EXIT_OK


def cmd_optimize_height(args) -> int:
    rows = _read_csv(args.clients, ("d_m", "h_c_m"), ("weight",))
    clients = []
    for lineno, r in rows:
        try:
            clients.append(height.ClientSite(r["d_m"], r["h_c_m"], r.get("weight", 1.0)))
        except ValueError as exc:
            raise InputError(f"{args.clients}: line {lineno}: {exc}") from None
    if not clients:
        raise InputError(f"{args.clients}: no clients")
    decision = height.optimal_height_multi(_params_or_default(args), clients, _mast(args), args.objective)
    print(f"h_star_m={_g(decision.h_star)} objective_dbm={_g(decision.predicted_rsrp)}")
    if args.out:
        Path(args.out).write_text(decision.profile_csv(), encoding="utf-8")
    return EXIT_OK


def _parse_grid(text: str):
    for sep in ("x", ",", "X"):
        if sep in text:
            a, b = text.split(sep, 1)
            return int(a), int(b)
    n = int(text)
    return n, n


def cmd_coverage(args) -> int:
    mast = _mast(args)
    if not mast.contains(args.fixed_height):
        raise InputError(f"fixed height {args.fixed_height} outside mast range [{mast.h_min}, {mast.h_max}]")
    nx, ny = _parse_grid(args.grid)
    spec = coverage.FieldSpec(args.x_min, args.x_max, args.y_min, args.y_max, nx, ny)
    report = coverage.field_comparison(_params_or_default(args), spec, args.h_c, args.fixed_height, mast)
    print(f"median_gain_db={_g(report.median_gain)} mean_gain_db={_g(report.mean_gain)} "
          f"p90_gain_db={_g(report.p90_gain)}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "coverage_grid.csv").write_text(report.to_csv(), encoding="utf-8")
        _write_json(out / "coverage_report.json", report.to_dict())
    return EXIT_OK


def cmd_plan(args) -> int:
    farm = coverage.FarmExtent(args.farm_width, args.farm_height)
    areas = []
    if args.work_areas:
        areas = [(int(r["day"]), r["x_m"], r["y_m"]) for _, r in _read_csv(args.work_areas, ("day", "x_m", "y_m"))]
    plan = coverage.mobile_plan(farm, areas, args.radius, edge_only=args.edge_only, spacing_policy=args.policy)
    print(f"static sites: {plan.sites_static}, mobile: {plan.sites_mobile}")
    if args.out:
        _write_json(args.out, plan.to_dict())
    return EXIT_OK


def cmd_teleop(args) -> int:
    per_stream = args.per_stream
    if args.stream_table:
        table = linkquality.load_stream_table(Path(args.stream_table))
        per_stream = table.bitrate(args.resolution, args.compression)
    if per_stream is None:
        raise InputError("per-stream rate required (positional or --stream-table)")
    print(linkquality.teleop_capacity(args.capacity, per_stream, args.headroom))
    if args.min_uplink is not None:
        curve = linkquality.load_curve(Path(args.curve)) if args.curve else linkquality.synthetic_default_curve()
        rng = linkquality.teleop_range(_params_or_default(args), args.h_c, _mast(args), curve, args.min_uplink)
        print(f"range_m={_g(rng)}")
    return EXIT_OK


def cmd_synth(args) -> int:
    params = _params_or_default(args)
    samples = telemetry.synth_generate(
        params, args.n, args.sigma, args.seed,
        d_range=(args.d_min, args.d_max), h_bs_range=(args.h_bs_min, args.h_bs_max), h_c=args.h_c,
    )
    records = telemetry.samples_to_flight_log(samples, args.bs_lat, args.bs_lon)
    text = telemetry.format_flight_log(records)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


# -- parser -----------------------------------------------------------------

def _add_mast(p, h_min=1.0):
    p.add_argument("--h-min", type=float, default=h_min, help="lowest mast height, m")
    p.add_argument("--h-max", type=float, default=30.0, help="highest mast height, m")
    p.add_argument("--step", type=float, default=0.25, help="coarse height step, m")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--params", help="model params file (key = value)")
    common.add_argument("--out", help="output file or directory")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--config", help="key = value file of flag defaults; flags win")
    common.add_argument("-v", "--verbose", action="count", default=0)

    parser = argparse.ArgumentParser(prog="croplink", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", parents=[common], help="calibrate model params from a flight log")
    p.add_argument("log", help="flight-log CSV (timestamp,lat,lon,alt_m,rsrp_dbm)")
    p.add_argument("--bs-lat", type=float, required=True)
    p.add_argument("--bs-lon", type=float, required=True)
    p.add_argument("--h-c", type=float, default=0.0, help="crop height, m")
    p.add_argument("--antenna-height", type=float, default=0.0)
    for k in ("alpha", "beta", "gamma", "g"):
        p.add_argument(f"--init-{k}", type=float)
    p.add_argument("--max-iter", type=int, default=200)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--starts", type=int, default=5)
    p.add_argument("--report", help="fit report path (default: <out>.report.json)")
    # --out is shared through the parent parser, so its fit default lives in cmd_fit
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", parents=[common], help="predict RSRP for one geometry")
    p.add_argument("--d", type=float, required=True)
    p.add_argument("--h-bs", type=float, required=True)
    p.add_argument("--h-c", type=float, default=0.0)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("optimize-height", parents=[common], help="best mast height for clients")
    p.add_argument("clients", help="CSV with d_m,h_c_m[,weight]")
    _add_mast(p)
    p.add_argument("--objective", choices=height.OBJECTIVES, default="mean")
    p.set_defaults(func=cmd_optimize_height)

    p = sub.add_parser("coverage", parents=[common], help="fixed vs variable height over a field grid")
    p.add_argument("--grid", default="20x20")
    p.add_argument("--x-min", type=float, default=8.0)
    p.add_argument("--x-max", type=float, default=42.0)
    p.add_argument("--y-min", type=float, default=8.0)
    p.add_argument("--y-max", type=float, default=42.0)
    p.add_argument("--h-c", type=float, default=1.0)
    p.add_argument("--fixed-height", type=float, default=5.0)
    _add_mast(p, h_min=0.5)
    p.set_defaults(func=cmd_coverage)

    p = sub.add_parser("plan", parents=[common], help="static site grid vs mobile gateway")
    p.add_argument("--farm-width", type=float, default=4800.0)
    p.add_argument("--farm-height", type=float, default=4800.0)
    p.add_argument("--radius", type=float, default=1000.0)
    p.add_argument("--policy", choices=coverage.POLICIES, default="paper")
    p.add_argument("--work-areas", help="CSV with day,x_m,y_m")
    p.add_argument("--edge-only", action="store_true")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("teleop", parents=[common], help="teleoperation capacity and range")
    p.add_argument("capacity", type=float, help="uplink capacity, Mbps")
    p.add_argument("per_stream", type=float, nargs="?", help="per-robot video rate, Mbps")
    p.add_argument("--headroom", type=float, default=linkquality.DEFAULT_HEADROOM)
    p.add_argument("--stream-table", help="CSV resolution,compression_pct,bitrate_mbps")
    p.add_argument("--resolution", default="640x480")
    p.add_argument("--compression", type=float, default=90.0)
    p.add_argument("--min-uplink", type=float, help="also report range for this uplink rate, Mbps")
    p.add_argument("--curve", help="CSV rsrp_dbm,downlink_mbps,uplink_mbps (default: synthetic)")
    p.add_argument("--h-c", type=float, default=0.0)
    _add_mast(p)
    p.set_defaults(func=cmd_teleop)

    p = sub.add_parser("synth", parents=[common], help="synthetic flight log from model params")
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--sigma", type=float, default=0.0)
    p.add_argument("--d-min", type=float, default=10.0)
    p.add_argument("--d-max", type=float, default=60.0)
    p.add_argument("--h-bs-min", type=float, default=0.5)
    p.add_argument("--h-bs-max", type=float, default=30.0)
    p.add_argument("--h-c", type=float, default=1.0)
    p.add_argument("--bs-lat", type=float, default=40.0)
    p.add_argument("--bs-lon", type=float, default=-88.0)
    p.set_defaults(func=cmd_synth)
    parser.subcommands = sub.choices
    return parser


def _load_config(path) -> dict:
    out = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InputError(f"{path}: line {lineno}: expected 'key = value'")
        k, v = (s.strip() for s in line.split("=", 1))
        out[k.replace("-", "_")] = v
    return out


def _parse(parser, argv):
    args = parser.parse_args(argv)
    if not args.config:
        return args
    # Re-parse with config values as subcommand defaults so explicit flags still win.
    cfg = _load_config(args.config)
    sub = parser.subcommands[args.command]
    typed = {}
    for action in sub._actions:
        if action.dest not in cfg:
            continue
        raw = cfg[action.dest]
        if action.nargs == 0:
            typed[action.dest] = raw.lower() in ("1", "true", "yes", "on")
        else:
            typed[action.dest] = (action.type or str)(raw)
    sub.set_defaults(**typed)
    return parser.parse_args(argv)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = _parse(parser, argv)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (CropLinkError, InputError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
