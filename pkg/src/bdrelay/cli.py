"""Command line interface: calibrate policy parameters or run rate sweeps."""

from __future__ import annotations

import argparse
import json
import sys
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from ._kernels import BACKEND
from ._seeding import PROTOCOL_IDS
from .channel import ChannelStats, NodePowers
from .engine import PROTOCOLS, SweepRow, sweep
from .policy import (
    DEFAULT_CALIB_SAMPLES,
    CalibrationError,
    PolicyParams,
    calibrate,
)

__all__ = ["main"]

CSV_COLUMNS = (
    "omega1_db", "pr_db", "protocol", "sum_rate", "r1r_bar", "r2r_bar",
    "rr1_bar", "rr2_bar", "residual_c1", "residual_c2", "region", "mu1",
    "mu2", "t_share", "frac_m1", "frac_m2", "frac_m3", "frac_m4", "frac_m5",
    "frac_m6", "std_error", "seed",
)

FIG3_PRESET = {
    "p1_db": 10.0,
    "p2_db": 10.0,
    "omega2_db": 0.0,
    "omega1_db": [float(v) for v in range(-10, 11, 2)],
    "pr_db": [5.0, 10.0, 15.0],
}


def _float_list(text: str):
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number list: {text!r}")
    if not values:
        raise argparse.ArgumentTypeError("empty value list")
    return values


def _build_parser() -> argparse.ArgumentParser:
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--omega1-db", type=_float_list, default=None,
                        help="mean gain of the user1-relay link in dB; "
                             "comma-separated list sweeps it")
    shared.add_argument("--omega2-db", type=float, default=None,
                        help="mean gain of the user2-relay link in dB")
    shared.add_argument("--p1-db", type=float, default=None,
                        help="transmit power of user 1 in dB")
    shared.add_argument("--p2-db", type=float, default=None,
                        help="transmit power of user 2 in dB")
    shared.add_argument("--pr-db", type=_float_list, default=None,
                        help="relay transmit power in dB; comma-separated "
                             "list sweeps it")
    shared.add_argument("--calib-samples", type=int,
                        default=DEFAULT_CALIB_SAMPLES,
                        help="sample size behind calibration expectations")
    shared.add_argument("--seed", type=int, default=0,
                        help="base seed for every derived random stream")
    shared.add_argument("--out", type=Path, default=None,
                        help="output file; stdout when omitted")

    parser = argparse.ArgumentParser(
        prog="bdrelay",
        description="Buffer-aided two-user relay simulator with adaptive "
                    "transmission-mode selection.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    cal = sub.add_parser("calibrate", parents=[shared],
                         help="solve policy parameters for one scenario and "
                              "print them as JSON")
    cal.set_defaults(func=_cmd_calibrate)

    sim = sub.add_parser("simulate", parents=[shared],
                         help="simulate protocols over a scenario grid")
    sim.add_argument("--n-slots", type=int, default=1_000_000,
                     help="slots per run")
    sim.add_argument("--protocol", default="proposed",
                     choices=["proposed", "twoway", "tdbc", "mabc",
                              "threemode", "all"],
                     help="protocol to simulate; mabc also reports its "
                          "tuned-time-share variant")
    sim.add_argument("--format", default="csv", choices=["csv", "json"],
                     help="output format")
    sim.add_argument("--preset", choices=["fig3"], default=None,
                     help="fill scenario defaults for the reference sweep "
                          "(10 dB user powers, 0 dB user-2 link, user-1 link "
                          "swept -10..10 dB)")
    sim.add_argument("--calib-cache", type=Path, default=None,
                     help="JSON file reusing calibrated parameters across "
                          "runs")
    sim.add_argument("--jobs", type=int, default=1,
                     help="worker processes for sweep points")
    sim.set_defaults(func=_cmd_simulate)
    return parser


def _apply_preset(args, parser):
    if getattr(args, "preset", None) == "fig3":
        for name, value in FIG3_PRESET.items():
            if getattr(args, name) is None:
                setattr(args, name, value)
    for name in ("omega1_db", "omega2_db", "p1_db", "p2_db", "pr_db"):
        if getattr(args, name) is None:
            parser.error(f"--{name.replace('_', '-')} is required")


def _cmd_calibrate(args, parser) -> int:
    _apply_preset(args, parser)
    if len(args.omega1_db) != 1 or len(args.pr_db) != 1:
        parser.error("calibrate takes a single --omega1-db and --pr-db value")
    stats = ChannelStats.from_db(args.omega1_db[0], args.omega2_db)
    powers = NodePowers.from_db(args.p1_db, args.p2_db, args.pr_db[0])
    try:
        result = calibrate(powers, stats, args.calib_samples, args.seed)
    except CalibrationError as err:
        sys.stderr.write("calibration failed; solver trace:\n")
        for line in err.trace:
            sys.stderr.write(f"  {line}\n")
        return 3
    text = result.params.to_json()
    print(text)
    if args.out is not None:
        args.out.write_text(text + "\n")
    return 0


def _expand_protocols(choice: str):
    if choice == "all":
        return list(PROTOCOLS)
    if choice == "mabc":
        return ["mabc", "mabc_opt_t"]
    return [choice]


def _row_cells(row: SweepRow) -> dict:
    rep = row.output.report
    cells = {
        "omega1_db": row.omega1_db,
        "pr_db": row.pr_db,
        "protocol": row.protocol,
        "sum_rate": rep.sum_rate,
        "r1r_bar": rep.r1r_bar,
        "r2r_bar": rep.r2r_bar,
        "rr1_bar": rep.rr1_bar,
        "rr2_bar": rep.rr2_bar,
        "residual_c1": rep.residual_c1,
        "residual_c2": rep.residual_c2,
        "region": None,
        "mu1": None,
        "mu2": None,
        "t_share": None,
        "std_error": rep.std_error,
        "seed": row.seed,
    }
    for k in range(6):
        cells[f"frac_m{k + 1}"] = rep.mode_histogram[k]
    cal = row.output.calibration
    if row.protocol == "proposed":
        cells["region"] = cal.params.region
        cells["mu1"] = cal.params.mu1
        cells["mu2"] = cal.params.mu2
        cells["t_share"] = cal.params.t_share
    elif row.protocol == "threemode":
        cells["mu1"] = cal.mu1
        cells["mu2"] = cal.mu2
    elif row.protocol == "mabc":
        cells["t_share"] = 0.5
    return cells


def _fmt_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, str):
        return value
    if isinstance(value, int):
        return str(value)
    return repr(float(value))


def _render_csv(rows) -> str:
    lines = [",".join(CSV_COLUMNS)]
    for row in rows:
        cells = _row_cells(row)
        lines.append(",".join(_fmt_cell(cells[c]) for c in CSV_COLUMNS))
    return "\n".join(lines) + "\n"


def _render_json(rows) -> str:
    payload = [{c: _row_cells(row)[c] for c in CSV_COLUMNS} for row in rows]
    return json.dumps(payload, indent=2) + "\n"


def _manifest(args, protocols, rows) -> dict:
    return {
        "version": __version__,
        "created": datetime.now(timezone.utc).isoformat(),
        "backend": BACKEND,
        "config": {
            "omega1_db": args.omega1_db,
            "omega2_db": args.omega2_db,
            "p1_db": args.p1_db,
            "p2_db": args.p2_db,
            "pr_db": args.pr_db,
            "n_slots": args.n_slots,
            "calib_samples": args.calib_samples,
            "seed": args.seed,
            "protocols": protocols,
            "format": args.format,
            "preset": args.preset,
            "jobs": args.jobs,
            "calib_cache": str(args.calib_cache) if args.calib_cache else None,
        },
        "seed_scheme": {
            "streams": "keyed by (seed, omega1_index, pr_index, protocol_id, "
                       "purpose); purposes: gains=0, coins=1, calibration=2 "
                       "(calibration uses (seed, 2) only)",
            "protocol_ids": PROTOCOL_IDS,
        },
        "points": [
            {
                "omega1_db": row.omega1_db,
                "pr_db": row.pr_db,
                "omega1_index": row.omega1_index,
                "pr_index": row.pr_index,
                "protocol": row.protocol,
                "cache_hit": row.cache_hit,
                "failed": row.error is not None,
            }
            for row in rows
        ],
    }


def _load_cache(path: Path) -> dict:
    if path is None or not path.exists():
        return {}
    raw = json.loads(path.read_text())
    return {k: PolicyParams.from_json_dict(v) for k, v in raw.items()}


def _cmd_simulate(args, parser) -> int:
    _apply_preset(args, parser)
    if args.n_slots < 1000:
        parser.error("--n-slots must be at least 1000")
    if args.jobs < 1:
        parser.error("--jobs must be positive")
    protocols = _expand_protocols(args.protocol)
    cache = _load_cache(args.calib_cache)
    rows = sweep(args.omega1_db, args.pr_db,
                 omega2_db=args.omega2_db, p1_db=args.p1_db,
                 p2_db=args.p2_db, protocols=protocols,
                 n_slots=args.n_slots, calib_samples=args.calib_samples,
                 seed=args.seed, jobs=args.jobs, param_cache=cache)
    if args.calib_cache is not None:
        serialized = {k: v.to_json_dict() for k, v in sorted(cache.items())}
        args.calib_cache.write_text(json.dumps(serialized, indent=2) + "\n")

    good = [row for row in rows if row.error is None]
    render = _render_csv if args.format == "csv" else _render_json
    text = render(good)
    if args.out is not None:
        args.out.write_text(text)
        manifest_path = Path(str(args.out) + ".manifest.json")
        manifest_path.write_text(json.dumps(_manifest(args, protocols, rows),
                                            indent=2) + "\n")
    else:
        sys.stdout.write(text)

    failed = [row for row in rows if row.error is not None]
    for row in failed:
        sys.stderr.write(f"calibration failed at omega1_db={row.omega1_db} "
                         f"pr_db={row.pr_db} protocol={row.protocol}; "
                         f"solver trace:\n")
        for line in row.error.splitlines():
            sys.stderr.write(f"  {line}\n")
    return 3 if failed else 0


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    return args.func(args, parser)


if __name__ == "__main__":
    sys.exit(main())
