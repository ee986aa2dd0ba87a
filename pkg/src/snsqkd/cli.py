"""Command-line front end.

Subcommands: ``simulate``, ``curve``, ``optimize`` and ``verify``. Settings
come from a JSON config (``--config``); explicit flags take precedence over
the config, which takes precedence over built-in defaults.

Exit codes: 0 success, 1 invalid input, 2 verification failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .config import ExperimentConfig, Sweep, load_config, parse_config
from .estimator import analyze, optimize
from .model import ConfigError, PhaseMode, UndefinedRateError
from .oracle import MUTATIONS, TruncationError, run_suite
from .simulator import run

log = logging.getLogger("snsqkd")

EXIT_OK, EXIT_INVALID, EXIT_VERIFY = 0, 1, 2

DEFAULT_DISTANCES = [float(d) for d in range(0, 301, 10)]
DEFAULT_E_A = [0.0, 0.1, 0.2]
CURVE_COLUMNS = ["L_km", "e_a", "q", "mu", "lambda", "E_Z", "e_ph_upper", "rate_per_window", "no_key"]


def fmt(x) -> str:
    """Full-precision rendering used in every CSV cell."""
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return "%.17g" % float(x)


def config_header(cfg: ExperimentConfig) -> str:
    return "# config: " + json.dumps(cfg.echo(), sort_keys=True) + "\n"


def write_csv(path: Path, header: str, columns: list[str], rows) -> None:
    buf = io.StringIO()
    buf.write(header)
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    path.write_text(buf.getvalue())


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, PhaseMode):
        return o.value
    raise TypeError(f"not serializable: {type(o).__name__}")


# --- config resolution ------------------------------------------------------

def resolve(args) -> ExperimentConfig:
    """Config file plus flag overrides."""
    cfg = load_config(args.config) if args.config else parse_config('{"channel": {"distance_km": 0}}', "<defaults>")
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError("--seed must be >= 0", field="seed")
        cfg.seed = args.seed
    if args.out is not None:
        cfg.out = args.out
    if args.threads is not None:
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1", field="threads")
        cfg.threads = args.threads
    if getattr(args, "shards", None) is not None:
        if args.shards < 1:
            raise ConfigError("--shards must be >= 1", field="shards")
        cfg.shards = args.shards
    if getattr(args, "distance", None) is not None:
        cfg.channel = cfg.channel.replace(distance_km=args.distance)
    if getattr(args, "e_a", None) is not None:
        cfg.channel = cfg.channel.replace(e_a=args.e_a)
    if args.mode is not None:
        cfg.protocol_base = {**cfg.protocol_base, "phase_mode": args.mode}
        if cfg.protocol is not None:
            cfg.protocol = cfg.protocol.replace(phase_mode=PhaseMode(args.mode))
    if getattr(args, "n_windows", None) is not None and cfg.protocol is not None:
        cfg.protocol = cfg.protocol.replace(n_windows=args.n_windows)
    return cfg


def out_dir(cfg: ExperimentConfig) -> Path:
    p = Path(cfg.out)
    p.mkdir(parents=True, exist_ok=True)
    return p


# --- commands -------------------------------------------------------------

def cmd_simulate(args) -> int:
    cfg = resolve(args)
    params = cfg.require_protocol()
    log.info("simulating %d windows, %d shard(s)", params.n_windows, cfg.shards)
    result = run(params, cfg.channel, cfg.seed, shards=cfg.shards, workers=cfg.threads)
    out = out_dir(cfg)
    header = config_header(cfg)
    (out / "tally.csv").write_text(header + result.tally.to_csv(accepted_only=False))
    if params.phase_mode is PhaseMode.POSTSELECTION:
        (out / "tally_accepted.csv").write_text(header + result.tally.to_csv(accepted_only=True))
    report = result.to_dict()
    report["config"] = cfg.echo()
    try:
        bounds, rate = analyze(result.tally, params)
        report["bounds"] = bounds.to_dict()
        report["key_rate"] = rate.to_dict()
    except UndefinedRateError as exc:
        report["bounds"] = report["key_rate"] = None
        report["warning"] = str(exc)
    write_json(out / "report.json", report)
    kr = report["key_rate"]
    if kr:
        print(f"E_Z={kr['e_z']:.6g} e_ph_upper={kr['e_ph_upper']:.6g} rate={kr['rate_per_window']:.6g}"
              + (" (no key)" if kr["no_key"] else ""))
    else:
        print(f"no effective events: {report['warning']}")
    print(f"wrote {out / 'report.json'}")
    return EXIT_OK


def curve_rows(cfg: ExperimentConfig, sweep: Sweep, *, log10: bool = False) -> list[list]:
    """One optimized analytic point per (e_a, L), sorted by (e_a, L)."""
    points = sorted({(e, d) for e in sweep.e_a for d in sweep.distances_km})
    mode = cfg.phase_mode

    def one(point):
        e_a, dist = point
        ch = cfg.channel.replace(distance_km=dist, e_a=e_a)
        return optimize(ch, cfg.f, mode)

    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            results = list(pool.map(one, points))
    else:
        results = [one(p) for p in points]
    rows = []
    for (e_a, dist), res in zip(points, results):
        r = res.report
        row = [dist, e_a, res.q, res.mu, res.lambda_ps, r.e_z, r.e_ph_upper, r.rate_per_window, r.no_key]
        if log10:
            row.append(math.log10(r.rate_per_window) if r.rate_per_window > 0 else -math.inf)
        rows.append(row)
    return rows


def cmd_curve(args) -> int:
    cfg = resolve(args)
    sweep = cfg.sweep or Sweep(list(DEFAULT_DISTANCES), list(DEFAULT_E_A))
    if args.distances is not None:
        sweep = Sweep(args.distances, sweep.e_a)
    if args.e_a_values is not None:
        sweep = Sweep(sweep.distances_km, args.e_a_values)
    if not sweep.distances_km or not sweep.e_a:
        raise ConfigError("curve needs non-empty sweep.distances_km and sweep.e_a", field="sweep")
    for d in sweep.distances_km:
        cfg.channel.replace(distance_km=d)
    for e in sweep.e_a:
        cfg.channel.replace(e_a=e)
    cfg.sweep = sweep
    rows = curve_rows(cfg, sweep, log10=args.log10)
    columns = CURVE_COLUMNS + (["log10_rate"] if args.log10 else [])
    path = out_dir(cfg) / "curve.csv"
    write_csv(path, config_header(cfg), columns, rows)
    for e_a in sorted(set(sweep.e_a)):
        reach = [r[0] for r in rows if r[1] == e_a and not r[8]]
        print(f"e_a={e_a:g}: positive key up to {max(reach):g} km" if reach else f"e_a={e_a:g}: no key at any distance")
    print(f"wrote {path}")
    return EXIT_OK


def cmd_optimize(args) -> int:
    cfg = resolve(args)
    res = optimize(cfg.channel, cfg.f, cfg.phase_mode,
                   n_windows=cfg.protocol.n_windows if cfg.protocol else 1)
    out = res.to_dict()
    out["config"] = cfg.echo()
    path = out_dir(cfg) / "optimize.json"
    write_json(path, out)
    lam = "" if res.lambda_ps is None else f" lambda={res.lambda_ps:.6g}"
    print(f"L={cfg.channel.distance_km:g} km e_a={cfg.channel.e_a:g}: q={res.q:.6g} mu={res.mu:.6g}{lam} "
          f"rate={res.report.rate_per_window:.6g}" + (" (no key)" if res.report.no_key else ""))
    print(f"wrote {path}")
    return EXIT_OK


def cmd_verify(args) -> int:
    cfg = resolve(args)
    v = cfg.verify
    cutoff = args.cutoff if args.cutoff is not None else v.get("cutoff", 40)
    trials = args.trials if args.trials is not None else v.get("trials", 1000)
    if cutoff < 1 or trials < 1:
        raise ConfigError("--cutoff and --trials must be >= 1", field="verify")
    kwargs = {}
    if "mus" in v:
        kwargs["mus"] = tuple(v["mus"])
    if "cauchy_mus" in v:
        kwargs["cauchy_mus"] = tuple(v["cauchy_mus"])
    if args.mutation:
        kwargs["bounds"] = MUTATIONS[args.mutation]
    checks = run_suite(cutoff=cutoff, trials=trials, seed=cfg.seed, **kwargs)
    width = max(len(c.name) for c in checks)
    print(f"{'check':<{width}}  {'residual':>12}  {'tolerance':>10}  result")
    for c in checks:
        print(f"{c.name:<{width}}  {c.value:>12.4g}  {c.tolerance:>10.3g}  {'pass' if c.passed else 'FAIL'}"
              + (f"  {c.detail}" if c.detail and not c.passed else ""))
    failed = [c for c in checks if not c.passed]
    report = {"config": cfg.echo(), "cutoff": cutoff, "trials": trials, "mutation": args.mutation,
              "passed": not failed, "checks": [c.to_dict() for c in checks]}
    path = out_dir(cfg) / "verify.json"
    write_json(path, report)
    print(f"{len(checks) - len(failed)}/{len(checks)} checks passed; wrote {path}")
    return EXIT_VERIFY if failed else EXIT_OK


# --- parser ----------------------------------------------------------------

def _float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON experiment config")
    common.add_argument("--seed", type=int, help="RNG seed (overrides config)")
    common.add_argument("--out", metavar="DIR", help="output directory (overrides config)")
    common.add_argument("--threads", type=int, help="worker threads")
    common.add_argument("--mode", choices=[m.value for m in PhaseMode], help="phase handling")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="snsqkd", description="Sending-or-not-sending TF-QKD simulator and key-rate tools.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="Monte Carlo run, writes report.json and tally CSVs")
    p.add_argument("--shards", type=int, help="independent RNG streams (result depends on this)")
    p.add_argument("--n-windows", type=int)
    p.add_argument("--distance", type=float, help="distance_km override")
    p.add_argument("--e-a", type=float, help="misalignment override")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("curve", parents=[common], help="optimized key rate against distance, writes curve.csv")
    p.add_argument("--distances", type=_float_list, help="comma-separated distances in km")
    p.add_argument("--e-a-values", type=_float_list, help="comma-separated misalignment values")
    p.add_argument("--log10", action="store_true", help="add a log10_rate column")
    p.set_defaults(func=cmd_curve)

    p = sub.add_parser("optimize", parents=[common], help="optimize q, mu (and lambda) at one distance")
    p.add_argument("--distance", type=float, help="distance_km override")
    p.add_argument("--e-a", type=float, help="misalignment override")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("verify", parents=[common], help="truncated-Fock oracle suite")
    p.add_argument("--cutoff", type=int, help="Fock cutoff per mode (default 40)")
    p.add_argument("--trials", type=int, help="random POVMs per mu (default 1000)")
    p.add_argument("--mutation", choices=sorted(MUTATIONS), help="run against a deliberately broken bound")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, TruncationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
