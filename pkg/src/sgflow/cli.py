"""Command-line drivers: sgflow <simulate|linearize|adjoint|gradcheck|optimize|verify>."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import io
from .config import Problem, parse_config
from .errors import BlowUp, ConfigError
from .optimizer import LINE_SEARCH_FAIL, optimize
from .sensitivity import gateaux_check, greens_gap, solve_adjoint, solve_linearized
from .spectral import SpectralField
from .state import Trajectory, _series, apriori_monitor, simulate, summary_rows
from .verify import SUITES, run_suite

EXIT_OK, EXIT_FAIL, EXIT_INVALID, EXIT_BLOWUP, EXIT_LINESEARCH = 0, 1, 2, 3, 4
COMMANDS = ("simulate", "linearize", "adjoint", "gradcheck", "optimize", "verify")


def _say(msg):
    print(msg, file=sys.stderr)


def _state(pb: Problem) -> Trajectory:
    pb.require("y0")
    return simulate(pb.cfg, pb.y0, pb.u)


def _dev(pb: Problem, y: Trajectory):
    """Adjoint source: f from the config if given, else y - y_d, else zero."""
    if pb.f is not None:
        return pb.f
    if pb.y_d is not None:
        return y.coeffs - _series(pb.y_d, y.N)
    return SpectralField.zeros(pb.cfg.K)


def _duality(pb: Problem, w, f, y) -> dict:
    gap = greens_gap(w, f, y, pb.cfg)
    half = pb.cfg.replace(dt=pb.cfg.dt / 2)
    y_half = simulate(half, pb.y0, pb.u)
    f_half = f
    if isinstance(f, np.ndarray) and f.ndim == 3:
        f_half = y_half.coeffs - _series(pb.y_d, y_half.N)
    gap_half = greens_gap(w, f_half, y_half, half)
    return {"gap": gap, "gap_half_dt": gap_half, "ratio": gap / gap_half if gap_half > 0 else None}


def cmd_simulate(pb: Problem, out: Path, args, man):
    y = _state(pb)
    man.add(io.write_summary_csv(out / "summary.csv", summary_rows(y, pb.u, pb.cfg)))
    man.add(io.write_field_csv(out / "final_state.csv", y.coeffs[-1], pb.cfg.alpha))
    man.add(io.write_json(out / "monitor.json", apriori_monitor(y, pb.u, pb.cfg, raise_on_violation=False)))
    if args.dump_every:
        man.add(io.write_snapshots(out / "snapshots.csv", y, args.dump_every))
    return EXIT_OK


def cmd_linearize(pb: Problem, out: Path, args, man):
    pb.require("w")
    y = _state(pb)
    z = solve_linearized(y, y, pb.w, pb.cfg).z
    man.add(io.write_snapshots(out / "linearized.csv", z, args.dump_every))
    man.add(io.write_field_csv(out / "linearized_final.csv", z.coeffs[-1], pb.cfg.alpha))
    return EXIT_OK


def cmd_adjoint(pb: Problem, out: Path, args, man):
    y = _state(pb)
    f = _dev(pb, y)
    p = solve_adjoint(y, f, pb.cfg).p
    man.add(io.write_snapshots(out / "adjoint.csv", p, args.dump_every))
    man.add(io.write_field_csv(out / "adjoint_initial.csv", p.coeffs[0], pb.cfg.alpha))
    if pb.w is not None:
        man.add(io.write_json(out / "duality.json", _duality(pb, pb.w, f, y)))
    return EXIT_OK


def cmd_gradcheck(pb: Problem, out: Path, args, man):
    pb.require("y0", "u", "w", "y_d")
    g = gateaux_check(pb.u, pb.w, pb.rhos, pb.cfg, pb.y0, pb.y_d)
    man.add(io.write_gateaux_csv(out / "gateaux.csv", g.rows))
    y = simulate(pb.cfg, pb.y0, pb.u)
    man.add(io.write_json(out / "duality.json", _duality(pb, pb.w, _dev(pb, y), y)))
    man.add(io.write_json(out / "gradcheck.json", {
        "J": g.J, "dJ_linearized": g.dJ_linearized, "dJ_adjoint": g.dJ_adjoint,
        "relative_mismatch": abs(g.dJ_adjoint - g.dJ_linearized) / max(abs(g.dJ_linearized), 1e-300),
        "ratios": g.ratios,
    }))
    return EXIT_OK


def cmd_optimize(pb: Problem, out: Path, args, man):
    pb.require("y0", "y_d", "admissible")
    o = pb.optimizer
    rep = optimize(pb.cfg, pb.y0, pb.y_d, pb.admissible, u0=pb.u, n_intervals=pb.n_intervals,
                   max_iter=o["max_iter"], c1=o["c1"], shrink=o["shrink"], tol_vi=o["tol_vi"], step0=o["step0"],
                   log=lambda it, J, gn, vi, s: _say(f"iter {it:4d}  J={J:.6e}  |g|={gn:.3e}  vi={vi:.3e}"))
    index, files = io.write_control(out, rep.u, pb.cfg.alpha)
    man.add(files)
    man.add(io.write_json(out / "report.json", rep.to_dict(index.name)))
    _say(f"status {rep.status} after {len(rep.iterates) - 1} iterations, J={rep.J:.6e}")
    return EXIT_LINESEARCH if rep.status == LINE_SEARCH_FAIL else EXIT_OK


def cmd_verify(args, out: Path, man):
    report = run_suite(args.suite, args.seed)
    man.add(io.write_json(out / "verify_report.json", report))
    for r in report["checks"]:
        print(f"{r['status'].upper():4s}  {r['check']}  measured={r['measured']}  threshold={r['threshold']}")
    if report["failed"]:
        _say("failed checks: " + ", ".join(report["failed"]))
        return EXIT_FAIL
    return EXIT_OK


DRIVERS = {
    "simulate": cmd_simulate,
    "linearize": cmd_linearize,
    "adjoint": cmd_adjoint,
    "gradcheck": cmd_gradcheck,
    "optimize": cmd_optimize,
}


def build_parser():
    ap = argparse.ArgumentParser(prog="sgflow", description=__doc__)
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", type=Path, help="JSON run configuration (all commands but verify)")
    ap.add_argument("--out", type=Path, default=Path("."), help="output directory (default: .)")
    ap.add_argument("--seed", type=int, default=0, help="seed for random data in the config or the verify suite")
    ap.add_argument("--dump-every", type=int, default=0, metavar="S",
                    help="write a snapshot every S steps (final step always included)")
    ap.add_argument("--suite", default="all", help=f"verify suite: all, {', '.join(SUITES)}")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INVALID if exc.code else EXIT_OK
    if args.dump_every < 0:
        _say("--dump-every: must be >= 0")
        return EXIT_INVALID

    if args.command == "verify":
        if args.suite != "all" and args.suite not in SUITES:
            _say(f"--suite: unknown suite {args.suite!r}; expected all or one of {', '.join(SUITES)}")
            return EXIT_INVALID
        man = io.RunManifest(args.out, "verify", {"suite": args.suite}, args.seed).begin()
        code = cmd_verify(args, args.out, man)
        man.finalize("ok" if code == EXIT_OK else "failed", code)
        return code

    if args.config is None:
        _say("--config: required for this command")
        return EXIT_INVALID
    try:
        pb = parse_config(args.config, args.seed)
    except ConfigError as exc:
        _say(f"invalid configuration: {exc}")
        return EXIT_INVALID

    man = io.RunManifest(args.out, args.command, pb.echo, args.seed).begin()
    try:
        code = DRIVERS[args.command](pb, args.out, args, man)
        status = "ok" if code == EXIT_OK else "line-search-fail"
    except ConfigError as exc:
        _say(f"invalid configuration: {exc}")
        code, status = EXIT_INVALID, "invalid"
    except BlowUp as exc:
        _say(f"blow-up: {exc}")
        code, status = EXIT_BLOWUP, "blow-up"
    man.finalize(status, code)
    return code


if __name__ == "__main__":
    sys.exit(main())
