"""Command-line entry point ``zpm``.

Exit codes: 0 success, 1 usage error, 2 validation failure, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import config as cfgmod
from .experiments import CampaignError, plot_log, report, run_campaign, table_row
from .nominal import (
    NominalFormatError,
    NominalLimitError,
    export_csv,
    import_csv,
    optimize_shape,
    validate,
)
from .simulation import MODES, SimLog, SimulationError, TerminalErrors, run, summary, write_summary

EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, EXIT_RUNTIME = 0, 1, 2, 3

log = logging.getLogger("zpm")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_config(p):
    p.add_argument("--config", help="INI file (defaults apply to missing keys)")
    p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                   help="override a config value; repeatable")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="zpm", description="Zero-propellant reorientation guidance toolkit.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    nom = sub.add_parser("nominal", help="generate or validate a nominal trajectory")
    nsub = nom.add_subparsers(dest="action", required=True, parser_class=_Parser)
    gen = nsub.add_parser("generate", help="generate a nominal and write it as CSV")
    _add_config(gen)
    gen.add_argument("--out", required=True)
    gen.add_argument("--optimize", type=int, metavar="K", default=0,
                     help="re-optimise K interior shape terms instead of using nominal.shape")
    gen.add_argument("--starts", type=int, default=8)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--envelope-fraction", type=float, default=0.5)
    gen.add_argument("--torque-weight", type=float, default=0.0)
    gen.add_argument("--torque-ramp", type=float, default=0.0)
    gen.add_argument("--no-check", action="store_true", help="write the file even if limits are violated")
    val = nsub.add_parser("validate", help="check a nominal CSV against the CMG limits")
    _add_config(val)
    val.add_argument("--traj", required=True)

    sim = sub.add_parser("simulate", help="run one closed-loop maneuver")
    _add_config(sim)
    sim.add_argument("--mode", choices=MODES)
    sim.add_argument("--out", required=True)

    mc = sub.add_parser("montecarlo", help="run a Monte-Carlo campaign")
    _add_config(mc)
    mc.add_argument("--samples", type=int)
    mc.add_argument("--seed", type=int)
    mc.add_argument("--modes", default=",".join(MODES))
    mc.add_argument("--out", required=True)
    mc.add_argument("--keep", default="0", help="comma-separated sample indices whose logs are written")

    plot = sub.add_parser("plot", help="render a simulation log CSV as SVG")
    plot.add_argument("--log", required=True)
    plot.add_argument("--out", required=True)
    plot.add_argument("--h-max", type=float, default=None)
    return parser


def _nominal_generate(args, cfg) -> int:
    if args.optimize:
        model = cfgmod.planning_model(cfg)
        fit = optimize_shape(
            cfgmod.bounds(cfg), model.params, model, terms=args.optimize, starts=args.starts,
            seed=args.seed, envelope_fraction=args.envelope_fraction, torque_weight=args.torque_weight,
            torque_ramp=args.torque_ramp,
        )
        log.info("shape fit: peak %.1f N m s, terminal miss %.1f N m s", fit.peak_momentum, fit.terminal_error)
        cfg.set("nominal", "shape", ", ".join(repr(float(x)) for x in fit.shape.ravel()))
        print("nominal.shape = " + cfg.get("nominal", "shape"))
    try:
        traj = cfgmod.nominal(cfg, check=not args.no_check)
    except NominalLimitError as exc:
        print(exc.report.summary(), file=sys.stderr)
        return EXIT_VALIDATION
    export_csv(traj, args.out)
    print(validate(traj, cfgmod.spacecraft(cfg), float(cfg.get("nominal", "hdot_threshold"))).summary())
    return EXIT_OK


def _nominal_validate(args, cfg) -> int:
    try:
        traj = import_csv(args.traj)
    except NominalFormatError as exc:
        print(f"invalid nominal file: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    rep = validate(traj, cfgmod.spacecraft(cfg), float(cfg.get("nominal", "hdot_threshold")))
    print(rep.summary())
    return EXIT_OK if rep.passed else EXIT_VALIDATION


def _simulate(args, cfg) -> int:
    traj = cfgmod.nominal(cfg)
    sc = cfgmod.scenario(cfg, traj, args.mode)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        simlog = run(sc)
    except SimulationError as exc:
        print(f"simulation failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    simlog.to_csv(out / f"log_{sc.mode}.csv")
    data = summary(simlog, traj, sc.truth)
    write_summary(out / f"summary_{sc.mode}.json", data)
    plot_log(simlog, out / f"log_{sc.mode}.svg", sc.limits.h_max)
    term = data["terminal_errors"]
    print("mode, attitude_deg, omega_err, hc_err, H_err")
    print(", ".join([sc.mode] + table_row(TerminalErrors(**term))))
    return EXIT_OK


def _montecarlo(args, cfg) -> int:
    traj = cfgmod.nominal(cfg)
    modes = tuple(m.strip() for m in args.modes.split(",") if m.strip())
    bad = [m for m in modes if m not in MODES]
    if bad:
        print(f"unknown mode(s): {', '.join(bad)}", file=sys.stderr)
        return EXIT_USAGE
    samples = args.samples if args.samples is not None else int(cfg.get("montecarlo", "samples"))
    seed = args.seed if args.seed is not None else int(cfg.get("montecarlo", "seed"))
    keep = [int(k) for k in args.keep.split(",") if k.strip()]
    base = cfgmod.scenario(cfg, traj, modes[0] if modes else "traditional")
    try:
        result = run_campaign(
            base, cfgmod.error_spec(cfg), samples, modes, seed,
            chunk=int(cfg.get("montecarlo", "chunk")), keep_logs=keep,
        )
        code = EXIT_OK
    except CampaignError as exc:
        print(f"campaign failed: {exc}", file=sys.stderr)
        result, code = exc.result, EXIT_RUNTIME
    report(result, args.out)
    agg = result.aggregates()
    print("mode, metric, avg, max")
    for mode in result.modes:
        for metric, (avg, mx) in agg[mode].items():
            print(f"{mode}, {metric}, {avg:.4e}, {mx:.4e}")
    return code


def _plot(args) -> int:
    try:
        simlog = SimLog.from_csv(args.log)
    except (OSError, ValueError) as exc:
        print(f"cannot read log: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    plot_log(simlog, args.out, args.h_max)
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "plot":
            return _plot(args)
        cfg = cfgmod.load(args.config, args.set)
        if args.command == "nominal":
            return _nominal_generate(args, cfg) if args.action == "generate" else _nominal_validate(args, cfg)
        if args.command == "simulate":
            return _simulate(args, cfg)
        return _montecarlo(args, cfg)
    except cfgmod.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NominalLimitError as exc:
        print(f"nominal violates limits: {exc.report.summary()}", file=sys.stderr)
        return EXIT_VALIDATION
    except (NominalFormatError, ValueError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (RuntimeError, OSError, FloatingPointError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
