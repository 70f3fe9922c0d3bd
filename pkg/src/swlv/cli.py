"""Command-line entry point.

Exit codes: 0 ok, 2 config error, 3 runtime error, 4 analysis error.
"""

from __future__ import annotations

import argparse
import signal
import sys
from pathlib import Path

import numpy as np

from .analysis import (detect_cycles, fit_lv, fit_report, integrate_lv, phase_lag,
                       read_population_csv, write_fit_report)
from .config import Mode, bundled_names, load_config
from .engine import Simulation, run
from .errors import AnalysisError, ConfigError, FormatError, NoCycleError, SwlvError
from .learner import load_checkpoint
from .plotting import plot

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_ANALYSIS = 0, 2, 3, 4


def _prepare(config, seed, steps, no_learning):
    cfg = load_config(config)
    if seed is not None:
        cfg.engine.seed = int(seed)
    if steps is not None:
        if steps < 1:
            raise ConfigError("--steps", "must be >= 1")
        cfg.engine.total_steps = int(steps)
    if no_learning:
        cfg.learner.learning_enabled = False
    return cfg


def _launch(cfg, outdir, subcommand, config, init_checkpoint=None, resume=False):
    cfg.validate()
    net = None
    if init_checkpoint:
        try:
            net = load_checkpoint(init_checkpoint)
        except OSError as exc:
            raise ConfigError("--init-checkpoint", str(exc)) from None
    sim = Simulation(cfg, net=net)
    manifest = {"subcommand": subcommand, "config_path": str(config)}
    if init_checkpoint:
        manifest["extra"] = {"init_checkpoint": str(init_checkpoint)}
    return run(sim, outdir, resume=resume, manifest=manifest)


def cmd_run_dynamics(config, seed=None, outdir="run", steps=None, init_checkpoint=None,
                     no_learning=False, resume=False):
    cfg = _prepare(config, seed, steps, no_learning)
    if cfg.engine.mode not in (Mode.DYNAMICS, Mode.TRANSFER):
        raise ConfigError("engine.mode", f"run-dynamics needs DYNAMICS or TRANSFER, got {cfg.engine.mode.value}")
    if cfg.engine.mode is Mode.TRANSFER and not init_checkpoint and not resume:
        raise ConfigError("--init-checkpoint", "TRANSFER mode needs a trained checkpoint")
    return _launch(cfg, outdir, "run-dynamics", config, init_checkpoint, resume)


def cmd_run_grouping(config, seed=None, outdir="run", steps=None, init_checkpoint=None,
                     no_learning=False, resume=False):
    cfg = _prepare(config, seed, steps, no_learning)
    cfg.engine.mode = Mode.GROUPING
    cfg.engine.eternal_longevity = True
    return _launch(cfg, outdir, "run-grouping", config, init_checkpoint, resume)


def cmd_run_ablation(config, seed=None, outdir="run", steps=None, init_checkpoint=None,
                     no_learning=False, resume=False):
    cfg = _prepare(config, seed, steps, no_learning)
    cfg.engine.mode = Mode.ABLATION
    return _launch(cfg, outdir, "run-ablation", config, init_checkpoint, resume)


def cmd_fit_lv(population_csv, window=None, outdir="."):
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    recs = read_population_csv(population_csv)
    fit = fit_lv(recs, window)
    p = np.array([r.n_prey for r in recs], dtype=float)
    q = np.array([r.n_predators for r in recs], dtype=float)
    try:
        lag = phase_lag(p, q)
    except NoCycleError:
        lag = float("nan")
    cycles, _ = detect_cycles(q)
    values = fit_report(fit, lag, cycles)
    write_fit_report(outdir / "fit.txt", values)
    t = np.array([r.t for r in recs], dtype=float)
    overlay = outdir / "lv_overlay.csv"
    lines = ["t,p,q"]
    if fit.params.is_oscillatory():
        dt = float(t[1] - t[0])
        sub = 10
        _, ps, qs = integrate_lv(fit.params, p[0], q[0], dt / sub, (len(t) - 1) * sub)
        lines += [f"{ti:g},{pi:.6f},{qi:.6f}" for ti, pi, qi in zip(t, ps[::sub], qs[::sub])]
    overlay.write_text("\n".join(lines) + "\n")
    return values


def cmd_plot(csv_path, kind, outfile, overlay=None, events=None):
    if kind == "grouping" and events is None:
        sibling = Path(csv_path).with_name("events.csv")
        events = sibling if sibling.exists() else None
    return plot(csv_path, kind, outfile, overlay, events)


def _run_args(sp):
    sp.add_argument("--config", required=True, help="bundled config name or path")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--steps", type=int)
    sp.add_argument("--out", required=True, help="run directory")
    sp.add_argument("--init-checkpoint")
    sp.add_argument("--no-learning", action="store_true")
    sp.add_argument("--resume", action="store_true", help="continue from the run directory's snapshot")


def build_parser():
    ap = argparse.ArgumentParser(prog="swlv", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("run-dynamics", "run-grouping", "run-ablation"):
        _run_args(sub.add_parser(name))
    fp = sub.add_parser("fit-lv")
    fp.add_argument("population_csv")
    fp.add_argument("--window", type=int)
    fp.add_argument("--out", default=".")
    pp = sub.add_parser("plot")
    pp.add_argument("csv")
    pp.add_argument("--kind", required=True, choices=["timeseries", "phase", "grouping"])
    pp.add_argument("--out", required=True)
    pp.add_argument("--overlay")
    pp.add_argument("--events")
    sub.add_parser("configs", help="list bundled configs")
    return ap


def _sigterm(signum, frame):
    raise KeyboardInterrupt


def main(argv=None):
    args = build_parser().parse_args(argv)
    signal.signal(signal.SIGTERM, _sigterm)
    try:
        if args.command == "configs":
            print("\n".join(bundled_names()))
            return EXIT_OK
        if args.command.startswith("run-"):
            fn = {"run-dynamics": cmd_run_dynamics, "run-grouping": cmd_run_grouping,
                  "run-ablation": cmd_run_ablation}[args.command]
            art = fn(args.config, args.seed, args.out, args.steps, args.init_checkpoint,
                     args.no_learning, args.resume)
            if art.interrupted:
                print(f"interrupted at t={art.summary.get('steps')}; resume with --resume", file=sys.stderr)
                return EXIT_RUNTIME
            print(f"wrote {args.out} ({art.summary.get('steps')} steps)")
            return EXIT_OK
        if args.command == "fit-lv":
            values = cmd_fit_lv(args.population_csv, args.window, args.out)
            print(" ".join(f"{k}={values[k]:.6g}" for k in ("alpha", "beta", "delta", "gamma_lv")))
            return EXIT_OK
        if args.command == "plot":
            cmd_plot(args.csv, args.kind, args.out, args.overlay, args.events)
            return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except AnalysisError as exc:
        print(f"analysis error: {exc}", file=sys.stderr)
        return EXIT_ANALYSIS
    except (FormatError, SwlvError, OSError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
