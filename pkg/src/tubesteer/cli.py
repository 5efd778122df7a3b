"""Command-line front end: a thin layer over the core package.

Exit codes for `run`: 0 success, 2 collision, 3 solver failure,
4 configuration error.
"""

from __future__ import annotations

import argparse
import dataclasses
import glob
import os
import sys

from .identify import estimate_disturbance_set
from .metrics import compare_metrics, compute_metrics, csv_metrics
from .outputs import emit_outputs, metrics_text, parse_run_csv
from .scenario import ConfigError, load_scenario
from .simulate import run_scenario

EXIT_CONFIG_ERROR = 4


def cmd_run(args) -> int:
    try:
        config = load_scenario(args.scenario)
        overrides = {}
        if args.mode:
            overrides["mode"] = args.mode
        if args.seed is not None:
            overrides["seed"] = args.seed
        if args.noise:
            overrides["sensor_noise"] = args.noise == "on"
        if overrides:
            config = dataclasses.replace(config, **overrides)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG_ERROR

    log = run_scenario(config)
    metrics = compute_metrics(log)
    out_dir = args.out or f"out_{config.name}_{config.mode}"
    paths = emit_outputs(log, metrics, out_dir)
    print(metrics_text(metrics), end="")
    print(f"wrote {paths['csv']}")
    if log.collision:
        print("collision detected", file=sys.stderr)
    if log.truncated_reason:
        print(f"truncated: {log.truncated_reason}", file=sys.stderr)
    return log.exit_code


def cmd_identify_w(args) -> int:
    try:
        files = sorted(glob.glob(os.path.join(args.trial_dir, "*.cfg")))
        if not files:
            print(f"no .cfg trials in {args.trial_dir}", file=sys.stderr)
            return EXIT_CONFIG_ERROR
        configs = [load_scenario(f) for f in files]
        margin = [float(tok) for tok in args.sensor_margin.split()] \
            if args.sensor_margin else None
        W, fragment = estimate_disturbance_set(configs, margin)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(fragment)
        print(f"wrote {args.out}")
    print(fragment, end="")
    return 0


def _load_csv(path):
    with open(path) as fh:
        return parse_run_csv(fh.read())


def cmd_metrics(args) -> int:
    try:
        if args.scenario:
            # full metrics need the scenario context; re-derive from the log
            config = load_scenario(args.scenario)
            header, data = _load_csv(args.run_csv)
            m = csv_metrics(header, data)
            m["scenario"] = config.name
        else:
            m = csv_metrics(*_load_csv(args.run_csv))
    except (ConfigError, ValueError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    print(metrics_text(m), end="")
    return 0


def cmd_compare(args) -> int:
    try:
        ma = csv_metrics(*_load_csv(args.run_a))
        mb = csv_metrics(*_load_csv(args.run_b))
    except (ValueError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    print(metrics_text(compare_metrics(ma, mb)), end="")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    uvicorn.run("tubesteer.service:app", host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tubesteer",
                                description="robust tube-MPC obstacle avoidance harness")
    sub = p.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="simulate one scenario")
    run_p.add_argument("scenario")
    run_p.add_argument("--mode", choices=["rmpc", "dmpc"])
    run_p.add_argument("--out", help="output directory")
    run_p.add_argument("--seed", type=int)
    run_p.add_argument("--noise", choices=["on", "off"])
    run_p.set_defaults(func=cmd_run)

    id_p = sub.add_parser("identify-w", help="estimate the disturbance bound from trials")
    id_p.add_argument("trial_dir")
    id_p.add_argument("--sensor-margin", help="5 additive margins, space separated")
    id_p.add_argument("--out", help="write the fragment to this file")
    id_p.set_defaults(func=cmd_identify_w)

    m_p = sub.add_parser("metrics", help="metrics from a run.csv")
    m_p.add_argument("run_csv")
    m_p.add_argument("--scenario", help="scenario file for context")
    m_p.set_defaults(func=cmd_metrics)

    c_p = sub.add_parser("compare", help="compare two run.csv files")
    c_p.add_argument("run_a")
    c_p.add_argument("run_b")
    c_p.set_defaults(func=cmd_compare)

    s_p = sub.add_parser("serve", help="start the HTTP service")
    s_p.add_argument("--host", default="127.0.0.1")
    s_p.add_argument("--port", type=int, default=8000)
    s_p.set_defaults(func=cmd_serve)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
