"""Command-line entry points."""

import argparse
import json
import sys

import numpy as np

from .config import ConfigError, load_config
from .experiment import PRESETS, run_experiment


def _cmd_run(args):
    cfg = load_config(args.config)
    code, out = run_experiment(cfg, out_dir=args.out, preset=args.preset,
                               seed=args.seed, centralized=args.centralized)
    print(f"artifacts in {out} (exit {code})")
    return code


def _cmd_check(args):
    from ..analysis import condition_report
    cfg = load_config(args.config)
    scenario, model = cfg.build()
    report = condition_report(scenario, model)
    print(json.dumps(report.to_dict(), indent=2, sort_keys=True))
    return 0 if report.certified else 2


def _make_graph(kind, n, rng):
    from ..consensus import random_strongly_connected
    if kind == "complete":
        return ~np.eye(n, dtype=bool)
    if kind == "ring":
        g = np.zeros((n, n), dtype=bool)
        for i in range(n):
            g[(i + 1) % n, i] = True
            g[(i - 1) % n, i] = True
        return g
    return random_strongly_connected(n, rng)


def _cmd_consensus_demo(args):
    from ..consensus import compute_finite_time_params, finite_time_average
    rng = np.random.default_rng(args.seed)
    graph = _make_graph(args.graph, args.nodes, rng)
    params = compute_finite_time_params(graph)
    z0 = rng.normal(size=args.nodes)
    res = finite_time_average(z0, params)
    print(f"graph={args.graph} nodes={args.nodes} horizons={params.L.tolist()}")
    print(f"initial values : {np.array2string(z0, precision=6)}")
    print(f"direct average : {z0.mean():.12g}")
    print(f"consensus value: {res.value:.12g} "
          f"(iters={res.iters_used}, messages={res.messages_total})")
    err = abs(res.value - z0.mean())
    print(f"error          : {err:.3e}")
    return 0 if err < 1e-7 else 1


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="cogneq",
        description="Joint sensing / power-allocation equilibrium harness")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment from a config file")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--preset", choices=PRESETS, default=None)
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--out", default=None)
    p_run.add_argument("--centralized", action="store_true",
                       help="bypass consensus with exact averages")
    p_run.set_defaults(func=_cmd_run)

    p_check = sub.add_parser("check", help="evaluate the analytic conditions only")
    p_check.add_argument("--config", required=True)
    p_check.set_defaults(func=_cmd_check)

    p_demo = sub.add_parser("consensus-demo",
                            help="finite-time average consensus demo")
    p_demo.add_argument("--nodes", type=int, default=5)
    p_demo.add_argument("--graph", choices=("complete", "ring", "random"),
                        default="random")
    p_demo.add_argument("--seed", type=int, default=0)
    p_demo.set_defaults(func=_cmd_consensus_demo)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
