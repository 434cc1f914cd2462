"""Command line entry point: ``python -m adages <command>``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace

from .aggregation import AggregationError
from .harness import APPENDIX_CASES, ExperimentConfig, run_appendix_cases, run_sweep
from .selections import aggregate_file, parse_indices
from .service import DEFAULT_TIMEOUT, Client, ServiceError, serve


def _cases(text):
    if text == "all":
        return list(APPENDIX_CASES)
    out = []
    for tok in text.split(","):
        k, _, d = tok.partition("x")
        out.append((int(k), int(d)))
    return out


def _print(obj):
    print(json.dumps(obj, sort_keys=True))


def cmd_run(args):
    cfg = ExperimentConfig.from_json(args.config)
    overrides = {"output": args.out}
    for name in ("seed", "reps", "workers"):
        if getattr(args, name) is not None:
            overrides[name] = getattr(args, name)
    cfg = replace(cfg, **overrides)
    res = run_sweep(cfg)
    for s in res.summaries:
        print(f"{s.method:<13} k={s.k:<3} d={s.d:<3} fdp={s.mean_fdp:.3f} "
              f"power={s.mean_power:.3f} reps={s.reps}")
    return 0


def cmd_appendix(args):
    res = run_appendix_cases(q=args.q, cases=_cases(args.cases), reps=args.reps,
                             seed=args.seed, output=args.out, workers=args.workers)
    for s in res.summaries:
        print(f"{s.method:<13} k={s.k:<3} d={s.d:<3} fdp={s.mean_fdp:.3f} power={s.mean_power:.3f}")
    return 0


def cmd_aggregate_file(args):
    _print(aggregate_file(args.infile, args.rule))
    return 0


def cmd_serve(args):
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    serve(args.bind, timeout=args.timeout, capacity=args.capacity)
    return 0


def cmd_open(args):
    with Client(args.addr) as c:
        reply = c.open(args.k, args.d, args.rule, args.timeout)
    _print(reply)
    return 1 if reply["type"] == "error" else 0


def cmd_report(args):
    with Client(args.addr) as c:
        reply = c.report(args.session, args.machine_id, args.d, parse_indices(args.selected))
        if args.wait and reply["type"] == "report":
            reply = c.wait_result(args.session, timeout=args.wait)
    _print(reply)
    return 1 if reply["type"] == "error" else 0


def cmd_poll(args):
    with Client(args.addr) as c:
        reply = c.poll(args.session)
    _print(reply)
    return 1 if reply["type"] == "error" else 0


def build_parser():
    p = argparse.ArgumentParser(prog="adages", description="Distributed knockoff selection and vote aggregation.")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a Monte-Carlo sweep from a JSON config")
    r.add_argument("--config", required=True)
    r.add_argument("--out", required=True)
    r.add_argument("--seed", type=int)
    r.add_argument("--reps", type=int)
    r.add_argument("--workers", type=int)
    r.set_defaults(func=cmd_run)

    a = sub.add_parser("appendix", help="machine-wise and aggregate results for the fixed (k, d) cases")
    a.add_argument("--q", type=float, default=0.2)
    a.add_argument("--cases", default="all", help="'all' or a list like 5x20,10x80")
    a.add_argument("--out", required=True)
    a.add_argument("--reps", type=int, default=100)
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--workers", type=int, default=1)
    a.set_defaults(func=cmd_appendix)

    g = sub.add_parser("aggregate-file", help="aggregate a selections file offline")
    g.add_argument("--rule", default="adages")
    g.add_argument("--in", dest="infile", required=True)
    g.set_defaults(func=cmd_aggregate_file)

    s = sub.add_parser("serve", help="run the aggregation coordinator")
    s.add_argument("--bind", default="127.0.0.1:7787", help="host:port; $ADAGES_BIND overrides")
    s.add_argument("--timeout", type=float, default=DEFAULT_TIMEOUT)
    s.add_argument("--capacity", type=int, default=1024)
    s.set_defaults(func=cmd_serve)

    o = sub.add_parser("open", help="open a coordinator session")
    o.add_argument("--addr", required=True)
    o.add_argument("--k", type=int, required=True)
    o.add_argument("--d", type=int, required=True)
    o.add_argument("--rule", default="adages")
    o.add_argument("--timeout", type=float)
    o.set_defaults(func=cmd_open)

    rp = sub.add_parser("report", help="submit one machine's selection")
    rp.add_argument("--addr", required=True)
    rp.add_argument("--session", required=True)
    rp.add_argument("--machine-id", type=int, required=True)
    rp.add_argument("--d", type=int, required=True)
    rp.add_argument("--selected", default="", help="comma-separated indices, e.g. 1,4,7")
    rp.add_argument("--wait", type=float, default=0, help="seconds to wait for the final result")
    rp.set_defaults(func=cmd_report)

    pl = sub.add_parser("poll", help="ask for a session's status or result")
    pl.add_argument("--addr", required=True)
    pl.add_argument("--session", required=True)
    pl.set_defaults(func=cmd_poll)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (AggregationError, ServiceError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
