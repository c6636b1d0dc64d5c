"""Command line entry point: ``mixnash {solve,check-foundations,check-sgld,rates}``.

Exit codes: 0 success, 2 bad configuration, 3 numerical failure,
4 a bound or check failed while ``--assert-bounds`` was given.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

from . import harness
from .errors import ConfigError, DomainError, NumericalError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_BOUND = 0, 2, 3, 4


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mixnash", description="Entropic mirror descent / mirror prox for mixed Nash equilibria.")
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in [
        ("solve", "run the configured solver"),
        ("check-foundations", "randomized checks of the entropic mirror-map calculus"),
        ("check-sgld", "Langevin sampler sanity check on a standard Gaussian"),
        ("rates", "run MD and MP on the configured game and fit rates"),
    ]:
        s = sub.add_parser(name, help=help_)
        s.add_argument("--config", help="INI-style config file")
        s.add_argument("--seed", type=int, help="override experiment.seed")
        s.add_argument("--out", default="out", help="output directory (default: out)")
        s.add_argument("--trace-stride", type=int, help="override experiment.trace_stride")
        s.add_argument("--assert-bounds", action="store_true", help="exit 4 if a bound or check fails")
    return p


def _load(args) -> harness.ExperimentConfig:
    cfg = harness.ExperimentConfig.load(args.config) if args.config else harness.ExperimentConfig.parse("")
    if args.seed is not None:
        cfg.set("experiment", "seed", args.seed)
    if args.trace_stride is not None:
        if args.trace_stride < 1:
            raise ConfigError("--trace-stride must be >= 1", key="experiment.trace_stride")
        cfg.set("experiment", "trace_stride", args.trace_stride)
    return cfg


def _failed(summary: dict) -> bool:
    if "bound_satisfied" in summary:
        return summary["bound_satisfied"] is False
    if "all_pass" in summary:
        return not summary["all_pass"]
    return False


def _dispatch(args, cfg) -> list[dict]:
    if args.command == "check-foundations":
        cfg.set("experiment", "solver", "foundations")
    elif args.command == "check-sgld":
        cfg.set("experiment", "solver", "sgld_check")
    if args.command != "rates":
        return [harness.run(cfg, args.out)]
    out = []
    for solver in ("md", "mp"):
        cfg.set("experiment", "solver", solver)
        out.append(harness.run(cfg, os.path.join(args.out, solver)))
    return out


def _short(summary: dict) -> dict:
    keep = ("solver", "final_gap", "slope", "bound_satisfied", "worst_ratio", "all_pass",
            "mean", "variance", "ks_statistic", "diagnostic_final", "binned_tv_w", "binned_tv_theta")
    return {k: summary[k] for k in keep if k in summary}


def _error(out_dir, kind, exc, key=None):
    body = {"error": kind, "message": str(exc)}
    if key is not None:
        body["key"] = key
    if getattr(exc, "context", None):
        body["context"] = exc.context
    text = json.dumps(body, sort_keys=True, default=str)
    print(text, file=sys.stderr)
    try:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "error.json"), "w") as fh:
            fh.write(text + "\n")
    except OSError:
        pass


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = _load(args)
        if args.command == "rates" and cfg.get("experiment", "solver") not in ("md", "mp"):
            raise ConfigError("rates runs matrix-game solvers only", key="experiment.solver")
        summaries = _dispatch(args, cfg)
    except ConfigError as exc:
        _error(args.out, "config", exc, exc.key)
        return EXIT_CONFIG
    except (NumericalError, FloatingPointError) as exc:
        _error(args.out, "numerical", exc)
        return EXIT_NUMERIC
    except (DomainError, ValueError) as exc:
        _error(args.out, "config", exc, "problem")
        return EXIT_CONFIG
    for s in summaries:
        print(json.dumps(harness._jsonable(_short(s)), sort_keys=True))
    if args.assert_bounds and any(_failed(s) for s in summaries):
        return EXIT_BOUND
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
