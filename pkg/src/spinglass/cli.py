"""Command-line entry point.

Each subcommand maps to one experiment.  A TOML config file supplies any
parameter; command-line flags override config values ("flags win").
`--print-config` dumps the fully resolved config as JSON and exits.

Exit codes: 0 all verdicts pass, 1 a statistical check failed, 2 validation
or system error.
"""

from __future__ import annotations

import argparse
import json
import sys

import tomli

from .errors import SpinGlassError, ValidationError
from .harness import (EXPERIMENTS, RunConfig, canonical_json, output_root,
                      run_experiment, summary_text)

_JSON_FLAGS = ("window", "dist", "sides", "sides_list", "n_list", "monomial",
               "j_prime", "atoms", "observables", "betas", "matrix", "weights")
_FLOAT_FLAGS = ("beta", "beta_w", "lam", "tol", "scale")
_INT_FLAGS = ("d", "n_draws", "n_j", "n_replicas", "n_perturbations")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spinglass",
        description="Spin-glass overlap-structure experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        _add_common(p)
    rep = sub.add_parser("report", help="re-emit reports for a finished run")
    rep.add_argument("rundir")
    rep.add_argument("--format", default="summary",
                     choices=["json", "csv", "summary", "all"])
    return parser


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="TOML config file")
    p.add_argument("--seed", type=int)
    p.add_argument("--outdir")
    p.add_argument("--threads", type=int)
    p.add_argument("--print-config", action="store_true",
                   help="print the resolved config as JSON and exit")
    for flag in _JSON_FLAGS:
        p.add_argument(f"--{flag.replace('_', '-')}", dest=flag,
                       help="JSON value (overrides config)")
    for flag in _FLOAT_FLAGS:
        p.add_argument(f"--{flag.replace('_', '-')}", dest=flag, type=float)
    for flag in _INT_FLAGS:
        p.add_argument(f"--{flag.replace('_', '-')}", dest=flag, type=int)


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """TOML config (if any) overlaid with command-line flags."""
    file_cfg: dict = {}
    if args.config:
        with open(args.config, "rb") as fh:
            file_cfg = tomli.load(fh)
    params = dict(file_cfg.get("params", {}))
    for flag in _JSON_FLAGS:
        val = getattr(args, flag, None)
        if val is not None:
            try:
                params[flag] = json.loads(val)
            except json.JSONDecodeError:
                params[flag] = val  # bare string, e.g. a file path
    for flag in _FLOAT_FLAGS + _INT_FLAGS:
        val = getattr(args, flag, None)
        if val is not None:
            params[flag] = val
    seed = args.seed if args.seed is not None else int(file_cfg.get("seed", 0))
    outdir = args.outdir or file_cfg.get("outdir")
    threads = args.threads or int(file_cfg.get("threads", 1))
    return RunConfig(experiment=args.command, params=params, seed=seed,
                     outdir=outdir, threads=threads)


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "report":
        return _reemit(args)
    try:
        cfg = resolve_config(args)
        if args.print_config:
            print(canonical_json({**cfg.hashed_view(),
                                  "outdir": output_root(cfg),
                                  "threads": cfg.threads}))
            return 0
        record = run_experiment(cfg)
    except ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return 2
    except (SpinGlassError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    sys.stdout.write(summary_text(record))
    ok = all(v.endswith("pass") for v in record.verdict_summary.values())
    return 0 if ok else 1


def _reemit(args) -> int:
    import os

    from .harness import ResultRecord, emit_report, is_complete
    from .stability import MomentStat, StabilityReport
    if not is_complete(args.rundir):
        print(f"error: {args.rundir} is not a complete run", file=sys.stderr)
        return 2
    with open(os.path.join(args.rundir, "record.json")) as fh:
        raw = json.load(fh)
    reports = []
    for r in raw["reports"]:
        reports.append(StabilityReport(
            test=r["test"], params=r["params"],
            moments=[MomentStat(name=m["name"], value_a=m["value_a"],
                                value_b=m["value_b"], stderr=m["stderr"])
                     for m in r["moments"]],
            ks_stat=r.get("ks_stat"), ess=r.get("ess"),
            verdict=r["verdict"], flags=r.get("flags", []),
            extra=r.get("extra", {}),
            schema_version=r.get("schema_version", 1)))
    record = ResultRecord(config_hash=raw["config_hash"],
                          input_id=raw["input_id"], reports=reports,
                          verdict_summary=raw["verdict_summary"])
    for path in emit_report(record, args.format, args.rundir):
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
