"""Command-line entry point: ``sowsched {run,audit,bench,estimate,validate}``."""
from __future__ import annotations

import argparse
import json
import sys
import warnings
from pathlib import Path

from ..benchmark import competitive_ratio
from ..core import validate_instance
from ..errors import PreconditionWarning, SowschedError
from ..estimator import table_to_dict
from ..instances import load_instance
from ..reduction import run_reduction
from .audit import MisreportSpace, audit_truthfulness
from .experiment import RELAXED, ExperimentConfig, oracle_from_config, replicate, run_experiment, validate_config


def _config(args) -> ExperimentConfig:
    if args.config:
        cfg = ExperimentConfig.load(args.config)
    elif getattr(args, "instance", None):
        cfg = ExperimentConfig.from_dict({"instance": {"file": str(Path(args.instance).resolve())}})
    else:
        raise SowschedError("need --config (or --instance)")
    if args.seed is not None:
        cfg.seed = args.seed
        cfg.seeds = None
    if args.replications is not None:
        cfg.replications = args.replications
        cfg.seeds = None
    if args.oracle is not None:
        cfg.oracle = {**cfg.oracle, "kind": args.oracle}
    if args.eps is not None:
        cfg.eps = args.eps
    return cfg


def _emit(obj, out: str | None, name: str):
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if out:
        Path(out).mkdir(parents=True, exist_ok=True)
        (Path(out) / name).write_text(text)
    sys.stdout.write(text)


def cmd_run(args) -> int:
    cfg = _config(args)
    res = run_experiment(cfg, args.out)
    print(f"wrote {len(res['rows'])} replication(s) to {res['out']}")
    if res["summary"] is not None:
        print(f"mean ratio {res['summary']['mean']:.4f}")
    return 0


def cmd_audit(args) -> int:
    cfg = _config(args)
    inst = validate_config(cfg)
    jobs = [args.job] if args.job is not None else [b.job_id for b in inst.births]
    o = cfg.oracle
    results = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", PreconditionWarning)
        for jid in jobs:
            r = audit_truthfulness(inst, jid, MisreportSpace(), oracle_from_config(cfg), cfg.seed, RELAXED[cfg.relaxed], cfg.eps)
            results.append(r.to_dict())
    _emit({"oracle": o, "grid": MisreportSpace().to_dict(), "jobs": results}, args.out, "audit.json")
    return 0


def cmd_bench(args) -> int:
    cfg = _config(args)
    cfg.compute_opt = True
    inst = validate_config(cfg)
    welfare, opt = [], []
    cache: dict = {}
    for s in cfg.seed_list():
        _, res, o = replicate(cfg, inst, s, cache)
        if o is None:
            raise SowschedError("instance exceeds the hindsight search caps")
        welfare.append(res.metrics["welfare"])
        opt.append(o)
    summary = competitive_ratio(welfare, opt)
    _emit({"seeds": cfg.seed_list(), "welfare": welfare, "opt": opt, "ratio": summary.to_dict()}, args.out, "bench.json")
    return 0


def cmd_estimate(args) -> int:
    cfg = _config(args)
    inst = validate_config(cfg)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", PreconditionWarning)
        res = run_reduction(inst, RELAXED[cfg.relaxed], cfg.eps, oracle_from_config(cfg), cfg.seed, cache={})
    tables = []
    for jid, table in res.policy.raw_tables.items():
        job = res.mech.jobs[jid]
        tables.append(table_to_dict(table, job.birth, job.demand, key=f"job {jid}"))
    _emit({"oracle": cfg.oracle, "seed": cfg.seed, "tables": tables}, args.out, "estimates.json")
    return 0


def cmd_validate(args) -> int:
    if args.instance:
        inst = load_instance(args.instance)
        problems = [{"job_id": j, "code": v.code, "message": v.message} for j, v in validate_instance(inst)]
    else:
        cfg = _config(args)
        try:
            validate_config(cfg)
            problems = []
        except SowschedError as exc:
            problems = [{"job_id": None, "code": type(exc).__name__, "message": str(exc)}]
    for p in problems:
        print(f"job {p['job_id']}: {p['code']}: {p['message']}")
    if not problems:
        print("ok")
    return 1 if problems else 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="experiment config (JSON)")
    common.add_argument("--seed", type=int, help="base seed (overrides the config)")
    common.add_argument("--out", metavar="DIR", help="output directory")
    common.add_argument("--replications", type=int, help="number of replications")
    common.add_argument("--oracle", choices=["exact", "sampled"], help="failure-probability oracle")
    common.add_argument("--eps", type=float, help="reduction slack in (0, 1)")
    common.add_argument("--instance", metavar="PATH", help="instance file (instead of --config)")

    p = argparse.ArgumentParser(prog="sowsched", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="run an experiment from a config").set_defaults(fn=cmd_run)
    a = sub.add_parser("audit", parents=[common], help="truthfulness audit over a misreport grid")
    a.add_argument("--job", type=int, help="audit only this job id")
    a.set_defaults(fn=cmd_audit)
    sub.add_parser("bench", parents=[common], help="hindsight OPT and competitive ratios").set_defaults(fn=cmd_bench)
    sub.add_parser("estimate", parents=[common], help="dump the oracle tables seen by each job").set_defaults(fn=cmd_estimate)
    sub.add_parser("validate", parents=[common], help="lint an instance or config").set_defaults(fn=cmd_validate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except SowschedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (AssertionError, RuntimeError) as exc:
        print(f"fatal: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
