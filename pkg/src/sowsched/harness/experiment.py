"""Config-driven experiment runs with manifest-first output."""
from __future__ import annotations

import csv
import hashlib
import json
import platform
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .. import __version__
from ..benchmark import competitive_ratio, opt_hindsight, realize
from ..core import Instance, SignalModel, validate_instance
from ..errors import ConfigError, PreconditionWarning, SizeExceeded
from ..fixtures import fix_a, fix_b
from ..instances import dumps_instance, instance_from_dict, instance_hash, load_instance, params_from_dict
from ..mechanism import write_job_summary, write_trace
from ..reduction import make_oracle, run_reduction
from .generators import gen_adversarial, gen_stochastic, random_instance, random_prior

METRIC_FIELDS = ["run_id", "eps", "C", "welfare", "simulated_welfare", "opt", "evictions", "desyncs", "ratio"]
VARIANTS = ("adversarial", "stochastic")
RELAXED = {"expPrice": "exp", "bundlePrice": "bundle", "exp": "exp", "bundle": "bundle"}


@dataclass
class ExperimentConfig:
    instance: dict
    variant: str = "adversarial"
    relaxed: str = "expPrice"
    eps: float | None = None
    oracle: dict = field(default_factory=lambda: {"kind": "exact"})
    replications: int = 1
    seed: int = 0
    seeds: list | None = None
    compute_opt: bool = True
    out: str = "out"
    run_id: str = "run"
    base_dir: str = "."

    @classmethod
    def from_dict(cls, d: dict, base_dir=".") -> "ExperimentConfig":
        known = {f for f in cls.__dataclass_fields__}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        if "instance" not in d:
            raise ConfigError("config needs an 'instance' entry")
        return cls(**{**d, "base_dir": str(d.get("base_dir", base_dir))})

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        try:
            data = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(data, base_dir=path.parent)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("base_dir")
        return d

    def seed_list(self) -> list[int]:
        if self.seeds is not None:
            return [int(s) for s in self.seeds]
        return [self.seed + k for k in range(self.replications)]

    def config_hash(self) -> str:
        text = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(text.encode()).hexdigest()[:16]


def load_config_instance(cfg: ExperimentConfig) -> Instance:
    src = dict(cfg.instance)
    if "file" in src:
        return load_instance(Path(cfg.base_dir) / src["file"])
    if "inline" in src:
        return instance_from_dict(src["inline"])
    gen = src.get("generator")
    if gen == "fix_a":
        return fix_a()
    if gen == "fix_b":
        return fix_b(int(src.get("x", 3)))
    if gen not in ("adversarial", "random", "stochastic"):
        raise ConfigError(f"unknown instance source {src!r}")
    if "params" not in src:
        raise ConfigError(f"generator {gen!r} needs 'params'")
    params = params_from_dict(src["params"])
    seed = int(src.get("seed", cfg.seed))
    jobs = int(src.get("jobs", 4))
    if gen == "adversarial":
        return gen_adversarial(seed, params, jobs, src.get("pattern", "burst"))
    if gen == "random":
        return random_instance(seed, params, jobs, int(src.get("max_support", 3)))
    rng = np.random.default_rng(np.random.SeedSequence([seed, 11]))
    rounds = sorted(rng.integers(1, max(2, params.horizon - params.max_latency), size=jobs))
    births = {j: int(b) for j, b in enumerate(rounds)}
    priors = {j: random_prior(rng, params, b, int(src.get("prior_size", 2))) for j, b in births.items()}
    return gen_stochastic(seed, priors, births, params)


def validate_config(cfg: ExperimentConfig, instance: Instance | None = None) -> Instance:
    """Check the config and its instance; raises ConfigError before anything runs."""
    if cfg.variant not in VARIANTS:
        raise ConfigError(f"variant must be one of {VARIANTS}, got {cfg.variant!r}")
    if cfg.relaxed not in RELAXED:
        raise ConfigError(f"relaxed algorithm must be one of {sorted(RELAXED)}, got {cfg.relaxed!r}")
    if cfg.oracle.get("kind") not in ("exact", "sampled"):
        raise ConfigError(f"oracle kind must be exact or sampled, got {cfg.oracle.get('kind')!r}")
    if cfg.replications < 1 and cfg.seeds is None:
        raise ConfigError("replications must be >= 1")
    if cfg.eps is not None and not 0 < cfg.eps < 1:
        raise ConfigError("eps must lie in (0, 1)")
    inst = load_config_instance(cfg) if instance is None else instance
    if RELAXED[cfg.relaxed] == "bundle":
        if cfg.variant != "stochastic":
            raise ConfigError("bundlePrice runs only in the stochastic variant")
        if inst.params.signal_model is not SignalModel.FULL_DURATION:
            raise ConfigError("bundlePrice needs durations revealed on arrival (full_duration signals)")
    if cfg.variant == "stochastic" and any(b.prior is None for b in inst.births):
        raise ConfigError("stochastic variant needs a prior for every job")
    bad = validate_instance(inst)
    if bad:
        jid, v = bad[0]
        raise ConfigError(f"invalid instance: job {jid}: {v.code}: {v.message}")
    return inst


def oracle_from_config(cfg: ExperimentConfig):
    o = cfg.oracle
    return make_oracle(o["kind"], o.get("eps0", 0.1), o.get("delta0", 0.1), o.get("samples"))


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x)
    return x


def replicate(cfg: ExperimentConfig, inst: Instance, seed: int, cache=None):
    """One replication: resample SoWs (stochastic variant), run, and score."""
    if cfg.variant == "stochastic":
        priors = {b.job_id: b.prior for b in inst.births}
        inst = gen_stochastic(seed, priors, {b.job_id: b.birth for b in inst.births}, inst.params)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", PreconditionWarning)
        res = run_reduction(inst, RELAXED[cfg.relaxed], cfg.eps, oracle_from_config(cfg), seed, cache=cache)
    opt = None
    if cfg.compute_opt:
        real = {j.job_id: j.realized for j in res.mech.jobs.values()}
        try:
            opt = opt_hindsight(realize(inst.births, real), inst.params)[0]
        except SizeExceeded:
            opt = None
    return inst, res, opt


def run_experiment(cfg: ExperimentConfig, out: str | Path | None = None) -> dict:
    """Run every replication and write manifest, instance, traces and metrics under ``out``."""
    inst = validate_config(cfg)
    out = Path(cfg.out if out is None else out)
    (out / "traces").mkdir(parents=True, exist_ok=True)
    (out / "jobs").mkdir(exist_ok=True)
    seeds = cfg.seed_list()
    manifest = {
        "run_id": cfg.run_id,
        "config": cfg.to_dict(),
        "config_hash": cfg.config_hash(),
        "instance_hash": instance_hash(inst),
        "seeds": seeds,
        "versions": {
            "sowsched": __version__,
            "numpy": np.__version__,
            "python": platform.python_version(),
        },
        "files": {
            "instance": "instance.json",
            "metrics": "metrics.csv",
            "traces": [f"traces/rep_{s}.jsonl" for s in seeds],
            "jobs": [f"jobs/rep_{s}.csv" for s in seeds],
        },
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    (out / "instance.json").write_text(dumps_instance(inst))
    rows = []
    cache: dict = {}
    eps = inst.params.epsilon if cfg.eps is None else cfg.eps
    for s in seeds:
        _, res, opt = replicate(cfg, inst, s, cache)
        write_trace(res.mech.trace, out / "traces" / f"rep_{s}.jsonl")
        write_job_summary(res.mech, out / "jobs" / f"rep_{s}.csv")
        m = res.metrics
        w = m["welfare"]
        ratio = None if opt is None else (opt / w if w > 0 else (1.0 if opt == 0 else float("inf")))
        rows.append({
            "run_id": f"{cfg.run_id}-{s}",
            "eps": eps,
            "C": m["C"],
            "welfare": w,
            "simulated_welfare": m["simulated_welfare"],
            "opt": opt,
            "evictions": m["evictions"],
            "desyncs": m["desyncs"],
            "ratio": ratio,
        })
    with open(out / "metrics.csv", "w", newline="") as fh:
        wr = csv.DictWriter(fh, fieldnames=METRIC_FIELDS)
        wr.writeheader()
        wr.writerows({k: _fmt(v) for k, v in r.items()} for r in rows)
    summary = None
    if cfg.compute_opt and all(r["opt"] is not None for r in rows):
        summary = competitive_ratio([r["welfare"] for r in rows], [r["opt"] for r in rows]).to_dict()
    return {"out": str(out), "rows": rows, "summary": summary, "manifest": manifest}
