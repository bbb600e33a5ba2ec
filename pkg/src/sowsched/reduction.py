"""Drive the mechanism from a relaxed menu-based algorithm.

The relaxed algorithm runs at supply ``C (1 - eps/10)``.  Each new job sees
the relaxed algorithm's prices for full-width intervals, plus oracle failure
estimates with small probabilities rounded down to zero.  After the job picks
its launch plan, the allocation that plan induces on the job's fractional
relaxation is forced into the relaxed algorithm.  Jobs whose forced
allocation is not surplus-maximising (or is refused) are counted as desyncs.
"""
from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .core import Instance, InstanceParams, relax_sow, rng_stream
from .errors import ConfigError, PreconditionWarning, RejectedOverride
from .estimator import (
    ExactOracle,
    SampledOracle,
    estimates_for_demand,
    reachable_entries,
    take_snapshot,
)
from .mechanism import FailureEstimates, InfoPolicy, Mechanism
from .relaxed import BundlePriceAlgorithm, ExpPriceAlgorithm, plan_allocation


def threshold_f(q, eps: float):
    """``q`` if ``q > eps/10`` else 0; works elementwise on arrays."""
    if np.ndim(q) == 0:
        return float(q) if q > eps / 10 else 0.0
    q = np.asarray(q, dtype=float)
    return np.where(q > eps / 10, q, 0.0)


def reduced_supply(capacity: float, eps: float) -> float:
    return capacity * (1 - eps / 10)


def capacity_precondition(params: InstanceParams, eps: float, kappa: float = 1.0) -> bool:
    need = kappa * params.max_demand * eps**-2 * math.log(1 / eps + params.max_latency)
    return params.capacity >= need


@dataclass
class SyncRecord:
    job_id: int
    round: int
    forced_surplus: float
    best_surplus: float
    zero_estimates: bool
    rejected: bool

    @property
    def in_n(self) -> bool:
        if self.rejected:
            return False
        tol = 1e-9 * max(1.0, abs(self.best_surplus))
        return self.forced_surplus >= self.best_surplus - tol


class ReductionPolicy(InfoPolicy):
    def __init__(self, alg, eps: float, oracle=None, seed: int = 0, threshold: bool = True, cache=None):
        self.alg = alg
        self.eps = eps
        self.oracle = oracle if oracle is not None else ExactOracle()
        self.seed = seed
        self.threshold = threshold
        self.cache = cache
        self.sync_log: list[SyncRecord] = []
        self.raw_tables: dict = {}

    def failure_table(self, mech: Mechanism, demand: int, job_id=None) -> np.ndarray:
        snap = take_snapshot(mech)
        if job_id is None:
            rng = rng_stream(self.seed, mech.round, "oracle-round")
        else:
            rng = rng_stream(self.seed, job_id, "oracle")
        key = None
        if self.cache is not None:
            key = (snap.key(), demand, self.oracle.kind,
                   None if self.oracle.kind == "exact" else (self.seed, job_id))
            hit = self.cache.get(key)
            if hit is not None:
                return hit
        table = self.oracle.table(snap, demand, rng)
        if key is not None:
            self.cache[key] = table
        return table

    def announce(self, mech, sow, job_id=None):
        t = mech.round
        menu = self.alg.menu(t)
        raw = self.failure_table(mech, sow.demand, job_id)
        self.raw_tables[job_id] = raw
        table = threshold_f(raw, self.eps) if self.threshold else raw
        est = estimates_for_demand(table, t, mech.params, sow.demand,
                                   reachable_entries(sow, t, mech.params))
        return menu, est

    def record(self, mech, job):
        fs = relax_sow(job.reported_sow)
        x = plan_allocation(fs, job.plan)
        _, best = self.alg.quote(fs)
        forced = x.value(fs) - self.alg.aggregate_price(x)
        zero = all(
            job.est.prob(job.birth + k, job.demand, d) == 0.0
            for k, d in reachable_entries(job.reported_sow, job.birth, mech.params)
        )
        rejected = False
        try:
            self.alg.force(fs, x, job.job_id)
        except RejectedOverride:
            rejected = True
        self.sync_log.append(SyncRecord(job.job_id, job.birth, forced, best, zero, rejected))


def update_info(policy: ReductionPolicy, mech: Mechanism, job=None):
    """Record ``job`` (if any) with the relaxed algorithm, then return the
    current menu and full thresholded failure table for every demand."""
    if job is not None:
        policy.record(mech, job)
    p = mech.params
    menu = policy.alg.menu(mech.round)
    est = FailureEstimates.filled(mech.round, p, 1.0)
    for c in range(1, p.max_demand + 1):
        raw = policy.failure_table(mech, c)
        est.table[:, c - 1, :] = threshold_f(raw, policy.eps) if policy.threshold else raw
    return menu, est


def make_algorithm(kind: str, instance: Instance, supply: float):
    if kind in ("exp", "exp_price", "expPrice"):
        return ExpPriceAlgorithm(instance.params, supply)
    if kind in ("bundle", "bundle_price", "bundlePrice"):
        return BundlePriceAlgorithm.from_priors(instance.births, instance.params, supply)
    raise ConfigError(f"unknown relaxed algorithm {kind!r}")


def make_oracle(kind: str, eps0: float = 0.1, delta0: float = 0.1, samples=None):
    if kind == "exact":
        return ExactOracle()
    if kind == "sampled":
        return SampledOracle(eps0, delta0, samples)
    raise ConfigError(f"unknown oracle {kind!r}")


@dataclass
class ReductionResult:
    mech: Mechanism
    policy: ReductionPolicy
    metrics: dict = field(default_factory=dict)
    round_seconds: list = field(default_factory=list)


def run_reduction(
    instance: Instance,
    relaxed="exp",
    eps: float | None = None,
    oracle=None,
    seed: int = 0,
    kappa: float = 1.0,
    threshold: bool = True,
    cache=None,
    reports=None,
    realizations=None,
) -> ReductionResult:
    """Run the mechanism on ``instance`` with menus from a relaxed algorithm."""
    p = instance.params
    eps = p.epsilon if eps is None else eps
    supply = reduced_supply(p.capacity, eps)
    if not capacity_precondition(p, eps, kappa):
        warnings.warn(
            f"capacity {p.capacity} below kappa*Cmax*eps^-2*ln(1/eps+Smax)", PreconditionWarning, stacklevel=2
        )
    alg = make_algorithm(relaxed, instance, supply) if isinstance(relaxed, str) else relaxed
    policy = ReductionPolicy(alg, eps, oracle, seed, threshold, cache)
    mech = Mechanism(p, policy, seed)
    reports = reports or {}
    realizations = realizations or {}
    births = list(instance.births)
    seconds = []
    i = 0
    while not mech.finished:
        t0 = time.perf_counter()
        while i < len(births) and births[i].birth == mech.round:
            b = births[i]
            mech.submit(b.job_id, reports.get(b.job_id, b.sow), b.sow, realizations.get(b.job_id))
            i += 1
        mech.advance()
        seconds.append(time.perf_counter() - t0)
    res = ReductionResult(mech, policy, round_seconds=seconds)
    res.metrics = reduction_metrics(res, eps)
    return res


def reduction_metrics(res: ReductionResult, eps: float) -> dict:
    mech, pol = res.mech, res.policy
    jobs = list(mech.jobs.values())
    lifo = [e for e in mech.trace if e.kind in ("Evicted", "Cancelled") and "load_after" in e.detail]
    launched = [j for j in jobs if not j.plan.all_never]
    planned = sum(j.planned_value for j in jobs)
    return {
        "eps": eps,
        "C": mech.params.capacity,
        "jobs": len(jobs),
        "launched": len(launched),
        "welfare": mech.welfare(),
        "simulated_welfare": pol.alg.simulated_welfare,
        "planned_welfare": planned,
        "lost_value": sum(j.planned_value for j in jobs if j.failed),
        "evictions": len(lifo),
        "desyncs": sum(not s.in_n for s in pol.sync_log),
        "in_n": {s.job_id: s.in_n for s in pol.sync_log},
    }
