"""Per-job truthfulness audit over a finite grid of misreports.

For a fixed history up to the audited job's birth, a report fixes the
announced menu row for its demand and the launch plan.  The job's expected
utility under its true SoW is then

    sum over true (a, d) of  p * (1 - E(s, c', d)) * (V(s + d) [c' >= c] - price(s, c', d))

with ``s`` the plan's start and ``E`` the exact failure probability from the
snapshot at birth.  Later jobs cannot evict the audited job, so this is exact.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from ..core import (
    NEVER,
    Instance,
    JointDist,
    StatementOfWork,
    ValueFunction,
    validate_sow,
    value_at,
)
from ..estimator import ExactOracle, estimates_for_demand, reachable_entries, take_snapshot
from ..mechanism import Mechanism, choose_launch_plan
from ..reduction import ReductionPolicy, make_algorithm, reduced_supply, run_reduction, threshold_f


@dataclass(frozen=True)
class MisreportSpace:
    """Finite deviation grid; ``demands=None`` means every demand in ``[1, Cmax]``."""

    demands: tuple | None = None
    value_scales: tuple = (0.5, 1.0, 2.0)
    deadline_shifts: tuple = (-1, 0, 1)
    mass_steps: tuple = (0.5, 1.0)
    add_support: bool = True

    def to_dict(self) -> dict:
        return {
            "demands": None if self.demands is None else list(self.demands),
            "value_scales": list(self.value_scales),
            "deadline_shifts": list(self.deadline_shifts),
            "mass_steps": list(self.mass_steps),
            "add_support": self.add_support,
        }


def _value_variants(V: ValueFunction, H: float, space: MisreportSpace):
    for scale, shift in itertools.product(space.value_scales, space.deadline_shifts):
        steps = tuple(
            (t + shift, v if v == 0 else min(H, max(1.0, v * scale))) for t, v in V.steps
        )
        yield f"value*{scale}{shift:+d}", ValueFunction(V.birth, steps)


def _move(sup, i, j, step, new=None):
    pts = [list(x) for x in sup]
    if new is not None:
        pts.append([new[0], new[1], 0.0])
        j = len(pts) - 1
    m = pts[i][2] * step
    pts[i][2] -= m
    pts[j][2] += m
    return JointDist(tuple((a, d, p) for a, d, p in pts if p > 0))


def _dist_variants(sow: StatementOfWork, params, space: MisreportSpace):
    sup = sow.dist.support
    yield "dist", sow.dist
    for step in space.mass_steps:
        for i, j in itertools.permutations(range(len(sup)), 2):
            yield f"move{i}->{j}x{step}", _move(sup, i, j, step)
    if space.add_support:
        have = {(a, d) for a, d, _ in sup}
        for a in range(sow.birth, sow.birth + params.max_latency + 1):
            for d in range(1, params.max_duration + 1):
                if (a, d) in have:
                    continue
                for step in space.mass_steps:
                    for i in range(len(sup)):
                        yield f"add({a},{d})<-{i}x{step}", _move(sup, i, None, step, new=(a, d))


def misreports(sow: StatementOfWork, params, space: MisreportSpace | None = None) -> list:
    """``(label, sow)`` pairs; the first is always the truthful report."""
    space = MisreportSpace() if space is None else space
    demands = range(1, params.max_demand + 1) if space.demands is None else space.demands
    out = [("truth", sow)]
    seen = {sow}
    values = list(_value_variants(sow.value, params.max_value, space))
    dists = list(_dist_variants(sow, params, space))
    for c in demands:
        for (vl, V), (dl, P) in itertools.product(values, dists):
            cand = StatementOfWork(V, int(c), P)
            if cand in seen or validate_sow(cand, params, warn=False):
                continue
            seen.add(cand)
            out.append((f"c={c},{vl},{dl}", cand))
    return out


def expected_utility(true_sow: StatementOfWork, report: StatementOfWork, plan, menu, fail_tables: dict, announce: int) -> float:
    """Exact expected utility of ``plan`` for a job whose true SoW is ``true_sow``."""
    c = report.demand
    ok = c >= true_sow.demand
    total = 0.0
    for a, d, p in true_sow.dist.support:
        s = plan.start_for(a, d)
        if s is NEVER:
            continue
        fail = float(fail_tables[c][s - announce, d - 1])
        if fail >= 1.0:
            continue
        v = value_at(true_sow.value, s + d) if ok else 0.0
        total += p * (1.0 - fail) * (v - menu.price(s, c, d))
    return total


def mechanism_at_birth(instance: Instance, job_id: int, relaxed="exp", eps=None, oracle=None,
                       seed: int = 0, threshold: bool = True):
    """Run truthful births up to (not including) ``job_id``'s submission."""
    p = instance.params
    eps = p.epsilon if eps is None else eps
    alg = make_algorithm(relaxed, instance, reduced_supply(p.capacity, eps)) if isinstance(relaxed, str) else relaxed
    policy = ReductionPolicy(alg, eps, oracle, seed, threshold)
    mech = Mechanism(p, policy, seed)
    target = instance.job(job_id)
    for b in instance.births:
        while mech.round < b.birth:
            mech.advance()
        if b.job_id == job_id:
            break
        mech.submit(b.job_id, b.sow)
    while mech.round < target.birth:
        mech.advance()
    return mech, policy


@dataclass
class AuditResult:
    job_id: int
    max_gain: float
    argmax: str
    argmax_sow: StatementOfWork
    truth_utility: float
    identity_gain: float
    count: int
    mu_hat: float
    bound: float
    gains: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "job_id": self.job_id,
            "max_gain": self.max_gain,
            "argmax": self.argmax,
            "truth_utility": self.truth_utility,
            "identity_gain": self.identity_gain,
            "misreports": self.count,
            "mu_hat": self.mu_hat,
            "bound": self.bound,
        }


def audit_truthfulness(
    instance: Instance,
    job_id: int,
    space: MisreportSpace | None = None,
    oracle=None,
    seed: int = 0,
    relaxed="exp",
    eps: float | None = None,
    threshold: bool | None = None,
) -> AuditResult:
    """Largest expected-utility gain of any grid misreport over the truth.

    Plans are chosen from the policy's (possibly sampled, possibly
    thresholded) estimates and scored with exact failure probabilities.
    ``bound`` is ``2 * mu_hat * H`` where ``mu_hat`` is the largest
    estimate error on entries the true support can reach.
    """
    oracle = ExactOracle() if oracle is None else oracle
    if threshold is None:
        threshold = oracle.kind != "exact"
    p = instance.params
    mech, policy = mechanism_at_birth(instance, job_id, relaxed, eps, oracle, seed, threshold)
    true_sow = instance.job(job_id).sow
    t = mech.round
    menu = policy.alg.menu(t)
    snap = take_snapshot(mech)
    exact = ExactOracle()
    reports = misreports(true_sow, p, space)
    demands = sorted({r.demand for _, r in reports})
    exact_tables = {c: exact.table(snap, c) for c in demands}
    est_tables = {}
    for c in demands:
        raw = exact_tables[c] if oracle.kind == "exact" else policy.failure_table(mech, c, job_id)
        est_tables[c] = threshold_f(raw, policy.eps) if threshold else raw
    true_reach = reachable_entries(true_sow, t, p)
    mu = max(
        (abs(est_tables[c][k, d - 1] - exact_tables[c][k, d - 1]) for c in demands for k, d in true_reach),
        default=0.0,
    )
    gains: dict = {}
    truth_u = None
    best = (-math.inf, None, None)
    for label, rep in reports:
        est = estimates_for_demand(est_tables[rep.demand], t, p, rep.demand, reachable_entries(rep, t, p))
        plan = choose_launch_plan(rep, menu, est, p.signal_model)
        u = expected_utility(true_sow, rep, plan, menu, exact_tables, t)
        if truth_u is None:
            truth_u = u
        g = u - truth_u
        gains[label] = g
        if g > best[0]:
            best = (g, label, rep)
    return AuditResult(job_id, best[0], best[1], best[2], truth_u, gains["truth"], len(reports),
                       float(mu), float(2 * mu * p.max_value), gains)


def engine_expected_utility(instance: Instance, job_id: int, report: StatementOfWork | None = None,
                            seed: int = 0, relaxed="exp", eps: float | None = None, threshold: bool = False) -> float:
    """Audited job's expected utility by enumerating realisations through the full engine.

    Enumerates the joint ``(a, d)`` of the audited job and every job born no
    later than it; later jobs keep their seeded draw.  Matches the closed
    form only when nothing is observed before the audited job's birth.
    """
    births = list(instance.births)
    idx = [b.job_id for b in births].index(job_id)
    early = births[: idx + 1]
    reports = {} if report is None else {job_id: report}
    total = 0.0
    for combo in itertools.product(*(b.sow.dist.support for b in early)):
        prob = math.prod(x[2] for x in combo)
        real = {b.job_id: (x[0], x[1]) for b, x in zip(early, combo)}
        res = run_reduction(instance, relaxed, eps, ExactOracle(), seed, threshold=threshold,
                            reports=reports, realizations=real)
        total += prob * res.mech.jobs[job_id].utility
    return float(total)


def audit_instance(instance: Instance, space=None, oracle=None, seed: int = 0, **kw) -> list[AuditResult]:
    return [audit_truthfulness(instance, b.job_id, space, oracle, seed, **kw) for b in instance.births]


def gain_array(result: AuditResult) -> np.ndarray:
    return np.array(list(result.gains.values()))
