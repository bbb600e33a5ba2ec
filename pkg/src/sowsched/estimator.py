"""Failure-probability oracles.

A probe job born now, starting at ``t'`` with demand ``c`` and duration
``d``, is the most recently born active job, so it fails exactly when, in
some round between now and its last round, the committed load of the
earlier jobs (plus its own demand once it runs) exceeds capacity.  The
earlier jobs evolve independently of the probe.  So one simulation of the
earlier jobs yields the probe's fate for every ``(t', d)`` at once.

Two estimators share that simulation: an exact one that enumerates every
residual realization of the earlier jobs, and a sampled one that draws
``required_samples`` realizations.  :func:`engine_failure_table` recomputes
the same table by injecting real probe jobs into the mechanism engine and is
used to cross-check the fast path.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .core import NEVER, InstanceParams, JointDist, SignalModel, StatementOfWork, ValueFunction
from .errors import SizeExceeded
from .mechanism import (
    FailureEstimates,
    JobRecord,
    JobState,
    LaunchPlan,
    Mechanism,
    PriceMenu,
)

EXACT_CAP = 10**6


def required_samples(eps0: float, delta0: float, max_duration: int, max_latency: int) -> int:
    """Samples so every (start, duration) entry is within ``eps0`` w.p. ``1 - delta0``."""
    if not (0 < eps0 <= 1 and 0 < delta0 < 1):
        raise ValueError("need eps0 in (0, 1] and delta0 in (0, 1)")
    t = 2.0 / eps0**2 * math.log(max_duration * max_latency / delta0)
    return max(1, math.ceil(t))


@dataclass(frozen=True)
class SnapJob:
    """An earlier job as the mechanism sees it, plus its residual uncertainty.

    ``residual`` lists ``(a, d, prob)`` conditional on what has been observed;
    ``a`` is ``None`` for a job that can no longer run.
    """

    job_id: int
    birth: int
    sow: StatementOfWork
    plan: LaunchPlan
    status: str
    start: object
    residual: tuple

    def start_for(self, a, d):
        if a is None:
            return NEVER
        if self.status == "pending":
            return self.plan.start_for(a, d)
        return self.start


@dataclass(frozen=True)
class SimulationSnapshot:
    round: int
    params: InstanceParams
    jobs: tuple

    def key(self):
        return (
            self.round,
            self.params.capacity,
            tuple((j.job_id, j.status, j.start, j.plan.entries, j.residual) for j in self.jobs),
        )

    @property
    def branch_count(self) -> int:
        return math.prod(len(j.residual) for j in self.jobs)


def _conditional(points, keep):
    pts = [(a, d, p) for a, d, p in points if keep(a, d)]
    total = math.fsum(p for _, _, p in pts)
    return tuple((a, d, p / total) for a, d, p in pts) if total > 0 else ()


def take_snapshot(mech: Mechanism) -> SimulationSnapshot:
    """Snapshot of the active jobs at the start of the current round.

    Only reported distributions and observed arrivals and signals are used.
    """
    r = mech.round
    sm = mech.params.signal_model
    out = []
    for jid in mech.active:
        j = mech.jobs[jid]
        sup = j.reported_sow.dist.support
        if j.state is JobState.PENDING:
            res = _conditional(sup, lambda a, d: a >= r) or ((None, None, 1.0),)
            out.append(SnapJob(jid, j.birth, j.reported_sow, j.plan, "pending", None, res))
            continue
        a = j.arrival
        if sm is SignalModel.FULL_DURATION:
            res = ((a, j.signal, 1.0),)
        elif j.state is JobState.ARRIVED:
            res = _conditional(sup, lambda aa, d: aa == a)
        else:
            done = r - j.start  # rounds already run
            res = _conditional(sup, lambda aa, d: aa == a and d > done)
            if not res:
                res = ((a, max(mech.params.max_duration, done + 1), 1.0),)
        status = "arrived" if j.state is JobState.ARRIVED else "executing"
        out.append(SnapJob(jid, j.birth, j.reported_sow, j.plan, status, j.start, res))
    return SimulationSnapshot(r, mech.params, tuple(out))


def _window(snap: SimulationSnapshot):
    p = snap.params
    last = min(snap.round + p.max_latency + p.max_duration - 1, p.horizon)
    return snap.round, last


def prior_loads(snap: SimulationSnapshot, idx: np.ndarray) -> np.ndarray:
    """Committed load of earlier jobs before each round's eviction loop.

    ``idx[s, j]`` picks job ``j``'s residual outcome in sample ``s``.  Returns
    an array of shape ``(samples, rounds)`` over the probe's window.
    """
    r, last = _window(snap)
    n_s = idx.shape[0]
    n_r = max(0, last - r + 1)
    if not snap.jobs or n_r == 0:
        return np.zeros((n_s, n_r))
    big = np.iinfo(np.int64).max // 4
    J = len(snap.jobs)
    starts = np.empty((n_s, J), dtype=np.int64)
    ends = np.empty((n_s, J), dtype=np.int64)
    for j, sj in enumerate(snap.jobs):
        s_tab, e_tab = [], []
        for a, d, _ in sj.residual:
            s = sj.start_for(a, d)
            if s is NEVER:
                s_tab.append(big)
                e_tab.append(big)
            else:
                s_tab.append(s)
                e_tab.append(s + d - 1)
        starts[:, j] = np.asarray(s_tab)[idx[:, j]]
        ends[:, j] = np.asarray(e_tab)[idx[:, j]]
    demand = np.array([sj.sow.demand for sj in snap.jobs], dtype=np.int64)
    cap = snap.params.capacity
    alive = np.ones((n_s, J), dtype=bool)
    out = np.zeros((n_s, n_r), dtype=np.int64)
    for k, t in enumerate(range(r, last + 1)):
        running = alive & (starts <= t) & (ends >= t)
        load = running @ demand
        out[:, k] = load
        over = load > cap
        # most recent first, whether running or not
        for j in range(J - 1, -1, -1):
            if not over.any():
                break
            hit = over & alive[:, j]
            alive[hit, j] = False
            load = load - demand[j] * (hit & running[:, j])
            over = load > cap
        alive &= ~(running & (ends == t))
    return out


def probe_failures(snap: SimulationSnapshot, loads: np.ndarray, demand: int) -> np.ndarray:
    """Boolean array ``(samples, Smax + 1, Dmax)``: does the probe fail?"""
    p = snap.params
    r, last = _window(snap)
    cap = p.capacity
    n_s = loads.shape[0]
    before = np.zeros((n_s, loads.shape[1] + 1), dtype=bool)
    np.logical_or.accumulate(loads > cap, axis=1, out=before[:, 1:])
    cnt = np.zeros((n_s, loads.shape[1] + 1), dtype=np.int64)
    np.cumsum(loads + demand > cap, axis=1, out=cnt[:, 1:])
    fail = np.ones((n_s, p.max_latency + 1, p.max_duration), dtype=bool)
    for k in range(p.max_latency + 1):
        s = r + k
        for d in range(1, p.max_duration + 1):
            e = s + d - 1
            if e > last:
                continue  # past the horizon
            lo, hi = s - r, e - r + 1
            fail[:, k, d - 1] = before[:, lo] | (cnt[:, hi] - cnt[:, lo] > 0)
    return fail


def _never_overloaded(snap: SimulationSnapshot, demand: int) -> bool:
    return sum(j.sow.demand for j in snap.jobs) + demand <= snap.params.capacity


def _table_from_idx(snap, demand, idx, weights) -> np.ndarray:
    if _never_overloaded(snap, demand):
        idx = idx[:1]
        weights = np.ones(1)
    fails = probe_failures(snap, prior_loads(snap, idx), demand)
    return np.tensordot(weights / weights.sum(), fails.astype(float), axes=1)


def exact_failure_probs(snap: SimulationSnapshot, demand: int, cap: int = EXACT_CAP) -> np.ndarray:
    """Exact table over (start offset, duration) by enumerating residual realizations."""
    sizes = [len(j.residual) for j in snap.jobs]
    n = math.prod(sizes)
    if n > cap:
        raise SizeExceeded(f"{n} residual branches exceed cap {cap}")
    if _never_overloaded(snap, demand) or not sizes:
        idx = np.zeros((1, len(sizes)), dtype=np.int64)
        return _table_from_idx(snap, demand, idx, np.ones(1))
    idx = np.array(list(itertools.product(*[range(s) for s in sizes])), dtype=np.int64)
    w = np.ones(n)
    for j, sj in enumerate(snap.jobs):
        w *= np.array([p for _, _, p in sj.residual])[idx[:, j]]
    return _table_from_idx(snap, demand, idx, w)


def draw_residuals(snap: SimulationSnapshot, samples: int, rng: np.random.Generator) -> np.ndarray:
    idx = np.zeros((samples, len(snap.jobs)), dtype=np.int64)
    for j, sj in enumerate(snap.jobs):
        if len(sj.residual) > 1:
            p = np.array([q for _, _, q in sj.residual])
            idx[:, j] = rng.choice(len(p), size=samples, p=p / p.sum())
    return idx


def estimate_failure_probs(
    snap: SimulationSnapshot, demand: int, samples: int, rng: np.random.Generator
) -> np.ndarray:
    """Monte Carlo table: fraction of ``samples`` coupled simulations in which the probe fails."""
    idx = draw_residuals(snap, samples, rng)
    return _table_from_idx(snap, demand, idx, np.ones(samples))


# --- engine-backed reference --------------------------------------------------

def _engine_from_snapshot(snap: SimulationSnapshot, row) -> Mechanism:
    p = snap.params
    mech = Mechanism(p)
    mech.round = snap.round
    for sj, k in zip(snap.jobs, row):
        a, d, _ = sj.residual[k]
        if a is None:
            continue
        job = JobRecord(
            sj.job_id, sj.birth, sj.sow, sj.sow, (a, d), sj.plan,
            PriceMenu.filled(sj.birth, p), FailureEstimates.filled(sj.birth, p),
        )
        if sj.status == "pending":
            job.state = JobState.PENDING
        else:
            job.arrival, job.signal, job.start = a, p.signal_model.signal(d), sj.start
            job.state = JobState.ARRIVED if sj.status == "arrived" else JobState.EXECUTING
        mech.jobs[job.job_id] = job
        mech.active.append(job.job_id)
    return mech


def engine_probe_fails(snap: SimulationSnapshot, row, demand: int, start: int, duration: int) -> bool:
    """Run the real engine on one residual realization with a probe job born last."""
    mech = _engine_from_snapshot(snap, row)
    p = snap.params
    plan = LaunchPlan(snap.round, p.signal_model, (((start, p.signal_model.signal(duration)), start),))
    sow = StatementOfWork(ValueFunction(snap.round, ()), demand, JointDist.point(start, duration))
    probe_id = -1
    probe = JobRecord(
        probe_id, snap.round, sow, sow, (start, duration), plan,
        PriceMenu.filled(snap.round, p), FailureEstimates.filled(snap.round, p),
    )
    mech.jobs[probe_id] = probe
    mech.active.append(probe_id)
    while not mech.finished and probe.state not in (
        JobState.COMPLETED, JobState.EVICTED, JobState.CANCELLED, JobState.EXPIRED
    ):
        mech.advance()
    return probe.state is not JobState.COMPLETED


def engine_failure_table(snap: SimulationSnapshot, demand: int, idx, weights=None) -> np.ndarray:
    p = snap.params
    idx = np.asarray(idx)
    weights = np.ones(len(idx)) if weights is None else np.asarray(weights, dtype=float)
    out = np.zeros((p.max_latency + 1, p.max_duration))
    for row, w in zip(idx, weights):
        for k in range(p.max_latency + 1):
            for d in range(1, p.max_duration + 1):
                out[k, d - 1] += w * engine_probe_fails(snap, row, demand, snap.round + k, d)
    return out / weights.sum()


# --- oracle objects -------------------------------------------------------------

class ExactOracle:
    kind = "exact"

    def __init__(self, cap: int = EXACT_CAP):
        self.cap = cap

    def table(self, snap: SimulationSnapshot, demand: int, rng=None) -> np.ndarray:
        return exact_failure_probs(snap, demand, self.cap)


class SampledOracle:
    kind = "sampled"

    def __init__(self, eps0: float = 0.1, delta0: float = 0.1, samples: int | None = None):
        self.eps0, self.delta0 = eps0, delta0
        self.samples = samples

    def sample_count(self, params: InstanceParams) -> int:
        if self.samples is not None:
            return self.samples
        return required_samples(self.eps0, self.delta0, params.max_duration, params.max_latency)

    def table(self, snap: SimulationSnapshot, demand: int, rng: np.random.Generator) -> np.ndarray:
        return estimate_failure_probs(snap, demand, self.sample_count(snap.params), rng)


def estimates_for_demand(
    table: np.ndarray, announce: int, params: InstanceParams, demand: int, reachable=None
) -> FailureEstimates:
    """Embed a per-demand table into a full estimate table; other entries default to 1."""
    est = FailureEstimates.filled(announce, params, 1.0)
    if reachable is None:
        est.table[:, demand - 1, :] = table
    else:
        for k, d in reachable:
            est.table[k, demand - 1, d - 1] = table[k, d - 1]
    return est


def reachable_entries(sow: StatementOfWork, announce: int, params: InstanceParams):
    """(start offset, duration) pairs a plan for ``sow`` could ever read."""
    out = set()
    for a, d, _ in sow.dist.support:
        for s in range(max(a, announce), announce + params.max_latency + 1):
            out.add((s - announce, d))
    return sorted(out)


def table_to_dict(table: np.ndarray, announce: int, demand: int, key: str = "") -> dict:
    return {"key": key, "announce": announce, "demand": demand, "table": table.tolist()}
