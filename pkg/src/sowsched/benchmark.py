"""Offline benchmarks: hindsight optimum, relaxed optimum, competitive ratios."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import NEVER, Birth, InstanceParams, StatementOfWork, value_at
from .errors import SizeExceeded
from .relaxed.lp import solve_relaxed_lp

MAX_JOBS = 8
MAX_HORIZON = 24


@dataclass(frozen=True)
class RealizedJob:
    job_id: int
    birth: int
    sow: StatementOfWork
    arrival: int
    duration: int

    @property
    def demand(self) -> int:
        return self.sow.demand


@dataclass
class HindsightSchedule:
    starts: dict  # job id -> start round or NEVER
    welfare: float
    loads: list = field(default_factory=list)  # loads[t - 1] for t = 1..T

    def to_dict(self) -> dict:
        return {
            "welfare": self.welfare,
            "starts": {str(k): (None if v is NEVER else v) for k, v in self.starts.items()},
            "loads": list(self.loads),
        }


def realize(births, realizations: dict) -> list[RealizedJob]:
    """Pair each birth with its realised ``(arrival, duration)``."""
    return [RealizedJob(b.job_id, b.birth, b.sow, *realizations[b.job_id]) for b in births]


def _options(job: RealizedJob, params: InstanceParams):
    out = []
    last = job.birth + params.max_latency
    for s in range(job.arrival, last + 1):
        if s + job.duration - 1 > params.horizon:
            break
        v = value_at(job.sow.value, s + job.duration)
        if v > 0:
            out.append((s, v))
    return out


def schedule_loads(jobs, starts: dict, horizon: int) -> list[int]:
    loads = [0] * horizon
    for j in jobs:
        s = starts.get(j.job_id, NEVER)
        if s is NEVER:
            continue
        for t in range(s, s + j.duration):
            loads[t - 1] += j.demand
    return loads


def opt_hindsight(
    jobs, params: InstanceParams, max_jobs: int = MAX_JOBS, max_horizon: int = MAX_HORIZON
) -> tuple[float, HindsightSchedule]:
    """Exact welfare-maximising schedule for fully realised jobs.

    Depth-first over jobs in id order, trying starts earliest first and NEVER
    last; a branch is cut when even taking every remaining job's best value
    cannot beat the incumbent.  Only strict improvements replace the
    incumbent, so ties resolve to the lexicographically first schedule.
    """
    jobs = sorted(jobs, key=lambda j: j.job_id)
    if len(jobs) > max_jobs or params.horizon > max_horizon:
        raise SizeExceeded(f"{len(jobs)} jobs, horizon {params.horizon}")
    C, T = params.capacity, params.horizon
    opts = [_options(j, params) for j in jobs]
    best_each = [max((v for _, v in o), default=0.0) for o in opts]
    tail = np.concatenate([np.cumsum(best_each[::-1])[::-1], [0.0]])
    load = np.zeros(T + 2, dtype=int)
    chosen: list = [NEVER] * len(jobs)
    best = {"value": -1.0, "starts": None}

    def dfs(i: int, acc: float):
        if acc + tail[i] <= best["value"]:
            return
        if i == len(jobs):
            best["value"], best["starts"] = acc, list(chosen)
            return
        j = jobs[i]
        for s, v in opts[i]:
            seg = load[s : s + j.duration]
            if np.any(seg + j.demand > C):
                continue
            seg += j.demand
            chosen[i] = s
            dfs(i + 1, acc + v)
            seg -= j.demand
        chosen[i] = NEVER
        dfs(i + 1, acc)

    dfs(0, 0.0)
    starts = {j.job_id: s for j, s in zip(jobs, best["starts"])}
    welfare = max(best["value"], 0.0)
    return welfare, HindsightSchedule(starts, welfare, schedule_loads(jobs, starts, T))


def check_schedule(jobs, sched: HindsightSchedule, params: InstanceParams) -> list[str]:
    """Recompute loads and start feasibility from scratch."""
    problems = []
    loads = schedule_loads(jobs, sched.starts, params.horizon)
    for t, u in enumerate(loads, start=1):
        if u > params.capacity:
            problems.append(f"round {t}: load {u} > {params.capacity}")
    total = 0.0
    for j in jobs:
        s = sched.starts.get(j.job_id, NEVER)
        if s is NEVER:
            continue
        if s < j.arrival:
            problems.append(f"job {j.job_id} starts before arrival")
        if s + j.duration - 1 > params.horizon:
            problems.append(f"job {j.job_id} runs past the horizon")
        total += value_at(j.sow.value, s + j.duration)
    if abs(total - sched.welfare) > 1e-9:
        problems.append(f"welfare {sched.welfare} != recomputed {total}")
    return problems


def opt_relaxed(births, params: InstanceParams, supply: float | None = None, use_priors: bool = False, **kw) -> float:
    """Relaxed LP optimum over ``births``.

    By default each job's own statement of work is used as a point prior;
    pass ``use_priors=True`` to keep the births' priors.
    """
    births = list(births)
    if not births:
        return 0.0
    if not use_priors:
        births = [Birth(b.job_id, b.birth, b.sow) for b in births]
    supply = params.capacity if supply is None else supply
    return solve_relaxed_lp(births, params, supply, **kw).value


def expected_opt_hindsight(births, params: InstanceParams, **kw) -> float:
    """Expected hindsight optimum by enumerating every joint realisation."""
    births = list(births)
    if not births:
        return 0.0
    grids = [b.sow.dist.support for b in births]
    sizes = [len(g) for g in grids]
    total = 0.0
    for idx in np.ndindex(*sizes):
        prob = 1.0
        real = {}
        for b, g, k in zip(births, grids, idx):
            a, d, p = g[k]
            prob *= p
            real[b.job_id] = (a, d)
        total += prob * opt_hindsight(realize(births, real), params, **kw)[0]
    return total


# --- ratios -----------------------------------------------------------------


def _ratio(opt_mean: float, welfare_mean: float) -> float:
    if welfare_mean > 0:
        return float(opt_mean / welfare_mean)
    return 1.0 if opt_mean <= 0 else float("inf")


@dataclass
class RatioSummary:
    ratios: list  # one per instance
    ci: list  # per-instance (lo, hi) from paired bootstrap over realisations
    mean: float
    max: float
    mean_ci: tuple

    def to_dict(self) -> dict:
        return {
            "ratios": self.ratios,
            "ci": [list(c) for c in self.ci],
            "mean": self.mean,
            "max": self.max,
            "mean_ci": list(self.mean_ci),
        }


def bootstrap_ci(values, stat=np.mean, resamples: int = 1000, level: float = 0.95, rng=None) -> tuple:
    values = np.asarray(values, dtype=float)
    rng = np.random.default_rng(0) if rng is None else rng
    if values.size == 0:
        return (float("nan"), float("nan"))
    idx = rng.integers(0, values.shape[0], size=(resamples, values.shape[0]))
    stats = np.array([stat(values[i]) for i in idx])
    lo, hi = np.quantile(stats, [(1 - level) / 2, (1 + level) / 2])
    return float(lo), float(hi)


def competitive_ratio(welfare, opt, resamples: int = 1000, seed: int = 0) -> RatioSummary:
    """``E[OPT] / E[welfare]`` per instance plus bootstrap intervals.

    ``welfare`` and ``opt`` are sequences (one per instance) of paired
    per-realisation values; a single flat sequence is treated as one instance.
    """
    if len(welfare) and np.ndim(welfare[0]) == 0:
        welfare, opt = [welfare], [opt]
    rng = np.random.default_rng(seed)
    ratios, cis = [], []
    for w, o in zip(welfare, opt):
        w = np.asarray(w, dtype=float)
        o = np.asarray(o, dtype=float)
        if w.shape != o.shape:
            raise ValueError("welfare and opt must be paired")
        ratios.append(_ratio(o.mean(), w.mean()))
        if w.size > 1:
            idx = rng.integers(0, w.size, size=(resamples, w.size))
            boot = [_ratio(o[i].mean(), w[i].mean()) for i in idx]
            lo, hi = np.quantile(boot, [0.025, 0.975])
            cis.append((float(lo), float(hi)))
        else:
            cis.append((ratios[-1], ratios[-1]))
    arr = np.array(ratios)
    mean_ci = bootstrap_ci(arr, resamples=resamples, rng=rng) if arr.size > 1 else (float(arr[0]),) * 2
    return RatioSummary(ratios, cis, float(arr.mean()), float(arr.max()), mean_ci)
