"""Seeded instance generators."""
from __future__ import annotations

import numpy as np

from ..core import (
    Birth,
    Instance,
    InstanceParams,
    JointDist,
    StatementOfWork,
    ValueFunction,
    rng_stream,
    validate_sow,
)
from ..errors import InvalidPrior

PATTERNS = ("burst", "staircase", "spread")


def _probs(rng, k: int) -> list[float]:
    w = rng.integers(1, 5, size=k).astype(float)
    p = w / w.sum()
    p[-1] = 1.0 - p[:-1].sum()
    return [float(x) for x in p]


def random_value(rng, params: InstanceParams, birth: int, top: float | None = None) -> ValueFunction:
    """Non-increasing step value with its last positive round in ``(birth, birth + Smax]``."""
    H = params.max_value
    top = float(rng.integers(1, int(H) + 1)) if top is None else top
    S = params.max_latency
    last = birth + int(rng.integers(max(1, S // 2), S + 1))
    if last - birth >= 2 and rng.random() < 0.5 and top > 1:
        mid = int(rng.integers(birth + 1, last))
        low = float(rng.integers(1, int(top) + 1))
        return ValueFunction(birth, ((mid, top), (last, min(low, top))))
    return ValueFunction(birth, ((last, top),))


def random_dist(rng, params: InstanceParams, birth: int, max_support: int = 4, arrivals=None) -> JointDist:
    """Distribution over ``(a, d)``; arrivals default to ``[birth, birth + Smax - 1]``."""
    arrivals = list(range(birth, birth + params.max_latency)) if arrivals is None else list(arrivals)
    cells = [(a, d) for a in arrivals for d in range(1, params.max_duration + 1)]
    k = int(rng.integers(1, min(max_support, len(cells)) + 1))
    pick = rng.choice(len(cells), size=k, replace=False)
    pts = sorted(cells[i] for i in pick)
    return JointDist(tuple((a, d, p) for (a, d), p in zip(pts, _probs(rng, k))))


def random_sow(rng, params: InstanceParams, birth: int, max_support: int = 4, demand: int | None = None) -> StatementOfWork:
    """Random valid SoW; redrawn (a few times) until some supported completion has value."""
    c = int(rng.integers(1, params.max_demand + 1)) if demand is None else demand
    for _ in range(20):
        sow = StatementOfWork(random_value(rng, params, birth), c, random_dist(rng, params, birth, max_support))
        if any(sow.value(a + d) > 0 for a, d, _ in sow.dist.support):
            break
    return sow


def gen_adversarial(seed: int, params: InstanceParams, job_count: int, pattern: str = "burst") -> Instance:
    """Stress instances; job ``j`` uses its own stream so patterns are stable per seed.

    ``burst`` aims every job at one hot round; ``staircase`` staggers arrivals
    with non-decreasing demands so the arrival-time load climbs and then
    falls; ``spread`` spaces values geometrically over ``[1, H]``.
    """
    if pattern not in PATTERNS:
        raise ValueError(f"unknown pattern {pattern!r}; expected one of {PATTERNS}")
    T, S, D = params.horizon, params.max_latency, params.max_duration
    base = np.random.default_rng(np.random.SeedSequence([int(seed), PATTERNS.index(pattern)]))
    births = []
    if pattern == "burst":
        hot = int(base.integers(2, max(3, T - D - S // 2) + 1))
        for j in range(job_count):
            rng = rng_stream(seed, j, pattern)
            # born early enough that a job arriving at the hot round can still finish in time
            b = int(max(1, hot - rng.integers(0, S - D + 1)))
            top = float(rng.integers(1, int(params.max_value) + 1))
            value = ValueFunction(b, ((b + S, top),))
            dist = random_dist(rng, params, b, 3, arrivals=[hot])
            births.append(Birth(j, b, StatementOfWork(value, params.max_demand, dist)))
    elif pattern == "staircase":
        demands = sorted(int(base.integers(1, params.max_demand + 1)) for _ in range(job_count))
        for j in range(job_count):
            rng = rng_stream(seed, j, pattern)
            b = 1 + j
            dist = JointDist(((b, D, 1.0),))
            value = ValueFunction(b, ((b + S, float(rng.integers(1, int(params.max_value) + 1))),))
            births.append(Birth(j, b, StatementOfWork(value, demands[j], dist)))
    else:
        H = params.max_value
        for j in range(job_count):
            rng = rng_stream(seed, j, pattern)
            b = int(rng.integers(1, max(2, T - S - D + 1)))
            top = float(H ** (j / (job_count - 1))) if job_count > 1 else float(H)
            value = ValueFunction(b, ((b + S, top),))
            dist = random_dist(rng, params, b, 3, arrivals=range(b, b + S - D + 1))
            c = int(rng.integers(1, params.max_demand + 1))
            births.append(Birth(j, b, StatementOfWork(value, c, dist)))
    births.sort(key=lambda x: (x.birth, x.job_id))
    return Instance(params, tuple(births))


def stress_instance(params: InstanceParams, job_count: int = 8, per_round: int = 4) -> Instance:
    """Fixed overload pattern: ``per_round`` births per round, each arriving one
    or two rounds later for one or two rounds, with alternating demands."""
    births = []
    for j in range(job_count):
        b = 1 + j // per_round
        dist = JointDist(((b + 1, 1, 0.25), (b + 1, 2, 0.25), (b + 2, 1, 0.25), (b + 2, 2, 0.25)))
        c = min(1 + j % 2, params.max_demand)
        births.append(Birth(j, b, StatementOfWork(ValueFunction(b, ((b + 4, 4.0),)), c, dist)))
    return Instance(params, tuple(births))


def arrival_loads(instance: Instance) -> np.ndarray:
    """Expected per-round load if every job ran from its arrival; index 0 is round 1."""
    T = instance.params.horizon
    out = np.zeros(T + instance.params.max_latency + instance.params.max_duration + 2)
    for b in instance.births:
        for a, d, p in b.sow.dist.support:
            out[a - 1 : a - 1 + d] += p * b.sow.demand
    return out[:T]


def random_prior(rng, params: InstanceParams, birth: int, size: int = 2, max_support: int = 3):
    """Finite prior over statements of work born at ``birth``."""
    return tuple(zip(_probs(rng, size), (random_sow(rng, params, birth, max_support) for _ in range(size))))


def gen_stochastic(seed: int, priors: dict, births: dict, params: InstanceParams) -> Instance:
    """Draw one statement of work per job from its prior.

    ``priors`` maps job id to ``[(prob, sow), ...]`` and ``births`` maps job
    id to birth round.  Every SoW in a prior must be valid and born at the
    job's birth, which precedes all of its arrivals.
    """
    out = []
    for jid in sorted(births, key=lambda j: (births[j], j)):
        prior = tuple((float(q), s) for q, s in priors[jid])
        b = births[jid]
        for _, s in prior:
            bad = validate_sow(s, params)
            if bad:
                raise InvalidPrior(f"job {jid}: {bad[0].code}: {bad[0].message}")
            if s.birth != b or min(a for a, _, _ in s.dist.support) < b:
                raise InvalidPrior(f"job {jid}: prior SoW not born at {b} before its arrivals")
        q = np.array([p for p, _ in prior])
        if abs(q.sum() - 1.0) > 1e-12 or np.any(q <= 0):
            raise InvalidPrior(f"job {jid}: prior probabilities sum to {q.sum()!r}")
        rng = rng_stream(seed, jid, "prior")
        sow = prior[int(rng.choice(len(prior), p=q / q.sum()))][1]
        out.append(Birth(jid, b, sow, prior))
    return Instance(params, tuple(out))


def random_instance(seed: int, params: InstanceParams, job_count: int, max_support: int = 3, births=None) -> Instance:
    """Small random adversarial instance with births spread over the first rounds."""
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 7]))
    if births is None:
        births = sorted(int(x) for x in rng.integers(1, max(2, params.horizon - params.max_latency), size=job_count))
    out = [Birth(j, b, random_sow(rng, params, b, max_support)) for j, b in enumerate(births)]
    return Instance(params, tuple(out))
