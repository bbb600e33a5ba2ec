"""Posted-price scheduling engine with binding launch plans and LIFO eviction.

Each round runs in a fixed order:

1. births: each new job reports a statement of work and gets a launch plan
   that maximises its estimated utility against the announced menu;
2. arrivals: an arriving job is bound to the start its plan prescribes;
3. eviction: while committed load exceeds capacity, the most recently born
   active job is evicted (if running) or cancelled (if not);
4. starts, then completions, which pay the birth-round menu price.

Menus and failure estimates come from an :class:`InfoPolicy`, queried once
per birth.  The reduction module supplies the policy that tracks a relaxed
algorithm.
"""
from __future__ import annotations

import csv
import enum
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from .core import (
    NEVER,
    Instance,
    InstanceParams,
    SignalModel,
    StatementOfWork,
    rng_stream,
    sample_realization,
    value_at,
)
from .errors import CapacityViolation, IndexOutOfMenu


class _AnnouncedTable:
    """Table indexed by (start, demand, duration) for starts in ``[announce, announce + Smax]``."""

    def __init__(self, announce: int, table: np.ndarray):
        self.announce = int(announce)
        self.table = np.asarray(table, dtype=float)

    @property
    def window(self) -> range:
        return range(self.announce, self.announce + self.table.shape[0])

    def _idx(self, start: int, c: int, d: int):
        k = start - self.announce
        if not 0 <= k < self.table.shape[0]:
            raise IndexOutOfMenu(f"start {start} outside [{self.announce}, {self.announce + self.table.shape[0] - 1}]")
        if not (1 <= c <= self.table.shape[1] and 1 <= d <= self.table.shape[2]):
            raise IndexOutOfMenu(f"demand {c} or duration {d} outside the menu")
        return k, c - 1, d - 1

    @classmethod
    def filled(cls, announce: int, params: InstanceParams, value: float = 0.0):
        shape = (params.max_latency + 1, params.max_demand, params.max_duration)
        return cls(announce, np.full(shape, float(value)))

    @classmethod
    def from_function(cls, announce: int, params: InstanceParams, fn: Callable[[int, int, int], float]):
        out = cls.filled(announce, params)
        for k in range(params.max_latency + 1):
            for c in range(1, params.max_demand + 1):
                for d in range(1, params.max_duration + 1):
                    out.table[k, c - 1, d - 1] = fn(announce + k, c, d)
        return out

    def is_monotone(self) -> bool:
        """Non-decreasing in demand and in duration at every start."""
        t = self.table
        # neighbour comparison rather than diff, so inf >= inf holds
        ok_c = np.all(t[:, 1:, :] >= t[:, :-1, :])
        ok_d = np.all(t[:, :, 1:] >= t[:, :, :-1])
        return bool(ok_c and ok_d)

    def __eq__(self, other):
        return (
            type(self) is type(other)
            and self.announce == other.announce
            and np.array_equal(self.table, other.table)
        )

    def __repr__(self):
        return f"{type(self).__name__}(announce={self.announce}, shape={self.table.shape})"


class PriceMenu(_AnnouncedTable):
    def price(self, start, c: int, d: int) -> float:
        if start is NEVER:
            return 0.0
        return float(self.table[self._idx(start, c, d)])

    def dominated_by(self, later: "PriceMenu") -> bool:
        """True if ``later`` charges at least as much on every shared start."""
        lo = later.announce - self.announce
        if lo < 0:
            return False
        a = self.table[lo:]
        return bool(np.all(later.table[: a.shape[0]] >= a))


class FailureEstimates(_AnnouncedTable):
    def prob(self, start, c: int, d: int) -> float:
        if start is NEVER:
            return 0.0
        return float(self.table[self._idx(start, c, d)])


@dataclass(frozen=True)
class LaunchPlan:
    """Binding map from (arrival, signal) to a start round or NEVER."""

    birth: int
    signal_model: SignalModel
    entries: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "_map", dict(self.entries))

    def __getitem__(self, key):
        return self._map[key]

    def __contains__(self, key):
        return key in self._map

    def __len__(self):
        return len(self._map)

    def items(self):
        return self._map.items()

    def start_for(self, a: int, d: int):
        """Start for a realised (arrival, duration); NEVER if off-plan."""
        return self._map.get((a, self.signal_model.signal(d)), NEVER)

    @property
    def all_never(self) -> bool:
        return all(s is NEVER for s in self._map.values())


def branches(sow: StatementOfWork, signal_model: SignalModel) -> dict:
    """Group support points by the (arrival, signal) key a plan is defined on."""
    out: dict = {}
    for a, d, p in sow.dist.support:
        out.setdefault((a, signal_model.signal(d)), []).append((d, p))
    return out


def _term(V, c, s, d, menu: PriceMenu, est: FailureEstimates) -> float:
    e = est.prob(s, c, d)
    if e >= 1.0:
        return 0.0
    price = menu.price(s, c, d)
    if math.isinf(price):
        return -math.inf
    return (1.0 - e) * (value_at(V, s + d) - price)


def estimated_utility(
    plan: LaunchPlan,
    sow: StatementOfWork,
    menu: PriceMenu,
    est: FailureEstimates,
) -> float:
    total = 0.0
    t = menu.announce
    for a, d, p in sow.dist.support:
        s = plan.start_for(a, d)
        if s is NEVER:
            continue
        if not t <= s <= t + menu.table.shape[0] - 1:
            raise IndexOutOfMenu(f"plan starts at {s}, menu covers [{t}, {t + menu.table.shape[0] - 1}]")
        total += p * _term(sow.value, sow.demand, s, d, menu, est)
    return total


def choose_launch_plan(
    sow: StatementOfWork,
    menu: PriceMenu,
    est: FailureEstimates,
    signal_model: SignalModel = SignalModel.NO_SIGNAL,
) -> LaunchPlan:
    """Per-branch argmax of estimated utility; earliest start wins ties and a
    branch worth exactly zero is not launched."""
    t = menu.announce
    last = t + menu.table.shape[0] - 1
    entries = []
    for key, pts in branches(sow, signal_model).items():
        a = key[0]
        best, best_s = 0.0, NEVER
        for s in range(max(a, t), last + 1):
            v = sum(p * _term(sow.value, sow.demand, s, d, menu, est) for d, p in pts)
            if v > best:
                best, best_s = v, s
        entries.append((key, best_s))
    return LaunchPlan(t, signal_model, tuple(entries))


class JobState(str, enum.Enum):
    PENDING = "Pending"
    ARRIVED = "Arrived"
    EXECUTING = "Executing"
    COMPLETED = "Completed"
    EVICTED = "Evicted"
    CANCELLED = "Cancelled"
    EXPIRED = "Expired"


TERMINAL = {JobState.COMPLETED, JobState.EVICTED, JobState.CANCELLED, JobState.EXPIRED}


@dataclass
class JobRecord:
    job_id: int
    birth: int
    true_sow: StatementOfWork
    reported_sow: StatementOfWork
    realized: tuple[int, int]
    plan: LaunchPlan
    menu: PriceMenu
    est: FailureEstimates
    state: JobState = JobState.PENDING
    arrival: int | None = None
    signal: int | None = None
    start: object = None
    finish: object = NEVER
    payment: float = 0.0
    value: float = 0.0

    @property
    def demand(self) -> int:
        return self.reported_sow.demand

    @property
    def utility(self) -> float:
        return self.value - self.payment

    @property
    def failed(self) -> bool:
        return self.state is not JobState.COMPLETED

    @property
    def planned_start(self):
        """Start the plan binds this job to, given its realisation."""
        return self.plan.start_for(*self.realized)

    @property
    def planned_value(self) -> float:
        s = self.planned_start
        if s is NEVER or self.reported_sow.demand < self.true_sow.demand:
            return 0.0
        return value_at(self.true_sow.value, s + self.realized[1])


@dataclass
class Event:
    round: int
    kind: str
    job_id: int
    detail: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"round": self.round, "kind": self.kind, "job_id": self.job_id, "detail": self.detail}


class InfoPolicy:
    """Source of the menu and failure estimates shown to each new job."""

    def announce(self, mech: "Mechanism", sow: StatementOfWork, job_id=None):
        raise NotImplementedError

    def record(self, mech: "Mechanism", job: JobRecord) -> None:
        pass


class FixedInfo(InfoPolicy):
    """Menus and estimates given by fixed functions of (start, demand, duration)."""

    def __init__(self, price_fn=None, fail_fn=None):
        self.price_fn = price_fn or (lambda s, c, d: 0.0)
        self.fail_fn = fail_fn or (lambda s, c, d: 0.0)

    def announce(self, mech, sow, job_id=None):
        t = mech.round
        return (
            PriceMenu.from_function(t, mech.params, self.price_fn),
            FailureEstimates.from_function(t, mech.params, self.fail_fn),
        )


def _plain(x):
    return "NEVER" if x is NEVER else x


class Mechanism:
    """Mutable engine state; call :meth:`submit` for births, then :meth:`advance`."""

    def __init__(self, params: InstanceParams, policy: InfoPolicy | None = None, seed: int = 0):
        self.params = params
        self.policy = policy if policy is not None else FixedInfo()
        self.seed = seed
        self.round = 1
        self.jobs: dict[int, JobRecord] = {}
        self.active: list[int] = []
        self.trace: list[Event] = []
        self.loads: list[int] = []
        self.finished = False

    def _emit(self, kind, job_id, **detail):
        self.trace.append(Event(self.round, kind, job_id, {k: _plain(v) for k, v in detail.items()}))

    def submit(
        self,
        job_id: int,
        reported: StatementOfWork,
        true: StatementOfWork | None = None,
        realized: tuple[int, int] | None = None,
    ) -> JobRecord:
        if self.finished:
            raise RuntimeError("horizon already reached")
        if job_id in self.jobs:
            raise ValueError(f"duplicate job id {job_id}")
        true = reported if true is None else true
        if realized is None:
            realized = sample_realization(true.dist, rng_stream(self.seed, job_id, "realize"))
        menu, est = self.policy.announce(self, reported, job_id)
        plan = choose_launch_plan(reported, menu, est, self.params.signal_model)
        job = JobRecord(job_id, self.round, true, reported, tuple(realized), plan, menu, est)
        self.jobs[job_id] = job
        self._emit("Birth", job_id, plan=[[a, s, _plain(v)] for (a, s), v in plan.items()])
        if plan.all_never:
            job.state = JobState.EXPIRED
            self._emit("Expired", job_id, reason="plan never launches")
        else:
            self.active.append(job_id)
        self.policy.record(self, job)
        return job

    def committed_load(self) -> int:
        t = self.round
        load = 0
        for jid in self.active:
            j = self.jobs[jid]
            if j.state is JobState.EXECUTING or (j.state is JobState.ARRIVED and j.start == t):
                load += j.demand
        return load

    def _contribution(self, j: JobRecord) -> int:
        running = j.state is JobState.EXECUTING or (
            j.state is JobState.ARRIVED and j.start == self.round
        )
        return j.demand if running else 0

    def _deactivate(self, j: JobRecord, state: JobState):
        j.state = state
        self.active.remove(j.job_id)

    def advance(self) -> list[Event]:
        """Process arrivals, evictions, starts and completions of the current round."""
        if self.finished:
            raise RuntimeError("horizon already reached")
        t = self.round
        first = len(self.trace)
        for jid in list(self.active):
            j = self.jobs[jid]
            if j.state is JobState.PENDING and j.realized[0] == t:
                a, d = j.realized
                j.arrival, j.signal = a, self.params.signal_model.signal(d)
                s = j.plan.start_for(a, d)
                self._emit("Arrived", jid, arrival=a, signal=j.signal, start=s)
                if s is NEVER:
                    self._deactivate(j, JobState.EXPIRED)
                    self._emit("Expired", jid, reason="no start for this arrival")
                else:
                    j.state, j.start = JobState.ARRIVED, s
        lifo_evict(self)
        load = self.committed_load()
        if load > self.params.capacity:
            raise CapacityViolation(f"round {t}: load {load} > {self.params.capacity}")
        self.loads.append(load)
        for jid in self.active:
            j = self.jobs[jid]
            if j.state is JobState.ARRIVED and j.start == t:
                j.state = JobState.EXECUTING
                self._emit("Started", jid, start=t)
        for jid in list(self.active):
            j = self.jobs[jid]
            if j.state is JobState.EXECUTING and j.start + j.realized[1] - 1 == t:
                j.finish = j.start + j.realized[1]
                self._deactivate(j, JobState.COMPLETED)
                settle_payment(j)
                self._emit("Completed", jid, finish=j.finish, value=j.value, payment=j.payment)
        self.round += 1
        if t >= self.params.horizon:
            self._close()
        return self.trace[first:]

    def _close(self):
        for jid in reversed(list(self.active)):
            j = self.jobs[jid]
            self._deactivate(j, JobState.EVICTED if j.state is JobState.EXECUTING else JobState.CANCELLED)
            self._emit(j.state.value, jid, reason="horizon")
        self.finished = True

    def run_to_end(self):
        while not self.finished:
            self.advance()

    def welfare(self) -> float:
        return sum(j.value for j in self.jobs.values())


def lifo_evict(mech: Mechanism) -> list[int]:
    """Evict or cancel most-recently-born active jobs until the committed load fits."""
    removed = []
    load = mech.committed_load()
    while load > mech.params.capacity and mech.active:
        j = mech.jobs[mech.active[-1]]
        load -= mech._contribution(j)
        state = JobState.EVICTED if j.state is JobState.EXECUTING else JobState.CANCELLED
        mech._deactivate(j, state)
        settle_payment(j)
        mech._emit(state.value, j.job_id, load_after=load)
        removed.append(j.job_id)
    return removed


def settle_payment(job: JobRecord) -> float:
    if job.state is JobState.COMPLETED:
        _, d = job.realized
        job.payment = job.menu.price(job.start, job.demand, d)
        ok = job.reported_sow.demand >= job.true_sow.demand
        job.value = value_at(job.true_sow.value, job.finish) if ok else 0.0
    else:
        job.payment = 0.0
        job.value = 0.0
    return job.payment


def run_mechanism(
    instance: Instance,
    policy: InfoPolicy | None = None,
    seed: int = 0,
    reports: dict | None = None,
    realizations: dict | None = None,
) -> Mechanism:
    """Run every birth of ``instance`` through a fresh engine.

    ``reports`` optionally maps job ids to misreported statements of work and
    ``realizations`` pins the (arrival, duration) of chosen jobs.
    """
    mech = Mechanism(instance.params, policy, seed)
    reports = reports or {}
    realizations = realizations or {}
    pending = list(instance.births)
    i = 0
    while not mech.finished:
        while i < len(pending) and pending[i].birth == mech.round:
            b = pending[i]
            mech.submit(b.job_id, reports.get(b.job_id, b.sow), b.sow, realizations.get(b.job_id))
            i += 1
        mech.advance()
    return mech


# --- trace files ------------------------------------------------------------

SUMMARY_FIELDS = ["job_id", "birth", "a", "d", "start", "finish", "value", "payment", "utility", "outcome"]


def write_trace(events: Iterable[Event], path) -> None:
    with open(path, "w") as fh:
        for ev in events:
            fh.write(json.dumps(ev.to_dict()) + "\n")


def read_trace(path) -> list[Event]:
    with open(path) as fh:
        return [Event(**json.loads(line)) for line in fh if line.strip()]


def job_summary_rows(mech: Mechanism) -> list[dict]:
    rows = []
    for j in mech.jobs.values():
        rows.append({
            "job_id": j.job_id,
            "birth": j.birth,
            "a": j.realized[0],
            "d": j.realized[1],
            "start": _plain(j.start) if j.start is not None else "",
            "finish": _plain(j.finish),
            "value": j.value,
            "payment": j.payment,
            "utility": j.utility,
            "outcome": j.state.value,
        })
    return rows


def write_job_summary(mech: Mechanism, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=SUMMARY_FIELDS)
        w.writeheader()
        w.writerows(job_summary_rows(mech))
