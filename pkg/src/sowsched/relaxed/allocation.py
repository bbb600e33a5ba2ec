"""Interval allocations and the shared receptive menu-based algorithm interface."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..core import NEVER, FractionalSoW, InstanceParams, value_at
from ..errors import RejectedOverride
from ..mechanism import LaunchPlan, PriceMenu

# slack for comparing accumulated float usage against a supply bound
USAGE_TOL = 1e-9


@dataclass(frozen=True)
class IntervalAllocation:
    """``width`` units in every round of ``[start, start + duration)`` for one task.

    ``demand`` is the owning job's full demand, used by menus that check
    feasibility for the whole job rather than the task's share.
    """

    task: int
    start: int
    duration: int
    width: float
    demand: float | None = None

    @property
    def rounds(self) -> range:
        return range(self.start, self.start + self.duration)


@dataclass(frozen=True)
class AggregateAllocation:
    parts: tuple  # IntervalAllocation or None per task

    @classmethod
    def empty(cls, n: int) -> "AggregateAllocation":
        return cls((None,) * n)

    def value(self, fsow: FractionalSoW) -> float:
        total = 0.0
        for x, (_, d, lam) in zip(self.parts, fsow.tasks):
            if x is not None:
                total += lam * value_at(fsow.value, x.start + d)
        return total

    @property
    def is_empty(self) -> bool:
        return all(x is None for x in self.parts)


def plan_allocation(fsow: FractionalSoW, plan: LaunchPlan) -> AggregateAllocation:
    """The aggregate allocation a launch plan induces on a relaxed job."""
    parts = []
    for i, (a, d, lam) in enumerate(fsow.tasks):
        s = plan.start_for(a, d)
        parts.append(None if s is NEVER else IntervalAllocation(i, s, d, lam * fsow.demand, fsow.demand))
    return AggregateAllocation(tuple(parts))


@dataclass
class AllocationRecord:
    job_id: object
    fsow: FractionalSoW
    allocation: AggregateAllocation
    price: float
    forced: bool

    @property
    def value(self) -> float:
        return self.allocation.value(self.fsow)


class RelaxedAlgorithm:
    """Menu-based algorithm for the fractional problem that also accepts forced allocations.

    Subclasses implement :meth:`interval_price` and the placement hooks.
    """

    def __init__(self, params: InstanceParams, supply: float):
        self.params = params
        self.supply = float(supply)
        self.records: list[AllocationRecord] = []
        n = params.horizon + params.max_latency + params.max_duration + 2
        self.usage = np.zeros(n)

    # -- pricing ---------------------------------------------------------
    def interval_price(self, start: int, duration: int, width: float, demand: float | None = None) -> float:
        raise NotImplementedError

    def menu_price(self, x: IntervalAllocation) -> float:
        return self.interval_price(x.start, x.duration, x.width, x.demand)

    def menu(self, t: int) -> PriceMenu:
        """Menu for the mechanism: price of a full-width interval at each (start, demand, duration)."""
        p = self.params
        return PriceMenu.from_function(t, p, lambda s, c, d: self.interval_price(s, d, c))

    # -- per-job placement -------------------------------------------------
    def _begin(self):
        """Scratch state for pricing the tasks of one job in sequence."""
        return None

    def _price_in(self, scratch, x: IntervalAllocation) -> float:
        return self.menu_price(x)

    def _place_in(self, scratch, x: IntervalAllocation) -> None:
        pass

    def _commit(self, scratch) -> None:
        pass

    def _best_branch(self, scratch, fsow: FractionalSoW, idx: list):
        """Common start for tasks sharing an (arrival, signal) branch, or None.

        Mirrors the launch-plan rule: earliest start with the largest
        positive surplus, where every task of the branch runs from that start.
        """
        a = fsow.tasks[idx[0]][0]
        best, best_x = 0.0, None
        for s in range(max(a, fsow.birth), fsow.birth + self.params.max_latency + 1):
            parts, surplus = [], 0.0
            for i in idx:
                _, d, lam = fsow.tasks[i]
                x = IntervalAllocation(i, s, d, lam * fsow.demand, fsow.demand)
                price = self._price_in(scratch, x)
                if math.isinf(price):
                    break
                surplus += lam * value_at(fsow.value, s + d) - price
                parts.append(x)
            else:
                if surplus > best:
                    best, best_x = surplus, parts
        return best_x

    def quote(self, fsow: FractionalSoW):
        """Surplus-maximising plan-induced allocation and its surplus, without committing.

        Tasks whose durations the signal cannot tell apart must share a start.
        """
        sm = self.params.signal_model
        groups: dict = {}
        for i, (a, d, _) in enumerate(fsow.tasks):
            groups.setdefault((a, sm.signal(d)), []).append(i)
        scratch = self._begin()
        parts = [None] * len(fsow.tasks)
        for idx in groups.values():
            chosen = self._best_branch(scratch, fsow, idx)
            for x in chosen or ():
                self._place_in(scratch, x)
                parts[x.task] = x
        agg = AggregateAllocation(tuple(parts))
        return agg, agg.value(fsow) - self.aggregate_price(agg)

    def aggregate_price(self, agg: AggregateAllocation) -> float:
        scratch = self._begin()
        total = 0.0
        for x in agg.parts:
            if x is None:
                continue
            price = self._price_in(scratch, x)
            if math.isinf(price):
                return math.inf
            total += price
            self._place_in(scratch, x)
        return total

    def submit(self, fsow: FractionalSoW, job_id=None) -> AggregateAllocation:
        agg, _ = self.quote(fsow)
        self._record(fsow, agg, job_id, forced=False)
        return agg

    def force(self, fsow: FractionalSoW, agg: AggregateAllocation, job_id=None) -> None:
        """Record an externally chosen allocation whose value covers its price."""
        price = self.aggregate_price(agg)
        if math.isinf(price):
            raise RejectedOverride("allocation is infeasible under the current menu")
        value = agg.value(fsow)
        if value < price:
            raise RejectedOverride(f"value {value:.6g} below price {price:.6g}")
        self._record(fsow, agg, job_id, forced=True)

    def _record(self, fsow, agg, job_id, forced):
        scratch = self._begin()
        total = 0.0
        for x in agg.parts:
            if x is None:
                continue
            total += self._price_in(scratch, x)
            self._place_in(scratch, x)
            self.usage[x.start : x.start + x.duration] += x.width
        self._commit(scratch)
        self.records.append(AllocationRecord(job_id, fsow, agg, total, forced))

    @property
    def simulated_welfare(self) -> float:
        return sum(r.value for r in self.records)

    def recorded_usage(self) -> np.ndarray:
        """Per-round usage rebuilt from the allocation records."""
        u = np.zeros_like(self.usage)
        for r in self.records:
            for x in r.allocation.parts:
                if x is not None:
                    u[x.start : x.start + x.duration] += x.width
        return u


def submit_fractional_job(alg: RelaxedAlgorithm, fsow: FractionalSoW, job_id=None):
    return alg.submit(fsow, job_id)


def force_allocation(alg: RelaxedAlgorithm, fsow: FractionalSoW, x: AggregateAllocation, job_id=None):
    alg.force(fsow, x, job_id)


def menu_price(alg: RelaxedAlgorithm, x: IntervalAllocation) -> float:
    return alg.menu_price(x)
