"""Bundle pricing for the stochastic variant.

An LP solution is split into bundles: each bundle reserves ``Cmax`` units in
every round it touches and carries outcome weight at most ``Cmax``.  Each
bundle is then priced per unit at half its average value density, and a
bundle accepts new allocations until it has sold ``2 Cmax`` units of width.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..core import InstanceParams
from ..errors import ConstructionFailed
from .allocation import USAGE_TOL, IntervalAllocation, RelaxedAlgorithm
from .lp import LpSolution, solve_relaxed_lp

Z_TOL = 1e-12


def duration_class(d: int) -> int:
    return int(math.ceil(math.log2(d))) if d > 1 else 0


@dataclass
class Bundle:
    klass: int
    units: float  # per touched round
    rounds: set = field(default_factory=set)
    pieces: list = field(default_factory=list)  # (outcome index, z share)
    value: float = 0.0  # V(A_k)
    weight: float = 0.0  # W(A_k)
    price: float | None = None  # per unit
    sold: float = 0.0  # R_k

    def span_with(self, rounds) -> int:
        r = self.rounds | set(rounds)
        return max(r) - min(r) + 1

    def to_dict(self) -> dict:
        return {
            "klass": self.klass,
            "units": self.units,
            "rounds": sorted(self.rounds),
            "pieces": [[i, z] for i, z in self.pieces],
            "value": self.value,
            "weight": self.weight,
            "price": self.price,
            "sold": self.sold,
        }


@dataclass
class UnitAllocation:
    bundles: list
    solution: LpSolution
    retained_z: np.ndarray
    cmax: int
    budget: float

    @property
    def retained_value(self) -> float:
        return float(sum(o.value * z for o, z in zip(self.solution.outcomes, self.retained_z)))

    @property
    def retention(self) -> float:
        v = self.solution.value
        return self.retained_value / v if v > 0 else 1.0

    def units_per_round(self) -> dict:
        out: dict = {}
        for b in self.bundles:
            for t in b.rounds:
                out[t] = out.get(t, 0.0) + b.units
        return out

    def check(self) -> list[str]:
        """Return descriptions of violated definition bullets (empty if all hold)."""
        problems = []
        outs = self.solution.outcomes
        for k, b in enumerate(self.bundles):
            for i, _ in b.pieces:
                if not set(outs[i].rounds) <= b.rounds or outs[i].width > b.units + USAGE_TOL:
                    problems.append(f"bundle {k}: outcome {i} not contained")
            w = sum(outs[i].width * z for i, z in b.pieces)
            if w > self.cmax * (1 + USAGE_TOL):
                problems.append(f"bundle {k}: weight {w} > Cmax")
            if b.rounds and b.units < self.cmax:
                problems.append(f"bundle {k}: fewer than Cmax units per round")
        for t, u in self.units_per_round().items():
            if u > self.budget * (1 + USAGE_TOL):
                problems.append(f"round {t}: {u} units > budget {self.budget}")
        return problems

    def to_dict(self) -> dict:
        return {
            "cmax": self.cmax,
            "budget": self.budget,
            "retention": self.retention,
            "retained_z": self.retained_z.tolist(),
            "bundles": [b.to_dict() for b in self.bundles],
        }


def build_fractional_unit_allocation(
    sol: LpSolution, cmax: int, budget: float | None = None, strict: bool = False
) -> UnitAllocation:
    """Pack LP weight into bundles of ``cmax`` units per touched round.

    Outcomes are grouped by power-of-two duration class and first-fit into
    open bundles of their class, splitting an outcome's weight across bundles
    when one fills up.  A bundle may grow to cover new rounds only while its
    span stays within twice its class length and every round keeps at most
    ``budget`` reserved units.  Weight that cannot be placed is dropped.
    """
    budget = sol.supply if budget is None else budget
    slots = int(math.floor(budget / cmax + USAGE_TOL))
    outs = sol.outcomes
    order = sorted(
        (i for i in range(len(outs)) if sol.z[i] > Z_TOL),
        key=lambda i: (duration_class(outs[i].duration), outs[i].start, outs[i].job_id,
                       outs[i].sow_index, outs[i].task),
    )
    used: dict = {}
    bundles: list[Bundle] = []
    retained = np.zeros(len(outs))

    def has_room(rounds):
        return all(used.get(t, 0) < slots for t in rounds)

    for i in order:
        o = outs[i]
        k = duration_class(o.duration)
        limit = 2 * (1 << k)
        left = float(sol.z[i])
        for b in bundles:
            if left <= Z_TOL:
                break
            if b.klass != k or b.weight >= cmax * (1 - USAGE_TOL):
                continue
            new = set(o.rounds) - b.rounds
            if b.span_with(o.rounds) > limit or not has_room(new):
                continue
            take = min(left, (cmax - b.weight) / o.width)
            for t in new:
                used[t] = used.get(t, 0) + 1
            b.rounds |= new
            b.pieces.append((i, take))
            b.weight += take * o.width
            b.value += take * o.value
            retained[i] += take
            left -= take
        while left > Z_TOL:
            if not has_room(o.rounds):
                if strict:
                    raise ConstructionFailed(f"no room for outcome {i}")
                break
            take = min(left, cmax / o.width)
            for t in o.rounds:
                used[t] = used.get(t, 0) + 1
            bundles.append(Bundle(k, float(cmax), set(o.rounds), [(i, take)],
                                  take * o.value, take * o.width))
            retained[i] += take
            left -= take
    return UnitAllocation(bundles, sol, retained, cmax, budget)


def bundle_price_menu(ua: UnitAllocation) -> UnitAllocation:
    """Set each bundle's per-unit price to ``V(A_k) / (2 W(A_k))``; empty bundles stay unpriced."""
    for b in ua.bundles:
        b.price = b.value / (2.0 * b.weight) if b.weight > 0 else None
        b.sold = 0.0
    return ua


class BundlePriceAlgorithm(RelaxedAlgorithm):
    """Receptive menu over priced bundles; an interval costs ``width * p_k`` in its cheapest feasible bundle."""

    def __init__(self, params: InstanceParams, supply: float, unit_allocation: UnitAllocation):
        super().__init__(params, supply)
        self.unit_allocation = bundle_price_menu(unit_allocation)
        self.bundles = self.unit_allocation.bundles
        self._priced = [k for k, b in enumerate(self.bundles) if b.price is not None]
        self.assignments: list = []  # (job_id, task, bundle index)

    @classmethod
    def from_priors(cls, births, params: InstanceParams, supply: float, **kw) -> "BundlePriceAlgorithm":
        """Solve the LP at half the supply, build bundles, and price them."""
        sol = solve_relaxed_lp(births, params, supply / 2.0, **kw)
        ua = build_fractional_unit_allocation(sol, params.max_demand)
        return cls(params, supply, ua)

    def _cheapest(self, sold, start, duration, width):
        best, best_k = math.inf, None
        rounds = range(start, start + duration)
        cap = 2 * self.params.max_demand * (1 + USAGE_TOL)
        for k in self._priced:
            b = self.bundles[k]
            if width + sold[k] > cap or width > b.units + USAGE_TOL:
                continue
            if not all(t in b.rounds for t in rounds):
                continue
            price = width * b.price
            if price < best:
                best, best_k = price, k
        return best, best_k

    def interval_price(self, start, duration, width, demand=None):
        return self._cheapest([b.sold for b in self.bundles], start, duration, width)[0]

    def _begin(self):
        return {"sold": [b.sold for b in self.bundles], "placed": []}

    def _price_in(self, scratch, x: IntervalAllocation) -> float:
        return self._cheapest(scratch["sold"], x.start, x.duration, x.width)[0]

    def _place_in(self, scratch, x: IntervalAllocation) -> None:
        _, k = self._cheapest(scratch["sold"], x.start, x.duration, x.width)
        scratch["sold"][k] += x.width
        scratch["placed"].append((x.task, k))

    def _commit(self, scratch) -> None:
        for b, s in zip(self.bundles, scratch["sold"]):
            b.sold = s
        self._last_placed = scratch["placed"]

    def _record(self, fsow, agg, job_id, forced):
        super()._record(fsow, agg, job_id, forced)
        self.assignments.extend((job_id, task, k) for task, k in self._last_placed)
