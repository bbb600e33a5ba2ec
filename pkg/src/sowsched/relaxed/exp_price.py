"""Exponential posted prices for the adversarial variant.

Per-unit price in a round with usage ``y`` is ``(4 H Dmax) ** (y / supply) / (2 Dmax)``,
so it runs from ``1/(2 Dmax)`` on an idle round to ``2H`` on a full one.
"""
from __future__ import annotations

import math

import numpy as np

from ..core import InstanceParams
from ..errors import CapacityViolation
from .allocation import USAGE_TOL, AggregateAllocation, RelaxedAlgorithm


def unit_price(y, supply: float, max_value: float, max_duration: int):
    base = 4.0 * max_value * max_duration
    return np.power(base, np.asarray(y, dtype=float) / supply) / (2.0 * max_duration)


class ExpPriceAlgorithm(RelaxedAlgorithm):
    def __init__(self, params: InstanceParams, supply: float):
        super().__init__(params, supply)

    @property
    def prices(self) -> np.ndarray:
        return unit_price(self.usage, self.supply, self.params.max_value, self.params.max_duration)

    def interval_price(self, start: int, duration: int, width: float, demand: float | None = None) -> float:
        y = self.usage[start : start + duration]
        # not on the menu if the owning job's full demand would overfill a round
        need = width if demand is None else max(width, demand)
        if np.any(y + need > self.supply):
            return math.inf
        p = unit_price(y, self.supply, self.params.max_value, self.params.max_duration)
        return float(width * p.sum())

    def _record(self, fsow, agg, job_id, forced):
        super()._record(fsow, agg, job_id, forced)
        if np.any(self.usage > self.supply * (1 + USAGE_TOL)):
            raise CapacityViolation("relaxed usage exceeds the algorithm's supply")

    def feasibility_margin(self) -> float:
        """Supply in units of ``Cmax * log2(4 H Dmax)``; prices alone keep usage in bounds when >= 1."""
        p = self.params
        return self.supply / (p.max_demand * math.log2(4 * p.max_value * p.max_duration))


def adv_price_update(alg: ExpPriceAlgorithm, agg: AggregateAllocation) -> ExpPriceAlgorithm:
    """Add an allocation's per-round amounts to usage; prices follow from usage."""
    for x in agg.parts:
        if x is not None:
            alg.usage[x.start : x.start + x.duration] += x.width
    return alg
