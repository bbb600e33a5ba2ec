"""Relaxed scheduling LP over outcomes and a small dense simplex solver.

An outcome is one interval placement of one task of one statement of work in
a job's prior.  Variables are the outcome weights ``z``; rows cap expected
per-round usage by the supply and each task's total weight by the
probability of its statement of work.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass

import numpy as np

from ..core import Birth, InstanceParams, relax_sow, value_at
from ..errors import SizeExceeded

logger = logging.getLogger(__name__)

FEAS_TOL = 1e-9


@dataclass(frozen=True)
class Outcome:
    job_id: int
    sow_index: int
    task: int
    start: int
    duration: int
    width: float
    value: float
    prob: float  # probability of the statement of work

    @property
    def group(self) -> tuple:
        return (self.job_id, self.sow_index, self.task)

    @property
    def rounds(self) -> range:
        return range(self.start, self.start + self.duration)


@dataclass
class LpSolution:
    outcomes: list
    z: np.ndarray
    value: float
    supply: float
    pivots: int = 0

    def to_dict(self) -> dict:
        return {
            "supply": self.supply,
            "value": self.value,
            "pivots": self.pivots,
            "outcomes": [dict(asdict(o), z=float(zi)) for o, zi in zip(self.outcomes, self.z)],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LpSolution":
        outs, z = [], []
        for row in d["outcomes"]:
            row = dict(row)
            z.append(row.pop("z"))
            outs.append(Outcome(**row))
        return cls(outs, np.array(z, dtype=float), d["value"], d["supply"], d.get("pivots", 0))


def prior_of(b: Birth):
    return b.prior if b.prior is not None else ((1.0, b.sow),)


def enumerate_outcomes(births, params: InstanceParams, max_outcomes: int = 10_000) -> list[Outcome]:
    """All worthwhile placements: positive value and completion within the horizon."""
    out = []
    for b in births:
        for k, (q, sow) in enumerate(prior_of(b)):
            fs = relax_sow(sow)
            for i, (a, d, lam) in enumerate(fs.tasks):
                for s in range(a, b.birth + params.max_latency + 1):
                    if s + d - 1 > params.horizon:
                        break
                    v = value_at(fs.value, s + d)
                    if v <= 0:
                        continue
                    out.append(Outcome(b.job_id, k, i, s, d, lam * fs.demand, lam * v, q))
                    if len(out) > max_outcomes:
                        raise SizeExceeded(f"more than {max_outcomes} outcomes")
    return out


def lp_rows(outcomes, supply: float):
    """Dense ``A z <= b`` rows: supply rows first (ascending round), then task rows."""
    rounds = sorted({t for o in outcomes for t in o.rounds})
    groups = sorted({o.group for o in outcomes})
    r_index = {t: r for r, t in enumerate(rounds)}
    g_index = {g: len(rounds) + k for k, g in enumerate(groups)}
    A = np.zeros((len(rounds) + len(groups), len(outcomes)))
    b = np.empty(A.shape[0])
    b[: len(rounds)] = supply
    for j, o in enumerate(outcomes):
        for t in o.rounds:
            A[r_index[t], j] = o.width
        A[g_index[o.group], j] = 1.0
        b[g_index[o.group]] = o.prob
    return A, b, rounds, groups


def simplex_max(c, A, b, tol: float = FEAS_TOL, max_pivots: int = 200_000, log=None):
    """Maximise ``c @ x`` s.t. ``A x <= b``, ``x >= 0`` with ``b >= 0``.

    Dense tableau, slack starting basis, Bland's rule for entering and leaving
    variables.  Returns ``(x, value, pivots)``.
    """
    A = np.asarray(A, dtype=float)
    m, n = A.shape
    if n == 0:
        return np.zeros(0), 0.0, 0
    if np.any(np.asarray(b) < 0):
        raise ValueError("right-hand side must be non-negative")
    T = np.zeros((m + 1, n + m + 1))
    T[:m, :n] = A
    T[:m, n : n + m] = np.eye(m)
    T[:m, -1] = b
    T[m, :n] = -np.asarray(c, dtype=float)
    basis = list(range(n, n + m))
    pivots = 0
    while True:
        neg = np.nonzero(T[m, :-1] < -tol)[0]
        if neg.size == 0:
            break
        col = int(neg[0])
        colv = T[:m, col]
        rows = np.nonzero(colv > tol)[0]
        if rows.size == 0:
            raise RuntimeError("LP is unbounded")
        ratios = T[rows, -1] / colv[rows]
        best = ratios.min()
        ties = rows[ratios <= best + tol]
        row = int(min(ties, key=lambda r: basis[r]))
        T[row] /= T[row, col]
        others = np.arange(m + 1) != row
        T[others] -= np.outer(T[others, col], T[row])
        basis[row] = col
        pivots += 1
        if log is not None:
            log.append((pivots, col, row, float(T[m, -1])))
        if pivots > max_pivots:
            raise RuntimeError("pivot limit reached")
    x = np.zeros(n + m)
    x[basis] = T[:m, -1]
    x = np.clip(x[:n], 0.0, None)
    return x, float(np.dot(c, x)), pivots


def solve_relaxed_lp(births, params: InstanceParams, supply: float, max_outcomes: int = 10_000) -> LpSolution:
    outcomes = enumerate_outcomes(births, params, max_outcomes)
    if not outcomes:
        return LpSolution([], np.zeros(0), 0.0, supply)
    A, b, _, _ = lp_rows(outcomes, supply)
    c = np.array([o.value for o in outcomes])
    z, val, pivots = simplex_max(c, A, b)
    z = np.minimum(z, 1.0)
    logger.debug("relaxed LP: %d outcomes, %d rows, %d pivots", len(outcomes), len(b), pivots)
    return LpSolution(outcomes, z, val, supply, pivots)


def lp_residuals(sol: LpSolution) -> dict:
    """Largest violation of each row family, recomputed from scratch."""
    supply_use: dict = {}
    group_use: dict = {}
    for o, zi in zip(sol.outcomes, sol.z):
        for t in o.rounds:
            supply_use[t] = supply_use.get(t, 0.0) + o.width * zi
        group_use[o.group] = group_use.get(o.group, 0.0) + zi
    probs = {o.group: o.prob for o in sol.outcomes}
    return {
        "supply": max([u - sol.supply for u in supply_use.values()], default=0.0),
        "probability": max([u - probs[g] for g, u in group_use.items()], default=0.0),
        "bounds": max([float(-sol.z.min()), float(sol.z.max() - 1)], default=0.0) if len(sol.z) else 0.0,
    }
