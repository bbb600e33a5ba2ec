"""Small hand-built instances used by tests, docs and the CLI smoke run."""
from __future__ import annotations

from .core import (
    Birth,
    Instance,
    InstanceParams,
    JointDist,
    StatementOfWork,
    ValueFunction,
)


def fix_a_params(**overrides) -> InstanceParams:
    kw = dict(capacity=2, horizon=10, max_demand=1, max_duration=2, max_latency=4, max_value=4.0)
    kw.update(overrides)
    return InstanceParams(**kw)


def fix_a_sow() -> StatementOfWork:
    """Born in round 1; arrives at 2 (d=1) or 3 (d=2) with equal odds; worth 4 by round 5."""
    return StatementOfWork(
        ValueFunction(1, ((5, 4.0),)),
        1,
        JointDist(((2, 1, 0.5), (3, 2, 0.5))),
    )


def fix_a(**overrides) -> Instance:
    return Instance(fix_a_params(**overrides), (Birth(1, 1, fix_a_sow()),))


def fix_b_sow(x: int = 3, birth: int = 1) -> StatementOfWork:
    """Unit job that arrives ``k`` rounds after birth w.p. 2^(k-x) (k < x) or 2^-x (k = x).

    Running it in the round it arrives is worth 2^(x-k).
    """
    support = [(birth + k, 1, 2.0 ** (k - x)) for k in range(x)]
    support.append((birth + x, 1, 2.0 ** (-x)))
    # completion time is arrival + 1
    steps = tuple((birth + k + 1, 2.0 ** (x - k)) for k in range(x + 1))
    return StatementOfWork(ValueFunction(birth, steps), 1, JointDist(tuple(support)))


def fix_b_params(x: int = 3, **overrides) -> InstanceParams:
    kw = dict(
        capacity=1, horizon=x + 4, max_demand=1, max_duration=1,
        max_latency=x + 1, max_value=2.0 ** x,
    )
    kw.update(overrides)
    return InstanceParams(**kw)


def fix_b(x: int = 3) -> Instance:
    return Instance(fix_b_params(x), (Birth(1, 1, fix_b_sow(x)),))
