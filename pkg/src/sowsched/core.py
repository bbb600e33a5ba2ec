"""Domain types, validation, sampling and the fractional relaxation.

Rounds are integers starting at 1.  A job that never runs has completion
time :data:`NEVER`, a sentinel that supports no arithmetic.
"""
from __future__ import annotations

import bisect
import enum
import logging
import math
import zlib
from dataclasses import dataclass, field
from typing import Iterable, Mapping, NamedTuple

import numpy as np

logger = logging.getLogger(__name__)

PROB_TOL = 1e-12


class _Never:
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "NEVER"

    def __reduce__(self):
        return (_Never, ())


NEVER = _Never()


def is_never(t) -> bool:
    return t is NEVER


class SignalModel(str, enum.Enum):
    NO_SIGNAL = "no_signal"
    FULL_DURATION = "full_duration"

    def signal(self, d: int):
        """Signal observed on arrival: ``None`` (unit) or the duration itself."""
        return d if self is SignalModel.FULL_DURATION else None


@dataclass(frozen=True)
class InstanceParams:
    capacity: int
    horizon: int
    max_demand: int
    max_duration: int
    max_latency: int
    max_value: float
    signal_model: SignalModel = SignalModel.NO_SIGNAL
    epsilon: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "signal_model", SignalModel(self.signal_model))
        problems = []
        if not (self.capacity >= self.max_demand >= 1):
            problems.append("need capacity >= max_demand >= 1")
        if self.horizon < 1:
            problems.append("horizon must be >= 1")
        if self.max_duration < 1:
            problems.append("max_duration must be >= 1")
        if self.max_latency < self.max_duration:
            problems.append("max_latency must be >= max_duration")
        if not (math.isfinite(self.max_value) and self.max_value >= 1):
            problems.append("max_value must be finite and >= 1")
        if not (0 < self.epsilon < 1):
            problems.append("epsilon must lie in (0, 1)")
        if problems:
            raise ValueError("invalid InstanceParams: " + "; ".join(problems))

    def replace(self, **changes) -> "InstanceParams":
        kw = {f: getattr(self, f) for f in self.__dataclass_fields__}
        kw.update(changes)
        return InstanceParams(**kw)


@dataclass(frozen=True)
class ValueFunction:
    """Non-increasing step function: ``V(t) = v_k`` for the first step with ``t <= threshold_k``.

    Past the last threshold the value is 0.
    """

    birth: int
    steps: tuple[tuple[int, float], ...]

    def __post_init__(self):
        object.__setattr__(
            self, "steps", tuple((int(t), float(v)) for t, v in self.steps)
        )
        object.__setattr__(self, "_thresholds", tuple(t for t, _ in self.steps))

    def __call__(self, t) -> float:
        return value_at(self, t)

    @classmethod
    def constant(cls, birth: int, value: float, until: int) -> "ValueFunction":
        return cls(birth, ((until, value),))

    @property
    def last_positive(self) -> int | None:
        """Latest round with positive value, or ``None`` if the function is 0."""
        for t, v in reversed(self.steps):
            if v > 0:
                return t
        return None


@dataclass(frozen=True)
class JointDist:
    support: tuple[tuple[int, int, float], ...]

    def __post_init__(self):
        object.__setattr__(
            self, "support", tuple((int(a), int(d), float(p)) for a, d, p in self.support)
        )

    @classmethod
    def point(cls, a: int, d: int) -> "JointDist":
        return cls(((a, d, 1.0),))

    @classmethod
    def from_mapping(cls, probs: Mapping[tuple[int, int], float]) -> "JointDist":
        return cls(tuple((a, d, p) for (a, d), p in probs.items()))

    @property
    def points(self) -> list[tuple[int, int]]:
        return [(a, d) for a, d, _ in self.support]

    @property
    def probs(self) -> np.ndarray:
        return np.array([p for _, _, p in self.support], dtype=float)

    def __len__(self):
        return len(self.support)


@dataclass(frozen=True)
class StatementOfWork:
    value: ValueFunction
    demand: int
    dist: JointDist

    @property
    def birth(self) -> int:
        return self.value.birth


@dataclass(frozen=True)
class FractionalSoW:
    value: ValueFunction
    demand: int
    tasks: tuple[tuple[int, int, float], ...]

    @property
    def birth(self) -> int:
        return self.value.birth


@dataclass(frozen=True)
class Birth:
    """One entry of a birth sequence; ``prior`` is set for the stochastic variant."""

    job_id: int
    birth: int
    sow: StatementOfWork
    prior: tuple[tuple[float, StatementOfWork], ...] | None = None


@dataclass(frozen=True)
class Instance:
    params: InstanceParams
    births: tuple[Birth, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "births", tuple(self.births))
        rounds = [b.birth for b in self.births]
        if any(r2 < r1 for r1, r2 in zip(rounds, rounds[1:])):
            raise ValueError("birth rounds must be non-decreasing")
        ids = [b.job_id for b in self.births]
        if len(set(ids)) != len(ids):
            raise ValueError("job ids must be unique")

    def job(self, job_id: int) -> Birth:
        for b in self.births:
            if b.job_id == job_id:
                return b
        raise KeyError(job_id)


class Violation(NamedTuple):
    code: str
    message: str


def validate_value(V: ValueFunction, params: InstanceParams) -> list[Violation]:
    out = []
    prev_t, prev_v = None, math.inf
    for t, v in V.steps:
        if not math.isfinite(v):
            out.append(Violation("NonFinite", f"value {v} at threshold {t}"))
            continue
        if prev_t is not None and t <= prev_t:
            out.append(Violation("ThresholdsNotIncreasing", f"threshold {t} after {prev_t}"))
        if v > prev_v:
            out.append(Violation("ValueNotMonotone", f"value rises to {v} at {t}"))
        if v != 0 and not (1 <= v <= params.max_value):
            out.append(Violation("ValueOutOfRange", f"value {v} not in {{0}} U [1, H]"))
        prev_t, prev_v = t, v
    last = V.last_positive
    # completions up to birth + Smax may still carry value
    if last is not None and last > V.birth + params.max_latency:
        out.append(
            Violation("ValueBeyondLatency", f"positive value at round {last} > birth + Smax")
        )
    return out


def validate_sow(sow: StatementOfWork, params: InstanceParams, warn: bool = True) -> list[Violation]:
    """Return every violated invariant of ``sow``; an empty list means valid."""
    out = validate_value(sow.value, params)
    if sow.demand > params.max_demand:
        out.append(Violation("DemandExceedsMax", f"demand {sow.demand} > Cmax"))
    if sow.demand < 1:
        out.append(Violation("DemandBelowOne", f"demand {sow.demand} < 1"))
    sup = sow.dist.support
    if not sup:
        out.append(Violation("EmptySupport", "distribution has no support"))
        return out
    total = math.fsum(p for _, _, p in sup)
    if any(not math.isfinite(p) for _, _, p in sup):
        out.append(Violation("NonFinite", "non-finite probability"))
    elif abs(total - 1.0) > PROB_TOL:
        out.append(Violation("DistNotNormalized", f"probabilities sum to {total!r}"))
    if any(p <= 0 for _, _, p in sup):
        out.append(Violation("NonPositiveProbability", "probabilities must be > 0"))
    if len({(a, d) for a, d, _ in sup}) != len(sup):
        out.append(Violation("DuplicateSupport", "repeated (a, d) entries"))
    for a, d, _ in sup:
        if not 1 <= d <= params.max_duration:
            out.append(Violation("DurationOutOfRange", f"duration {d} not in [1, Dmax]"))
        if a < sow.birth:
            out.append(Violation("ArrivalBeforeBirth", f"arrival {a} < birth {sow.birth}"))
    if warn and all(value_at(sow.value, a + d) == 0 for a, d, _ in sup):
        logger.warning("every supported completion of this SoW is worth 0")
    return out


def validate_instance(instance: Instance) -> list[tuple[int, Violation]]:
    out = []
    for b in instance.births:
        if b.sow.birth != b.birth:
            out.append((b.job_id, Violation("BirthMismatch", "value birth != job birth")))
        out.extend((b.job_id, v) for v in validate_sow(b.sow, instance.params))
        if b.prior is not None:
            total = math.fsum(q for q, _ in b.prior)
            if abs(total - 1.0) > PROB_TOL or any(q <= 0 for q, _ in b.prior):
                out.append((b.job_id, Violation("PriorNotNormalized", f"prior sums to {total!r}")))
            for _, s in b.prior:
                out.extend((b.job_id, v) for v in validate_sow(s, instance.params))
    return out


def value_at(V: ValueFunction, t) -> float:
    if t is NEVER:
        return 0.0
    i = bisect.bisect_left(V._thresholds, t)
    return V.steps[i][1] if i < len(V.steps) else 0.0


def rng_stream(seed: int, job_id: int = 0, purpose: str = "") -> np.random.Generator:
    """Independent generator for one (run seed, job id, purpose) triple."""
    tag = zlib.crc32(purpose.encode())
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(job_id), tag]))


def sample_realization(P: JointDist, rng: np.random.Generator) -> tuple[int, int]:
    i = rng.choice(len(P.support), p=P.probs / P.probs.sum())
    a, d, _ = P.support[i]
    return a, d


def relax_sow(sow: StatementOfWork) -> FractionalSoW:
    return FractionalSoW(sow.value, sow.demand, tuple(sow.dist.support))


def sample_prior(prior: Iterable[tuple[float, StatementOfWork]], rng: np.random.Generator):
    prior = list(prior)
    q = np.array([p for p, _ in prior], dtype=float)
    return prior[rng.choice(len(prior), p=q / q.sum())][1]
