"""JSON instance files.

Field names are the lower_snake_case type and field names of :mod:`sowsched.core`.
Floats are written with ``repr`` precision, so parse/serialize/parse is exact.
"""
from __future__ import annotations

import hashlib
import json
from pathlib import Path

from .core import (
    Birth,
    Instance,
    InstanceParams,
    JointDist,
    SignalModel,
    StatementOfWork,
    ValueFunction,
)


def params_to_dict(p: InstanceParams) -> dict:
    return {
        "capacity": p.capacity,
        "horizon": p.horizon,
        "max_demand": p.max_demand,
        "max_duration": p.max_duration,
        "max_latency": p.max_latency,
        "max_value": p.max_value,
        "signal_model": p.signal_model.value,
        "epsilon": p.epsilon,
    }


def params_from_dict(d: dict) -> InstanceParams:
    return InstanceParams(
        capacity=int(d["capacity"]),
        horizon=int(d["horizon"]),
        max_demand=int(d["max_demand"]),
        max_duration=int(d["max_duration"]),
        max_latency=int(d["max_latency"]),
        max_value=float(d["max_value"]),
        signal_model=SignalModel(d.get("signal_model", "no_signal")),
        epsilon=float(d.get("epsilon", 0.1)),
    )


def sow_to_dict(s: StatementOfWork) -> dict:
    return {
        "value": {"birth": s.value.birth, "steps": [[t, v] for t, v in s.value.steps]},
        "demand": s.demand,
        "dist": {"support": [[a, d, p] for a, d, p in s.dist.support]},
    }


def sow_from_dict(d: dict) -> StatementOfWork:
    v = d["value"]
    return StatementOfWork(
        value=ValueFunction(int(v["birth"]), tuple((int(t), float(x)) for t, x in v["steps"])),
        demand=int(d["demand"]),
        dist=JointDist(tuple((int(a), int(du), float(p)) for a, du, p in d["dist"]["support"])),
    )


def instance_to_dict(inst: Instance) -> dict:
    births = []
    for b in inst.births:
        entry = {"job_id": b.job_id, "birth": b.birth, "sow": sow_to_dict(b.sow)}
        if b.prior is not None:
            entry["prior"] = [{"prob": q, "sow": sow_to_dict(s)} for q, s in b.prior]
        births.append(entry)
    return {"instance_params": params_to_dict(inst.params), "birth_sequence": births}


def instance_from_dict(d: dict) -> Instance:
    births = []
    for e in d["birth_sequence"]:
        prior = e.get("prior")
        if prior is not None:
            prior = tuple((float(x["prob"]), sow_from_dict(x["sow"])) for x in prior)
        births.append(Birth(int(e["job_id"]), int(e["birth"]), sow_from_dict(e["sow"]), prior))
    return Instance(params_from_dict(d["instance_params"]), tuple(births))


def dumps_instance(inst: Instance) -> str:
    return json.dumps(instance_to_dict(inst), indent=2) + "\n"


def loads_instance(text: str) -> Instance:
    return instance_from_dict(json.loads(text))


def save_instance(inst: Instance, path) -> None:
    Path(path).write_text(dumps_instance(inst))


def load_instance(path) -> Instance:
    return loads_instance(Path(path).read_text())


def instance_hash(inst: Instance) -> str:
    return hashlib.sha256(dumps_instance(inst).encode()).hexdigest()[:16]
