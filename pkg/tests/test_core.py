import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sowsched.core import (
    NEVER,
    InstanceParams,
    JointDist,
    SignalModel,
    StatementOfWork,
    ValueFunction,
    relax_sow,
    rng_stream,
    sample_realization,
    validate_sow,
    value_at,
)
from sowsched.fixtures import fix_a_params, fix_a_sow, fix_b_sow
from sowsched.instances import dumps_instance, instance_hash, loads_instance
from sowsched.fixtures import fix_a, fix_b

from conftest import param_sets, small_params, sows


def codes(violations):
    return [v.code for v in violations]


def test_fix_a_is_valid():
    assert validate_sow(fix_a_sow(), fix_a_params()) == []


def test_demand_above_max_is_flagged():
    s = fix_a_sow()
    bad = StatementOfWork(s.value, 2, s.dist)
    assert codes(validate_sow(bad, fix_a_params())) == ["DemandExceedsMax"]


def test_unnormalized_distribution_is_flagged():
    s = fix_a_sow()
    bad = StatementOfWork(s.value, 1, JointDist(((2, 1, 0.5), (3, 2, 0.4))))
    assert codes(validate_sow(bad, fix_a_params())) == ["DistNotNormalized"]


@pytest.mark.parametrize(
    "sow, code",
    [
        (StatementOfWork(ValueFunction(1, ((3, 2.0), (4, 3.0))), 1, JointDist.point(1, 1)), "ValueNotMonotone"),
        (StatementOfWork(ValueFunction(1, ((3, 0.5),)), 1, JointDist.point(1, 1)), "ValueOutOfRange"),
        (StatementOfWork(ValueFunction(1, ((3, 9.0),)), 1, JointDist.point(1, 1)), "ValueOutOfRange"),
        (StatementOfWork(ValueFunction(1, ((6, 4.0),)), 1, JointDist.point(1, 1)), "ValueBeyondLatency"),
        (StatementOfWork(ValueFunction(2, ((4, 4.0),)), 1, JointDist.point(1, 1)), "ArrivalBeforeBirth"),
        (StatementOfWork(ValueFunction(1, ((4, 4.0),)), 1, JointDist.point(1, 3)), "DurationOutOfRange"),
        (StatementOfWork(ValueFunction(1, ((4, 4.0),)), 1, JointDist(((1, 1, 0.5), (1, 1, 0.5)))), "DuplicateSupport"),
        (StatementOfWork(ValueFunction(1, ((4, 4.0),)), 1, JointDist(())), "EmptySupport"),
    ],
)
def test_violation_codes(sow, code):
    assert code in codes(validate_sow(sow, fix_a_params()))


def test_worthless_sow_is_valid_but_warns(caplog):
    sow = StatementOfWork(ValueFunction(1, ((2, 4.0),)), 1, JointDist.point(3, 1))
    with caplog.at_level("WARNING", logger="sowsched.core"):
        assert validate_sow(sow, fix_a_params()) == []
    assert "worth 0" in caplog.text


def test_params_reject_latency_below_duration():
    with pytest.raises(ValueError):
        InstanceParams(capacity=2, horizon=5, max_demand=1, max_duration=3, max_latency=2, max_value=2)


def test_value_at_steps_and_never():
    V = ValueFunction(1, ((5, 4.0),))
    assert value_at(V, 5) == 4.0
    assert value_at(V, 6) == 0.0
    assert value_at(V, NEVER) == 0.0
    two = ValueFunction(1, ((3, 4.0), (6, 2.0)))
    assert [two(t) for t in range(1, 8)] == [4, 4, 4, 2, 2, 2, 0]


@given(sows(small_params()), st.integers(0, 20))
def test_value_is_non_increasing(sow, t):
    assert value_at(sow.value, t) >= value_at(sow.value, t + 1)


def test_point_distribution_sample():
    assert sample_realization(JointDist.point(2, 1), rng_stream(0, 1)) == (2, 1)


def test_sampling_frequency_within_hoeffding_band():
    P = JointDist(((2, 1, 0.5), (3, 2, 0.5)))
    rng = rng_stream(7, 1, "freq")
    n = 100_000
    idx = rng.choice(2, size=n, p=P.probs)
    freq = np.bincount(idx, minlength=2) / n
    band = math.sqrt(math.log(2 / 1e-3) / (2 * n))
    assert np.max(np.abs(freq - P.probs)) <= band
    # the scalar sampler uses the same generator call
    draws = [sample_realization(P, rng_stream(3, j, "freq")) for j in range(2000)]
    assert abs(sum(x == (2, 1) for x in draws) / 2000 - 0.5) < 0.05


def test_streams_are_deterministic_and_separate():
    a = rng_stream(5, 2, "realize").random(10)
    b = rng_stream(5, 2, "realize").random(10)
    c = rng_stream(5, 2, "oracle").random(10)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_relax_two_point():
    fs = relax_sow(fix_a_sow())
    assert fs.tasks == ((2, 1, 0.5), (3, 2, 0.5))
    assert fs.demand == 1 and fs.value == fix_a_sow().value


def test_relax_point_distribution():
    sow = StatementOfWork(ValueFunction(1, ((4, 2.0),)), 1, JointDist.point(1, 1))
    assert relax_sow(sow).tasks == ((1, 1, 1.0),)


def test_relax_fix_b_weights():
    assert [lam for _, _, lam in relax_sow(fix_b_sow()).tasks] == [1 / 8, 1 / 4, 1 / 2, 1 / 8]


@given(param_sets().flatmap(lambda p: sows(p)))
def test_relax_preserves_mass_and_count(sow):
    fs = relax_sow(sow)
    assert len(fs.tasks) == len(sow.dist)
    assert abs(math.fsum(lam for _, _, lam in fs.tasks) - 1.0) <= 1e-12


@given(param_sets().flatmap(lambda p: sows(p)))
def test_generated_sows_validate(sow):
    # the strategy draws parameters independently, so validate against loose params
    p = InstanceParams(capacity=3, horizon=20, max_demand=3, max_duration=3, max_latency=8, max_value=8.0)
    assert [v for v in validate_sow(sow, p, warn=False) if v.code != "ValueBeyondLatency"] == []


@pytest.mark.parametrize("inst", [fix_a(), fix_b(), fix_a(signal_model=SignalModel.FULL_DURATION)])
def test_instance_round_trip_is_exact(inst):
    text = dumps_instance(inst)
    back = loads_instance(text)
    assert back == inst
    assert dumps_instance(back) == text
    assert instance_hash(back) == instance_hash(inst)
