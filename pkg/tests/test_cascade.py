"""State-space and transition-probability unit tests."""

import math

import numpy as np
import pytest

from cascademc import (
    ComponentStatus,
    ContradictionError,
    DispatchCache,
    OutageModel,
    SystemState,
    TransitionRecord,
    outage_probabilities,
    path_probability,
    path_proposal_probability,
    transition_probability,
)
from cascademc.fixtures import fixture_names, load_fixture


FIXTURES = {name: load_fixture(name) for name in fixture_names()}


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(p0=-0.1, p1=0.5),
        dict(p0=0.6, p1=0.5),
        dict(p0=0.1, p1=0.5, p_e=0.2),
        dict(p0=0.1, p1=0.5, p_max=0.4),
        dict(p0=0.1, p1=0.5, p_max=1.5),
    ],
)
def test_outage_model_rejects_inconsistent_levels(kwargs):
    with pytest.raises(ValueError, match="p_e <= p0 <= p1 <= p_max"):
        OutageModel(**kwargs)


def test_outage_model_accepts_boundaries():
    OutageModel(p0=0.0, p1=0.0, p_e=0.0, p_max=1.0)
    OutageModel(p0=0.5, p1=0.5, p_e=0.5, p_max=0.5)


def test_intact_state():
    net = FIXTURES["ring3"].network
    s = SystemState.intact(net)
    assert s.mask == 0
    assert s.stage == 1
    assert s.tripped == ()
    assert s.status == (ComponentStatus.IN_SERVICE,) * 3
    assert s.in_service().all()


def test_trip_advances_stage_and_sets_bits():
    net = FIXTURES["ring3"].network
    s = SystemState.intact(net).trip([0, 2])
    assert s.mask == 0b101
    assert s.stage == 2
    assert s.tripped == (0, 2)
    assert s.is_tripped(2) and not s.is_tripped(1)
    assert s.status == (
        ComponentStatus.TRIPPED,
        ComponentStatus.IN_SERVICE,
        ComponentStatus.TRIPPED,
    )


def test_trip_is_absorbing():
    net = FIXTURES["ring3"].network
    s = SystemState.intact(net).trip([1])
    with pytest.raises(ContradictionError):
        s.trip([1])


def test_trip_rejects_out_of_range():
    net = FIXTURES["ring3"].network
    with pytest.raises(ValueError, match="component range"):
        SystemState.intact(net).trip([3])


def test_advance_keeps_mask():
    net = FIXTURES["ring3"].network
    s = SystemState.intact(net).trip([0]).advance()
    assert s.mask == 0b001
    assert s.stage == 3


def test_state_validation():
    with pytest.raises(ValueError, match="stage"):
        SystemState(mask=0, stage=0, n_components=3)
    with pytest.raises(ValueError, match="outside"):
        SystemState(mask=0b1000, stage=1, n_components=3)
    with pytest.raises(ValueError, match="outside"):
        SystemState(mask=-1, stage=1, n_components=3)


def test_outage_probabilities_stage1_vs_later():
    fx = FIXTURES["ring3"]
    net, model = fx.network, fx.model
    cache = DispatchCache(net)
    s1 = SystemState.intact(net)
    p_stage1 = outage_probabilities(net, s1, cache.get(0).flows, model)
    # intact ring3 has no at-limit branch, so everything sits at p0
    assert p_stage1.tolist() == [model.p0] * 3

    s2 = s1.trip([0])
    flows = cache.get(s2.mask).flows
    p_stage2 = outage_probabilities(net, s2, flows, model)
    # branch c carries exactly its 64 MW limit after the trip: p1 applies;
    # tripped branch a is absorbing (0); b idles at p_e = 0
    assert p_stage2.tolist() == [0.0, model.p_e, model.p1]


def test_outage_probabilities_at_limit_counts_as_overloaded():
    fx = FIXTURES["duo2"]
    net, model = fx.network, fx.model
    s = SystemState.intact(net)
    flows = DispatchCache(net).get(0).flows
    probs = outage_probabilities(net, s, flows, model)
    # both lines sit exactly at their limits in the intact dispatch
    assert probs.tolist() == [model.p1, model.p1]


def test_outage_probabilities_shape_checks():
    fx = FIXTURES["ring3"]
    s = SystemState.intact(fx.network)
    with pytest.raises(ValueError, match="shape"):
        outage_probabilities(fx.network, s, np.zeros(2), fx.model)
    wrong = SystemState(mask=0, stage=1, n_components=5)
    with pytest.raises(ValueError, match="component count"):
        outage_probabilities(fx.network, wrong, np.zeros(3), fx.model)


def test_markov_property_history_independence():
    # two different histories reaching the same status vector and stage
    # produce identical probability vectors
    fx = FIXTURES["ring3"]
    net, model = fx.network, fx.model
    cache = DispatchCache(net)
    via_a_then_b = SystemState.intact(net).trip([0]).trip([1])
    via_b_then_a = SystemState.intact(net).trip([1]).trip([0])
    assert via_a_then_b == via_b_then_a
    flows = cache.get(via_a_then_b.mask).flows
    pa = outage_probabilities(net, via_a_then_b, flows, model)
    pb = outage_probabilities(net, via_b_then_a, flows, model)
    assert pa.tolist() == pb.tolist()


def test_transition_probability_hand_example():
    probs = np.array([0.25, 0.5, 0.0])
    log_p, p = transition_probability(probs, {0}, {1})
    assert p == pytest.approx(0.25 * 0.5)
    assert log_p == pytest.approx(math.log(0.125))


def test_transition_probability_empty_step():
    probs = np.array([0.25, 0.25])
    log_p, p = transition_probability(probs, set(), {0, 1})
    assert p == pytest.approx(0.5625)
    assert log_p == pytest.approx(math.log(0.5625))


def test_transition_probability_zero_prob_trip():
    probs = np.array([0.0, 0.5])
    log_p, p = transition_probability(probs, {0}, {1})
    assert p == 0.0
    assert log_p == -math.inf


def test_transition_probability_contradictions():
    probs = np.array([1.0, 0.5])
    with pytest.raises(ContradictionError, match="survived"):
        transition_probability(probs, set(), {0, 1})
    with pytest.raises(ContradictionError, match="both"):
        transition_probability(probs, {1}, {1})
    with pytest.raises(IndexError):
        transition_probability(probs, {5}, set())


def test_path_probability_uses_fsum_over_logs():
    records = [
        TransitionRecord(
            stage=i, tripped=(), p_hat=0.5, log_p_hat=math.log(0.5),
            q_hat=0.25, log_q_hat=math.log(0.25),
        )
        for i in range(1, 4)
    ]
    log_p, p = path_probability(records)
    assert p == pytest.approx(0.125)
    assert log_p == pytest.approx(3 * math.log(0.5))
    log_q, q = path_proposal_probability(records)
    assert q == pytest.approx(0.25**3)
    assert log_q == pytest.approx(3 * math.log(0.25))


def test_path_probability_empty_is_one():
    log_p, p = path_probability([])
    assert (log_p, p) == (0.0, 1.0)
