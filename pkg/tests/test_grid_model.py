"""Network model, validation, and case file round trips."""

import json
import math
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cascademc.fixtures import case_path, fixture_names, load_fixture
from cascademc.grid_model import (
    Branch,
    Bus,
    CaseFormatError,
    CaseIntegrityError,
    CaseWarning,
    Generator,
    Network,
    component_count,
    load_case,
    network_from_dict,
    network_to_dict,
    save_case,
)

DATA = Path(__file__).parent / "data"


def tiny_net(**overrides):
    parts = dict(
        buses=(Bus(1, 0.0), Bus(2, 50.0)),
        branches=(Branch("x", 1, 2, 0.1, 60.0),),
        generators=(Generator("g", 1, 100.0),),
        base_mva=100.0,
        name="tiny",
    )
    parts.update(overrides)
    return Network(**parts)


def test_component_ordering_is_by_sorted_branch_id():
    fx = load_fixture("ring3")
    assert [b.id for b in fx.network.branches] == ["a", "b", "c"]
    assert component_count(fx.network) == 3


def test_validate_passes_on_fixtures():
    for name in fixture_names():
        net = load_fixture(name).network
        assert net.validate() is net


@pytest.mark.parametrize(
    "mutation, fragment",
    [
        (dict(buses=()), "no buses"),
        (dict(buses=(Bus(1, 0.0), Bus(1, 1.0))), "duplicate id"),
        (dict(buses=(Bus(1, -5.0), Bus(2, 50.0))), "load_mw"),
        (dict(branches=(Branch("x", 1, 7, 0.1, 60.0),)), "missing bus"),
        (dict(branches=(Branch("x", 1, 1, 0.1, 60.0),)), "self-loop"),
        (dict(branches=(Branch("x", 1, 2, 0.0, 60.0),)), "reactance"),
        (dict(branches=(Branch("x", 1, 2, 0.1, 0.0),)), "flow_limit"),
        (dict(generators=(Generator("g", 9, 100.0),)), "missing bus"),
        (dict(generators=(Generator("g", 1, -1.0),)), "capacity_mw"),
        (dict(base_mva=0.0), "base_mva"),
    ],
)
def test_validation_failures_name_the_component(mutation, fragment):
    with pytest.raises(CaseIntegrityError, match=fragment):
        tiny_net(**mutation).validate()


def test_infinite_flow_limit_allowed():
    tiny_net(branches=(Branch("x", 1, 2, 0.1, math.inf),)).validate()


def test_json_round_trip(tmp_path):
    net = load_fixture("bridge6").network
    path = tmp_path / "copy.json"
    save_case(net, path)
    again = load_case(path)
    assert network_to_dict(again) == network_to_dict(net)


def test_unknown_json_keys_warn():
    doc = network_to_dict(tiny_net())
    doc["coordinates"] = {"1": [0, 0]}
    with pytest.warns(CaseWarning, match="coordinates"):
        network_from_dict(doc)


def test_missing_required_keys_rejected():
    with pytest.raises(CaseFormatError, match="missing keys"):
        network_from_dict({"buses": []})


def test_invalid_json_reports_position(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"buses": [,]}')
    with pytest.raises(CaseFormatError, match="line 1"):
        load_case(bad)


def test_matrix_case_subset():
    with pytest.warns(CaseWarning):
        net = load_case(DATA / "sample_case.m")
    # branch row 3 is out of service, gen row 1 is off
    assert len(net.branches) == 3
    assert len(net.generators) == 1
    assert net.total_load == 125.0
    assert net.base_mva == 100.0
    # zero rating becomes unlimited
    by_id = {b.id: b for b in net.branches}
    assert by_id[1].flow_limit_mw == math.inf
    assert by_id[0].flow_limit_mw == 120.0


def test_matrix_case_requires_tables(tmp_path):
    stub = tmp_path / "stub.m"
    stub.write_text("mpc.baseMVA = 100;\nmpc.bus = [1 3 0];\n")
    with pytest.raises(CaseFormatError, match="mpc.branch"):
        load_case(stub)


def test_case300_invariants():
    net = load_case(case_path("case300"))
    assert len(net.buses) == 300
    assert len(net.branches) == 412
    assert len(net.generators) == 69
    assert net.total_load == 24000.0
    assert net.total_capacity == 30000.0
    net.validate()


ids = st.integers(min_value=1, max_value=40)


@settings(max_examples=60, deadline=None)
@given(data=st.data())
def test_arbitrary_valid_networks_round_trip(tmp_path_factory, data):
    n_bus = data.draw(st.integers(min_value=2, max_value=8))
    bus_ids = list(range(1, n_bus + 1))
    loads = data.draw(
        st.lists(
            st.floats(min_value=0, max_value=500, allow_nan=False),
            min_size=n_bus, max_size=n_bus,
        )
    )
    buses = tuple(Bus(b, load) for b, load in zip(bus_ids, loads))
    n_br = data.draw(st.integers(min_value=1, max_value=12))
    branches = []
    for k in range(n_br):
        f = data.draw(st.sampled_from(bus_ids))
        t = data.draw(st.sampled_from([b for b in bus_ids if b != f]))
        x = data.draw(st.floats(min_value=0.01, max_value=5, allow_nan=False))
        lim = data.draw(st.floats(min_value=1, max_value=1e4, allow_nan=False))
        branches.append(Branch(f"br{k}", f, t, x, lim))
    gens = (Generator("g0", bus_ids[0], 1000.0),)
    net = Network(
        buses=buses, branches=tuple(branches), generators=gens,
        base_mva=100.0, name="prop",
    )
    net.validate()
    doc = network_to_dict(net)
    again = network_from_dict(json.loads(json.dumps(doc)))
    assert network_to_dict(again) == doc
