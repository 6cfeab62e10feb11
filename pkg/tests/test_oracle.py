import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from meshfair.exceptions import DomainError
from meshfair.model import slot_probabilities, station_airtime
from meshfair.oracle import GridSpec, enumerate_slot_distribution, grid_maxmin
from meshfair.region import pbar_max
from meshfair.waterfill import waterfill

from meshfair.topology import Flow, Hop, MeshTopology, Station

from builders import chain, single_wlan, wlan

A = 0.01
UNIT = 8000.0 / (20e-6 / A)


def test_enumeration_examples():
    d = enumerate_slot_distribution([0.5, 0.5])
    assert d["p_idle"] == 0.25 and d["p_succ"] == [0.25, 0.25] and d["p_coll"] == 0.25
    d = enumerate_slot_distribution([0.3])
    assert d["p_succ"] == [pytest.approx(0.3)]
    assert d["p_coll"] == 0.0


def test_enumeration_three_stations():
    tau = [0.1, 0.2, 0.3]
    d = enumerate_slot_distribution(tau)
    p_idle, p_succ, p_coll = slot_probabilities(np.array(tau) / (1 - np.array(tau)))
    assert abs(d["p_idle"] - p_idle) < 1e-14
    assert abs(sum(d["p_succ"]) - p_succ) < 1e-14
    assert abs(d["p_coll"] - p_coll) < 1e-14


@given(st.lists(st.floats(0.0, 0.99), min_size=1, max_size=4))
def test_enumeration_matches_product_form(tau):
    d = enumerate_slot_distribution(tau)
    t = np.array(tau)
    p_idle, p_succ, p_coll = slot_probabilities(t / (1 - t))
    assert abs(d["p_idle"] - p_idle) < 1e-14
    assert abs(sum(d["p_succ"]) - p_succ) < 1e-14
    assert abs(d["p_coll"] - p_coll) < 1e-14
    assert d["p_idle"] + sum(d["p_succ"]) + d["p_coll"] == pytest.approx(1.0, abs=1e-14)


def test_enumeration_limits():
    with pytest.raises(DomainError):
        enumerate_slot_distribution([0.1] * 5)
    with pytest.raises(DomainError):
        enumerate_slot_distribution([1.2])


def test_symmetric_two_flows_match_closed_form():
    x = math.sqrt(pbar_max(A)) - 1
    expect = station_airtime([x, x], a=A, i=0) * UNIT
    res = grid_maxmin(single_wlan([1, 1]))
    for f in ("f0", "f1"):
        assert res.rates[f] == pytest.approx(expect, rel=1e-3)
    assert res.mesh <= 1e-3


def test_single_flow_boundary_value():
    res = grid_maxmin(single_wlan([1]))
    assert res.rates["f0"] / UNIT == pytest.approx(0.93800, abs=1e-4)


def test_asymmetric_burst_case_is_ground_truth_for_waterfill():
    topo = single_wlan([2, 1])
    res = grid_maxmin(topo)
    wf = waterfill(topo)
    for f in topo.flow_ids:
        assert wf.rates[f] == pytest.approx(res.rates[f], rel=1e-2)


def _four_transmitters():
    st_ = [Station(k, ("c",)) for k in ("a", "b", "d", "e", "ap")]
    fl = [Flow("p", (Hop("a", "b", "c"), Hop("b", "ap", "c"))), Flow("q", (Hop("d", "e", "c"), Hop("e", "ap", "c")))]
    return MeshTopology([wlan("c")], st_, fl)


def test_size_caps():
    with pytest.raises(DomainError, match="flows"):
        grid_maxmin(single_wlan([1, 1, 1, 1]))
    with pytest.raises(DomainError, match="stations"):
        grid_maxmin(_four_transmitters())
    with pytest.raises(DomainError, match="limit"):
        grid_maxmin(single_wlan([1, 1]), GridSpec(points=20000))


def test_refinement_self_consistency():
    topo = chain(flows=("A1", "A2", "E"))
    coarse = grid_maxmin(topo, GridSpec(points=20, refinements=2))
    fine = grid_maxmin(topo, GridSpec(points=40, refinements=3))
    for f in topo.flow_ids:
        assert coarse.rates[f] == pytest.approx(fine.rates[f], rel=2e-3)
