import math
from dataclasses import replace

import numpy as np
import pytest

from meshfair.exceptions import DomainError, ScenarioError
from meshfair.model import slot_probabilities, station_throughput, tau_to_x
from meshfair.oracle import enumerate_slot_distribution
from meshfair.scenario import AimdOptions
from meshfair.sim import SimConfig, aimd_step, backpressure_admit, measure_pidle, run, run_many
from meshfair.topology import MeshTopology, Station
from meshfair.waterfill import tau_from_cw

from builders import chain, single_wlan, wlan

A = 0.01
TC = 20e-6 / A
L = 8000.0

# upper 1% points of the chi-square distribution
CHI2_99 = {1: 6.635, 2: 9.210, 3: 11.345, 4: 13.277, 5: 15.086}


def fixed(cw=21, slots=1e6, seed=1, **kw):
    return SimConfig(seed=seed, aimd=None, cw={"c": cw}, duration=math.inf, warmup=0.0, max_slots=slots, **kw)


def test_single_saturated_station():
    m = run(single_wlan([1]), None, fixed(21))
    x = tau_to_x(tau_from_cw(21))
    expect = station_throughput([x], a=A, i=0, l_bits=L, t_c=TC)
    assert m.total_slots[0] == 1e6
    assert m.throughput()["f0"] == pytest.approx(expect, rel=1e-2)


def test_two_stations_idle_probability():
    m = run(single_wlan([1, 1]), None, fixed(21))
    x = tau_to_x(tau_from_cw(21))
    assert m.total_idle_slots[0] / m.total_slots[0] == pytest.approx(1 / (1 + x) ** 2, abs=5e-3)


def test_empty_queues_give_idle_channel():
    topo = MeshTopology([wlan("c")], [Station("a", ("c",)), Station("b", ("c",))], [])
    m = run(topo, None, SimConfig(aimd=None, cw={"c": 21}, duration=10.0, warmup=0.0, window=5.0))
    assert np.all(m.window_pidle() == 1.0)
    assert np.allclose(m.idle_time, 5.0)


@pytest.mark.parametrize("n,cw", [(1, 9), (2, 15), (3, 21), (4, 31)])
def test_slot_outcomes_match_enumeration(n, cw):
    """Chi-square goodness of fit of idle, per-station success and collision counts."""
    m = run(single_wlan([1] * n), None, fixed(cw, slots=1e6, seed=7))
    d = enumerate_slot_distribution([tau_from_cw(cw)] * n)
    total = m.total_slots[0]
    succ = np.round(m.total_airtime[:, 0] / TC)
    coll = total - m.total_idle_slots[0] - succ.sum()
    observed = np.concatenate([[m.total_idle_slots[0]], succ, [coll]])
    expected = total * np.array([d["p_idle"], *d["p_succ"], d["p_coll"]])
    keep = expected > 0
    assert observed[~keep].sum() == 0
    stat = float(np.sum((observed[keep] - expected[keep]) ** 2 / expected[keep]))
    assert stat < CHI2_99[int(keep.sum()) - 1]


def test_idle_probability_is_unbiased_over_seeds():
    x = tau_to_x(tau_from_cw(11))
    p_idle = slot_probabilities([x, x])[0]
    ms = run_many(single_wlan([1, 1]), None, fixed(11, slots=2e5), seeds=range(20))
    est = [m.total_idle_slots[0] / m.total_slots[0] for m in ms]
    se = math.sqrt(p_idle * (1 - p_idle) / 2e5) / math.sqrt(20)
    assert abs(np.mean(est) - p_idle) < 4 * se


# AIMD

def test_aimd_examples_as_published():
    assert aimd_step(32, 0.9, 0.8686, literal=True) == 36
    assert aimd_step(36, 0.8, 0.8686, literal=True) == 27
    assert aimd_step(36, 0.8686, 0.8686, literal=True) == 27


def test_aimd_default_drives_towards_target():
    assert aimd_step(32, 0.9, 0.8686) == 24
    assert aimd_step(32, 0.8, 0.8686) == 36
    assert aimd_step(32, 0.8686, 0.8686) == 24
    assert aimd_step(3, 0.99, 0.8686) == 3
    assert aimd_step(1022, 0.5, 0.8686) == 1024
    assert aimd_step(40, None, 0.8686) == 40
    assert aimd_step(40, float("nan"), 0.8686) == 40


def test_measure_pidle():
    assert measure_pidle(10, 10) == 1.0
    assert measure_pidle(5, 10) == 0.5
    assert measure_pidle(0, 0) is None


def test_pidle_counts_slots_not_time():
    m = run(single_wlan([1]), None, SimConfig(aimd=None, cw={"c": 3}, duration=5.0, warmup=0.0, window=5.0))
    # tau = 1, so every slot is a success lasting T_c
    assert m.total_idle_slots[0] == 0
    m = run(single_wlan([1, 1]), None, SimConfig(aimd=None, cw={"c": 21}, duration=5.0, warmup=0.0, window=5.0))
    time_share = float(m.idle_time[0, 0] / m.window_length[0])
    # idle slots are far shorter than busy ones
    assert time_share < 0.5 < m.window_pidle()[0, 0]


def test_config_validation():
    with pytest.raises(DomainError):
        SimConfig(queue_capacity=0)
    with pytest.raises(DomainError):
        SimConfig(aimd=AimdOptions(alpha=0.0))
    with pytest.raises(DomainError):
        SimConfig(aimd=AimdOptions(beta=1.0))
    with pytest.raises(DomainError):
        SimConfig(aimd=AimdOptions(period=0.0))
    with pytest.raises(DomainError):
        SimConfig(warmup=30.0, duration=20.0)


def test_unknown_channel_in_config():
    with pytest.raises(ScenarioError, match="unknown channel"):
        run(single_wlan([1]), None, SimConfig(aimd=None, cw={"c": 21, "zz": 21}, duration=1.0, warmup=0.0))


# backpressure

def test_backpressure_admit():
    assert backpressure_admit(0, 1)
    assert not backpressure_admit(1, 1)
    assert backpressure_admit(49, 50)


def _chain_run(capacity, seed=3):
    topo = chain(flows=("A2", "E", "E"))
    sim = SimConfig(seed=seed, aimd=None, cw={"c1": 21, "c2": 21}, duration=60.0, warmup=10.0, window=10.0,
                    queue_capacity=capacity)
    return topo, run(topo, None, sim)


@pytest.mark.parametrize("capacity", [1, 5, 50])
def test_conservation(capacity):
    _, m = _chain_run(capacity)
    assert np.all(m.injected == m.delivered + m.in_queue)
    assert np.all(m.delivered > 0)


def test_slow_second_hop_sets_delivery_rate():
    topo, m = _chain_run(50)
    # A is alone on c1 and could send far faster than R wins slots on c2
    a_rate = m.total_airtime[0, 0] / m.total_time[0]
    r_rate = m.total_airtime[0, 1] / m.total_time[1]
    assert a_rate == pytest.approx(r_rate, rel=1e-2)
    assert m.throughput()["f0"] == pytest.approx(r_rate * L / TC, rel=1e-2)
    # the relay queue is (nearly) full at the end
    assert m.in_queue[0] >= 2 * 50 - 2


def test_deterministic_and_buffer_independent():
    topo = chain(flows=("A2", "E", "E"))
    sim = SimConfig(seed=11, duration=40.0, warmup=5.0, window=10.0)
    a = run(topo, None, sim)
    b = run(topo, None, sim)
    c = run(topo, None, replace(sim, buffer_size=64))
    for m in (b, c):
        assert np.array_equal(a.bits, m.bits)
        assert np.array_equal(a.airtime, m.airtime)
        assert np.array_equal(a.slots, m.slots)
        assert a.final_cw == m.final_cw
    d = run(topo, None, replace(sim, seed=12))
    assert not np.array_equal(a.bits, d.bits)


def test_run_many_matches_single_runs():
    topo = single_wlan([1, 1])
    ms = run_many(topo, None, fixed(21, slots=2e4), seeds=[4, 5, 6], workers=3)
    assert [m.seed for m in ms] == [4, 5, 6]
    assert np.array_equal(ms[1].total_bits, run(topo, None, fixed(21, slots=2e4, seed=5)).total_bits)


def test_windows_cover_time():
    topo = chain(flows=("A1", "A2", "E"))
    m = run(topo, None, SimConfig(seed=2, duration=45.0, warmup=5.0, window=10.0))
    cover = m.idle_time + m.success_time + m.collision_time
    assert np.allclose(cover, m.window_length[:, None], rtol=0, atol=1e-9)
    assert np.allclose(m.airtime.sum(axis=1), m.success_time, rtol=1e-12, atol=1e-12)
    fractions = (m.idle_time + m.collision_time + m.airtime.sum(axis=1)) / m.window_length[:, None]
    assert np.all(np.abs(fractions - 1) < 1e-12)
    assert m.window_length[-1] == pytest.approx(10.0)
    assert m.delivered.sum() <= m.injected.sum()


def test_aimd_trace_recorded():
    topo = single_wlan([1, 1, 1])
    m = run(topo, None, SimConfig(seed=1, duration=30.0, warmup=0.0, window=10.0))
    # one update per period strictly inside the run
    assert np.array_equal(m.trace_time[0], np.arange(1.0, 30.0))
    for key in m.ports:
        tr = m.trace_cw[key]
        assert tr.size == 29 and np.all((tr >= 3) & (tr <= 1024))
