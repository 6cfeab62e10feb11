import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from meshfair.exceptions import DomainError
from meshfair.model import (
    LogCoords, OperatingPoint, StationParams, WlanParams, burst_limit_throughput, denominator_x,
    log_denominator, log_throughput, slot_probabilities, station_airtime, station_throughput,
    tau_to_x, x_to_tau,
)
from meshfair.region import pbar_max

A = 0.01
PBAR = pbar_max(A)

rates = st.floats(1e-4, 50.0)
bursts = st.floats(1.0, 8.0)


def test_three_symmetric_stations_on_the_cap():
    x = PBAR ** (1 / 3) - 1
    assert x == pytest.approx(0.048086, abs=1e-6)
    s = station_throughput([x] * 3, a=A)
    assert np.allclose(s, 0.29810, atol=1e-4)
    assert station_airtime([x] * 3, a=A, i=1) == pytest.approx(0.29810, abs=1e-4)


def test_two_station_airtime_on_the_cap():
    x = math.sqrt(PBAR) - 1
    assert denominator_x([x, x], a=A) == pytest.approx(0.161306, abs=1e-6)
    # x/X at the cap point; the rounded input 0.07297 gives 0.452486
    assert station_airtime([x, x], a=A, i=0) == pytest.approx(0.452490, abs=1e-6)
    assert station_airtime([0.07297, 0.07297], a=A, i=0) == pytest.approx(0.452486, abs=1e-6)


def test_zero_rate_station_has_no_throughput():
    assert station_throughput([0.0, 0.3], a=A, i=0) == 0.0
    assert station_airtime([0.0, 0.3], a=A, i=0) == 0.0


def test_single_station_limit_approaches_one_frame_per_tc():
    prev = 0.0
    for x in [1, 10, 100, 1e4, 1e6]:
        s = station_throughput([x], a=A, i=0, l_bits=8000, t_c=1e-3)
        assert prev < s < 8000 / 1e-3
        prev = s
    assert prev == pytest.approx(8e6, rel=1e-7)


def test_units_scale_with_payload_over_tc():
    s1 = station_throughput([0.1, 0.2], [2, 1], A)
    s2 = station_throughput([0.1, 0.2], [2, 1], A, l_bits=8000, t_c=2e-3)
    assert np.allclose(s2, s1 * 4e6)


def test_slot_probability_examples():
    assert slot_probabilities([0.0, 0.0]) == (1.0, 0.0, 0.0)
    assert slot_probabilities([1.0]) == pytest.approx((0.5, 0.5, 0.0))
    assert slot_probabilities([1.0, 1.0]) == pytest.approx((0.25, 0.5, 0.25))


def test_empty_denominator_is_the_idle_ratio():
    assert denominator_x([], a=0.02) == 0.02


def test_burst_limit_examples():
    assert np.allclose(burst_limit_throughput([1, 1], [1, 1]), [0.5, 0.5])
    assert np.allclose(burst_limit_throughput([2, 1], [1, 1]), [2 / 3, 1 / 3])
    lam = 1e6
    s = station_throughput([1.0, 1.0], [2 * lam, lam], A)
    assert np.allclose(s, [2 / 3, 1 / 3], rtol=1e-4)
    with pytest.raises(DomainError):
        burst_limit_throughput([1, 1], [0, 0])


def test_domain_errors():
    with pytest.raises(DomainError):
        tau_to_x(1.0)
    with pytest.raises(DomainError):
        x_to_tau(-0.1)
    with pytest.raises(DomainError):
        denominator_x([0.1], a=0.0)
    with pytest.raises(DomainError):
        station_throughput([0.1, 0.2], [1.0], A)
    with pytest.raises(DomainError):
        WlanParams("c", -1.0, 1.0)
    with pytest.raises(DomainError):
        StationParams("k", n_bar=0)


def test_large_networks_use_log_space_product():
    x = np.full(200, 0.5)
    d = denominator_x(x, a=A)
    assert math.isfinite(d) and d > 1e30
    p_idle, p_succ, p_coll = slot_probabilities(x)
    assert p_idle + p_succ + p_coll == pytest.approx(1.0)


def test_default_pbar_is_the_bound():
    w = WlanParams("c", 1e-5, 1e-3)
    assert w.pbar == pytest.approx(pbar_max(0.01))
    assert 1 / w.pbar == pytest.approx(0.868579, abs=1e-6)


def test_log_coords_round_trip():
    op = OperatingPoint({("a", "c"): 0.1, ("b", "c"): 0.3}, {("a", "c"): 2.0, ("b", "c"): 1.0})
    back = LogCoords.from_point(op).to_point()
    for k in op.x:
        assert back.x[k] == pytest.approx(op.x[k])
        assert back.n[k] == pytest.approx(op.n[k])
    wl = {"c": WlanParams("c", 1e-5, 1e-3, y=0.2)}
    assert any("exceeds" in p for p in op.check(wl, {("a", "c"): 2, ("b", "c"): 1}))


@given(st.floats(0.0, 0.999))
def test_tau_x_round_trip(t):
    assert x_to_tau(tau_to_x(t)) == pytest.approx(t, abs=1e-12)


@given(st.lists(rates, min_size=1, max_size=5), st.data())
def test_probabilities_sum_to_one_and_airtimes_below_one(x, data):
    n = data.draw(st.lists(bursts, min_size=len(x), max_size=len(x)))
    p_idle, p_succ, p_coll = slot_probabilities(x)
    assert p_idle + p_succ + p_coll == 1.0 or abs(p_idle + p_succ + p_coll - 1.0) < 1e-15
    assert p_coll >= -1e-12
    t = station_airtime(x, n, A)
    assert t.sum() < 1.0


@given(st.lists(rates, min_size=1, max_size=5), st.data(), st.floats(100, 20000), st.floats(1e-4, 1e-2))
def test_airtime_is_rescaled_throughput(x, data, l_bits, t_c):
    n = data.draw(st.lists(bursts, min_size=len(x), max_size=len(x)))
    s = station_throughput(x, n, A, l_bits=l_bits, t_c=t_c)
    assert np.allclose(s * t_c / l_bits, station_airtime(x, n, A), rtol=1e-12)


@given(st.lists(rates, min_size=1, max_size=5), st.data())
def test_log_throughput_matches_direct(x, data):
    n = data.draw(st.lists(bursts, min_size=len(x), max_size=len(x)))
    lt = log_throughput(np.log(x), np.log(n), A)
    assert np.allclose(np.exp(lt), station_throughput(x, n, A), rtol=1e-10)
    assert log_denominator(np.log(x), np.log(n), A) == pytest.approx(math.log(denominator_x(x, n, A)), rel=1e-12)


@given(st.integers(2, 5), st.data())
def test_monotonicity(k, data):
    x = np.array(data.draw(st.lists(st.floats(1e-3, 5.0), min_size=k, max_size=k)))
    n = np.array(data.draw(st.lists(st.floats(1.0, 4.0), min_size=k, max_size=k)))
    i = data.draw(st.integers(0, k - 1))
    base = station_throughput(x, n, A)
    x2 = x.copy()
    x2[i] *= 1.1
    up = station_throughput(x2, n, A)
    assert up[i] > base[i]
    assert np.all(np.delete(up, i) < np.delete(base, i))
    n2 = n.copy()
    n2[i] += 0.5
    assert station_throughput(x, n2, A)[i] > base[i]


@given(st.integers(1, 5), st.data())
def test_log_region_is_convex(k, data):
    """Geometric means of two achievable vectors are dominated by the vector at
    the log-coordinate midpoint."""
    z = st.lists(st.floats(-8.0, 3.0), min_size=k, max_size=k)
    e = st.lists(st.floats(0.0, 2.0), min_size=k, max_size=k)
    y1, y2 = np.array(data.draw(z)), np.array(data.draw(z))
    e1, e2 = np.array(data.draw(e)), np.array(data.draw(e))
    al = data.draw(st.floats(0.01, 0.99))
    s1 = np.exp(log_throughput(y1, e1, A))
    s2 = np.exp(log_throughput(y2, e2, A))
    mid = np.exp(log_throughput(al * y1 + (1 - al) * y2, al * e1 + (1 - al) * e2, A))
    assert np.all(mid >= s1 ** al * s2 ** (1 - al) * (1 - 1e-9))


def test_single_station_second_difference():
    h = 1e-3
    for y in np.linspace(-6, 4, 41):
        f = [log_throughput([y + d], [0.0], A)[0] for d in (-h, 0.0, h)]
        assert f[0] - 2 * f[1] + f[2] < 1e-9
        assert f[1] == pytest.approx(y - math.log(A + math.exp(y)), abs=1e-12)
