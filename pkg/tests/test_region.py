import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from meshfair.exceptions import DomainError
from meshfair.model import WlanParams, denominator_x, x_to_tau
from meshfair.region import (
    PBAR_CONSTRAINT, TURNING_POINT, RayQuery, a_from_pbar, boundary_along_ray, efficiency_ratio,
    finite_load_feasible, minimal_operating_point, pbar_max, turning_point_residual,
)

A = 0.01


def ray(y, n=None, p_bar=None, a=A):
    y = np.asarray(y, dtype=float)
    return RayQuery(y, None if n is None else np.asarray(n, dtype=float), WlanParams("c", a, 1.0, p_bar))


def test_pbar_max_examples():
    assert pbar_max(0.01) == pytest.approx(1.151306, abs=1e-6)
    assert 1 / pbar_max(0.01) == pytest.approx(0.868579, abs=1e-6)
    assert pbar_max(1.0) == pytest.approx(1 / (2 - math.sqrt(2)), abs=1e-6)
    for bad in (0.0, -1.0, 1.5):
        with pytest.raises(DomainError):
            pbar_max(bad)


def test_table_value_inverts_to_a():
    assert a_from_pbar(1 / 0.8412) == pytest.approx(0.015124, abs=1e-5)


@given(st.floats(1e-6, 0.5))
def test_a_from_pbar_inverts(a):
    assert a_from_pbar(pbar_max(a)) == pytest.approx(a, rel=1e-7, abs=1e-12)


def test_a_from_pbar_domain():
    # pbar_max peaks at a = 1/2, so larger caps have no preimage
    with pytest.raises(DomainError):
        a_from_pbar(pbar_max(0.5) * 1.001)
    with pytest.raises(DomainError):
        a_from_pbar(1.0)


def test_two_station_boundary_on_cap():
    bp = boundary_along_ray(ray([1, 1], p_bar=pbar_max(A)))
    assert bp.binding == PBAR_CONSTRAINT
    assert np.allclose(bp.x_star, 0.07297, atol=1e-4)
    assert np.allclose(bp.throughput, 0.452490, atol=1e-6)
    assert np.prod(1 + bp.x_star) == pytest.approx(pbar_max(A), rel=1e-8)


def test_single_station_boundary():
    bp = boundary_along_ray(ray([1], p_bar=1.151306))
    assert bp.binding == PBAR_CONSTRAINT
    assert bp.x_star[0] == pytest.approx(0.151306, abs=1e-6)
    assert bp.throughput[0] == pytest.approx(0.93800, abs=1e-4)


def test_loose_cap_gives_turning_point():
    bp = boundary_along_ray(ray([1, 1], p_bar=10.0))
    assert bp.binding == TURNING_POINT
    assert np.allclose(x_to_tau(bp.x_star), 0.0909, atol=1e-4)
    assert abs(bp.residual) < 1e-8


def test_unbounded_and_zero_rays():
    with pytest.raises(DomainError):
        ray([0, 0])
    with pytest.raises(DomainError):
        ray([1, -1])
    # a lone station without an idle cap never reaches a boundary
    with pytest.raises(DomainError):
        boundary_along_ray(ray([1], p_bar=math.inf))


@given(st.integers(2, 5), st.data())
def test_boundary_invariants(n, data):
    y = np.array(data.draw(st.lists(st.floats(0.05, 1.0), min_size=n, max_size=n)))
    N = np.array(data.draw(st.lists(st.floats(1.0, 3.0), min_size=n, max_size=n)))
    a = data.draw(st.floats(1e-3, 0.1))
    p_bar = data.draw(st.one_of(st.just(None), st.floats(1.01, 50.0)))
    bp = boundary_along_ray(ray(y, N, p_bar, a))
    assert abs(sum(y / y.sum()) - 1) < 1e-12
    if bp.binding == PBAR_CONSTRAINT:
        assert np.prod(1 + bp.x_star) == pytest.approx(WlanParams("c", a, 1.0, p_bar).pbar, rel=1e-8)
    else:
        assert abs(turning_point_residual(x_to_tau(bp.x_star), a)) < 1e-8


def test_efficiency_ratio_examples():
    r2 = efficiency_ratio(2, A)
    assert r2 == pytest.approx(0.9952, abs=1e-3)
    assert efficiency_ratio(64, A) > r2
    seq = [efficiency_ratio(n, A) for n in range(2, 33)]
    assert all(b >= a for a, b in zip(seq, seq[1:]))
    with pytest.raises(DomainError):
        efficiency_ratio(0, A)


def test_turning_point_residual_zero_at_symmetric_optimum():
    # for two symmetric stations the identity reduces to tau = sqrt(a) / (1 + sqrt(a))
    tau = math.sqrt(A) / (1 + math.sqrt(A))
    assert tau == pytest.approx(0.0909, abs=1e-4)
    assert abs(turning_point_residual([tau, tau], A)) < 1e-15


def test_finite_load_against_grid():
    wl = WlanParams("c", A, 1.0)
    op = finite_load_feasible(wl, {"u": 0.2}, saturated=["s"], y={"s": 0.1})
    assert op is not None
    xu = op.x[("u", "c")]
    assert xu == pytest.approx(0.022 / 0.78, rel=1e-9)
    # brute force over the balance equation on a 1e-3 mesh
    grid = np.arange(0.0, 2.0, 1e-3)
    X = A + (1.1 * (1 + grid) - 1)
    ok = (grid / X >= 0.2) & (1.1 * (1 + grid) <= wl.pbar)
    assert ok.any()
    assert grid[ok].min() == pytest.approx(xu, abs=1e-3)

    assert finite_load_feasible(wl, {"u": 0.5}, saturated=["s"], y={"s": 0.1}) is None
    X = A + (1.1 * (1 + grid) - 1)
    assert not ((grid / X >= 0.5) & (1.1 * (1 + grid) <= wl.pbar)).any()


def test_finite_load_trivial_cases():
    wl = WlanParams("c", A, 1.0)
    op = finite_load_feasible(wl, {"u": 0.0, "v": 0.0})
    assert op.x[("u", "c")] == 0.0 and op.x[("v", "c")] == 0.0
    assert finite_load_feasible(WlanParams("c", A, 1.0, 1e9), {"u": 0.6, "v": 0.5}) is None
    with pytest.raises(DomainError):
        finite_load_feasible(wl, {"u": -0.1})


@given(st.lists(st.floats(0.0, 0.3), min_size=1, max_size=4))
def test_finite_load_point_serves_loads(loads):
    wl = WlanParams("c", A, 1.0)
    offered = {f"k{i}": v for i, v in enumerate(loads)}
    op = finite_load_feasible(wl, offered)
    if op is None:
        return
    keys = list(offered)
    x = np.array([op.x[(k, "c")] for k in keys])
    n = np.array([op.n[(k, "c")] for k in keys])
    X = denominator_x(x, n, A)
    assert np.all(n * x / X >= np.array(loads) * (1 - 1e-9) - 1e-15)
    assert np.prod(1 + x) <= wl.pbar * (1 + 1e-12)


def test_minimal_point_rejects_overload():
    assert minimal_operating_point(A, np.array([0.6, 0.6]), np.array([0.6, 0.6])) is None
