import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from meshfair.exceptions import DomainError, SolverError
from meshfair.solver import (
    INFEASIBLE, OPTIMAL, Affine, Constraint, LogDenominator, LogProgram, LogSumExp, Softplus, Term,
    convexity_audit, feasibility, solve,
)

PBAR = 1.151306


def single_station(lo_t=-30.0, p_bar=PBAR):
    """max log T s.t. T <= x/X and (1 + x) <= p_bar, with y = log x."""
    return LogProgram(
        {"t": (lo_t, 5.0), "y": (-30.0, math.log(1e6))},
        [Constraint([Affine({"t": 1, "y": -1}), LogDenominator(["y"], [None], 0.01)], "eq6"),
         Constraint([Softplus([({"y": 1}, 0.0)]), Affine(const=-math.log(p_bar))], "pbar")],
        "t",
    )


def test_identity():
    s = math.log(0.3)
    prog = LogProgram({"t": (-10.0, 10.0), "s": (s, s)}, [Constraint([Affine({"t": 1, "s": -1})])], "t")
    sol = solve(prog)
    assert sol.status == OPTIMAL
    assert math.exp(sol.values["t"]) == pytest.approx(0.3, rel=1e-6)


def test_single_station_on_the_cap():
    sol = solve(single_station())
    assert sol.status == OPTIMAL
    assert math.exp(sol.values["t"]) == pytest.approx(0.93800, abs=1e-4)
    assert set(sol.active_set) == {"eq6", "pbar"}
    assert np.all(single_station().constraint_values(np.array([sol.values["t"], sol.values["y"]])) <= 1e-7)


def test_rate_above_simplex_is_infeasible():
    sol = solve(single_station(lo_t=0.0))
    assert sol.status == INFEASIBLE
    assert sol.certificate["constraint"] == "eq6"


def test_zero_rate_is_feasible():
    prog = single_station()
    prog.objective = None
    assert feasibility(prog).status == OPTIMAL


def test_contradictory_affine_constraints():
    prog = LogProgram({"u": (-5.0, 5.0)}, [Constraint([Affine({"u": 1}, -1.0)], "le"),
                                          Constraint([Affine({"u": -1}, 2.0)], "ge")])
    sol = feasibility(prog)
    assert sol.status == INFEASIBLE
    assert sol.certificate["constraint"] in {"le", "ge"}


def test_empty_program_is_box_center():
    prog = LogProgram({"u": (-2.0, 4.0), "v": (0.0, 1.0)}, [])
    sol = feasibility(prog)
    assert sol.status == OPTIMAL
    assert sol.values == {"u": 1.0, "v": 0.5}


def test_bad_programs():
    with pytest.raises(DomainError):
        LogProgram({"u": (1.0, 0.0)}, [])
    with pytest.raises(DomainError):
        LogProgram({"u": (0.0, 1.0)}, [Constraint([Affine({"w": 1})])])
    with pytest.raises(DomainError):
        solve(LogProgram({"u": (0.0, 1.0)}, [Constraint([Affine({"u": 1}, math.nan)])], "u"))


class _Concave(Term):
    def variables(self):
        return {"u"}

    def bind(self, index):
        self._i = index["u"]
        self._n = len(index)

    def value_grad(self, v):
        g = np.zeros(self._n)
        g[self._i] = -2 * v[self._i]
        return -v[self._i] ** 2, g


def test_convexity_audit_rejects_concave_term():
    prog = LogProgram({"u": (-3.0, 3.0), "t": (-3.0, 3.0)},
                      [Constraint([Affine({"t": 1}), _Concave()], "bad")], "t")
    with pytest.raises(SolverError, match="bad"):
        solve(prog)
    assert convexity_audit(single_station())


def test_deterministic():
    a, b = solve(single_station()), solve(single_station())
    assert a.values == b.values
    assert a.kkt_residual == b.kkt_residual
    assert a.iterations == b.iterations


def _grid_max(objective, box, step=1e-2, fine=1e-3):
    """Dense mesh search followed by one refinement around the best cell."""
    lo, hi = np.array(box, dtype=float).T
    axes = [np.arange(l, h + step / 2, step) for l, h in zip(lo, hi)]
    mesh = np.meshgrid(*axes, indexing="ij")
    vals = objective(*mesh)
    best = np.unravel_index(np.argmax(vals), vals.shape)
    centre = np.array([ax[i] for ax, i in zip(axes, best)])
    axes = [np.arange(max(l, c - 2 * step), min(h, c + 2 * step) + fine / 2, fine)
            for l, h, c in zip(lo, hi, centre)]
    return max(float(np.max(vals)), float(np.max(objective(*np.meshgrid(*axes, indexing="ij")))))


@settings(max_examples=20)
@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(0.3, 3.0))
def test_matches_grid_search(c1, c2, k):
    """max t s.t. log(e^(t+u+c1) + e^(t+w+c2)) <= 0 and softplus(u) + softplus(w) <= k.

    For fixed (u, w) the best t is explicit, so the grid runs over (u, w)."""
    box = {"t": (-8.0, 8.0), "u": (-3.0, 3.0), "w": (-3.0, 3.0)}
    prog = LogProgram(box, [
        Constraint([LogSumExp([({"t": 1, "u": 1}, c1), ({"t": 1, "w": 1}, c2)])], "lse"),
        Constraint([Softplus([({"u": 1}, 0.0), ({"w": 1}, 0.0)]), Affine(const=-k)], "sp"),
    ], "t")
    sol = solve(prog)
    assert sol.status == OPTIMAL

    def best_t(u, w):
        t = -np.logaddexp(u + c1, w + c2)
        ok = np.logaddexp(0, u) + np.logaddexp(0, w) <= k
        return np.where(ok, np.clip(t, -8, 8), -np.inf)

    ref = _grid_max(best_t, [box["u"], box["w"]])
    assert sol.values["t"] == pytest.approx(ref, abs=5e-3)
