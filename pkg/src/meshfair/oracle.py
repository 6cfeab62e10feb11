"""Brute-force ground truth for tiny instances.

Nothing here reuses the solver path: attempt rates and burst sizes are swept
over grids, throughputs come straight from the closed-form slot model, and the
max-min allocation is read off the swept points.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Dict, List

import numpy as np

from .exceptions import DomainError
from .topology import MeshTopology

LEX_EPS = 1e-9


@dataclass(frozen=True)
class GridSpec:
    """Sweep resolution.

    ``points`` grid values per attempt-rate axis (log spaced from ``x_min``),
    ``n_points`` per burst-size axis (linear on ``[1, n_bar]``). Each of the
    ``refinements`` passes re-grids ``points`` values over ``+-window`` cells
    around the incumbent, so the final mesh in ``log x`` is roughly
    ``coarse_step * (2 * window / (points - 1)) ** refinements``.
    """

    points: int = 40
    n_points: int = 9
    refinements: int = 3
    window: float = 2.0
    x_min: float = 1e-5
    x_max: float = 10.0
    max_points: float = 1e8

    def __post_init__(self):
        if self.points < 3 or self.n_points < 2 or self.refinements < 0 or not self.window > 0:
            raise DomainError(f"invalid grid spec {self}")
        if not 0 < self.x_min < self.x_max:
            raise DomainError("x range must satisfy 0 < x_min < x_max")


@dataclass
class OracleAllocation:
    rates: Dict[str, float]
    levels: Dict[str, float]
    points_evaluated: int
    mesh: float


class _Wlan:
    """One WLAN of the instance: its transmitting stations and incidence data."""

    def __init__(self, topology, c, flow_ids, mode):
        wl = topology.wlans[c]
        self.a = wl.a
        self.pbar = wl.pbar
        entries = []  # (flow index, station position, coefficient)
        stations = []
        for p, f in enumerate(topology.flows):
            for hop in f.route:
                if hop.channel != c:
                    continue
                if hop.src not in stations:
                    stations.append(hop.src)
                scale = f.a_scaling(hop.src) if mode == "goodput" else 1.0
                l_bits = f.l_bits if f.l_bits is not None else topology.stations[f.source].l_bits
                entries.append((p, stations.index(hop.src), scale * wl.t_c / l_bits))
        self.stations = stations
        self.nbar = [sum(1 for e in entries if e[1] == k) for k in range(len(stations))]
        self.xcap = []
        for k in stations:
            tb = topology.stations[k].tau_bar
            self.xcap.append(min(wl.y, tb / (1 - tb) if tb is not None else math.inf))
        # constraint rows: one per entry (per-flow cap), one per station (aggregate)
        nf = len(flow_ids)
        rows, kinds, owner = [], [], []
        for p, k, coef in entries:
            r = np.zeros(nf)
            r[p] = coef
            rows.append(r)
            kinds.append("cap")
            owner.append(k)
        for k in range(len(stations)):
            r = np.zeros(nf)
            for p, kk, coef in entries:
                if kk == k:
                    r[p] += coef
            rows.append(r)
            kinds.append("sum")
            owner.append(k)
        self.M = np.array(rows)
        self.kinds = np.array(kinds)
        self.owner = np.array(owner)
        self.flows = sorted({e[0] for e in entries})

    def axes(self, spec: GridSpec):
        hi_x = spec.x_max
        if math.isfinite(self.pbar):
            hi_x = min(hi_x, self.pbar - 1.0)
        axes = []
        for k in range(len(self.stations)):
            top = min(hi_x, self.xcap[k])
            axes.append(("x", k, math.log(spec.x_min), math.log(top), spec.points))
        for k in range(len(self.stations)):
            if self.nbar[k] > 1:
                axes.append(("n", k, 1.0, float(self.nbar[k]), spec.n_points))
        return axes

    def capacities(self, pts, axes):
        """Right-hand sides of every constraint row at each grid point, and the
        mask of admissible points."""
        nk = len(self.stations)
        x = np.zeros((pts.shape[0], nk))
        n = np.ones((pts.shape[0], nk))
        for j, (kind, k, *_rest) in enumerate(axes):
            if kind == "x":
                x[:, k] = np.exp(pts[:, j])
            else:
                n[:, k] = pts[:, j]
        X = self.a + np.sum((n - 1.0) * x, axis=1) + np.prod(1.0 + x, axis=1) - 1.0
        ok = np.prod(1.0 + x, axis=1) <= self.pbar
        cap = x / X[:, None]
        agg = n * x / X[:, None]
        rhs = np.where(self.kinds == "cap", cap[:, self.owner], agg[:, self.owner])
        return rhs, ok


def _grid(axes, centre=None, steps=None, spec=None):
    """Cartesian grid over ``axes``; when ``centre`` is given, a local grid of
    ``+-window`` cells of width ``steps`` around it."""
    vals = []
    new_steps = []
    for j, (_, _, lo, hi, npts) in enumerate(axes):
        if centre is None:
            v = np.linspace(lo, hi, npts)
        else:
            half = spec.window * steps[j]
            v = np.linspace(max(lo, centre[j] - half), min(hi, centre[j] + half), spec.points)
        vals.append(v)
        new_steps.append((v[-1] - v[0]) / max(len(v) - 1, 1))
    total = float(np.prod([len(v) for v in vals]))
    if spec is not None and total > spec.max_points:
        raise DomainError(f"grid of {total:.3g} points exceeds the limit of {spec.max_points:.3g}")
    mesh = np.meshgrid(*vals, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1), np.array(new_steps)


def _refined_max(wlan, axes, spec, score):
    """Maximize ``score(rhs, ok) -> values`` over a grid with local refinement.
    Returns the best value, the best point and the number of points evaluated."""
    pts, steps = _grid(axes, spec=spec)
    total = 0
    best_v, best_p = -math.inf, None
    for level in range(spec.refinements + 1):
        if level:
            pts, steps = _grid(axes, best_p, steps, spec)
        rhs, ok = wlan.capacities(pts, axes)
        vals = np.where(ok, score(rhs), -math.inf)
        total += pts.shape[0]
        i = int(np.argmax(vals))
        if vals[i] > best_v or best_p is None:
            best_v, best_p = float(vals[i]), pts[i]
    return best_v, best_p, total


def _max_level(wlan, rates, active, w, target=None):
    """Per grid point: largest ``T`` with active flows at ``w * T`` (or, with
    ``target``, largest rate of flow ``target`` with everything else fixed)."""
    M = wlan.M
    if target is None:
        fixed = np.where(active, 0.0, rates)
        grow = np.where(active, w, 0.0)
    else:
        fixed = rates.copy()
        fixed[target] = 0.0
        grow = np.zeros_like(rates)
        grow[target] = 1.0
    load = M @ fixed
    speed = M @ grow

    def score(rhs):
        slack = rhs - load[None, :]
        with np.errstate(divide="ignore", invalid="ignore"):
            lim = np.where(speed[None, :] > 0, slack / speed[None, :], np.where(slack >= 0, math.inf, -math.inf))
        return lim.min(axis=1)
    return score


def _weights(topology, mode):
    return np.array([topology.weight(f, mode) for f in topology.flows], dtype=float)


def _check_size(topology, wlans):
    if len(wlans) > 2:
        raise DomainError(f"oracle handles at most 2 WLANs with traffic, got {len(wlans)}")
    if len(topology.flows) > 3:
        raise DomainError(f"oracle handles at most 3 flows, got {len(topology.flows)}")
    for wl in wlans:
        if len(wl.stations) > 3:
            raise DomainError(f"oracle handles at most 3 transmitting stations per WLAN, got {len(wl.stations)}")


def _lex_better(a, b, eps=LEX_EPS):
    """``a`` lexicographically greater than ``b`` (both ascending) beyond ``eps``."""
    for u, v in zip(a, b):
        if u > v + eps:
            return True
        if u < v - eps:
            return False
    return False


def _leximin_points(wlan, rhs, w):
    """Max-min fair rates inside each point's polytope ``M s <= rhs`` by
    progressive filling, vectorized over grid points."""
    G = rhs.shape[0]
    nf = w.size
    M = wlan.M
    frozen = np.zeros((G, nf), dtype=bool)
    rates = np.zeros((G, nf))
    relevant = np.zeros(nf, dtype=bool)
    relevant[wlan.flows] = True
    frozen[:, ~relevant] = True
    for _ in range(nf):
        if frozen.all():
            break
        load = rates @ M.T
        speed = np.where(frozen, 0.0, w[None, :]) @ M.T
        with np.errstate(divide="ignore", invalid="ignore"):
            lim = np.where(speed > 0, (rhs - load) / speed, math.inf)
        T = lim.min(axis=1)
        T = np.where(np.isfinite(T), np.maximum(T, 0.0), 0.0)
        tight = lim <= T[:, None] * (1 + 1e-12) + 1e-300
        hit = (tight.astype(float) @ (M > 0).astype(float)) > 0
        newly = hit & ~frozen
        rates = np.where(newly, w[None, :] * T[:, None], rates)
        frozen |= newly
    return rates


def _single_wlan(topology, wlan, w, spec):
    axes = wlan.axes(spec)
    pts, steps = _grid(axes, spec=spec)
    best = None
    best_sorted = None
    best_p = None
    total = 0
    for level in range(spec.refinements + 1):
        if level:
            pts, steps = _grid(axes, best_p, steps, spec)
        rhs, ok = wlan.capacities(pts, axes)
        total += pts.shape[0]
        rates = _leximin_points(wlan, rhs[ok], w)
        if rates.shape[0] == 0:
            continue
        norm = np.sort(rates[:, wlan.flows] / w[wlan.flows], axis=1)
        # lexicographic argmax of the sorted vectors
        order = np.lexsort(norm.T[::-1])
        cand = order[-1]
        if best is None or _lex_better(norm[cand], best_sorted):
            best, best_sorted, best_p = rates[cand], norm[cand], pts[ok][cand]
    if best is None:
        raise DomainError("no admissible grid point")
    return best, total, steps


def _progressive(topology, wlans, w, spec, tol):
    nf = w.size
    active = np.ones(nf, dtype=bool)
    rates = np.zeros(nf)
    total = 0
    for _ in range(nf):
        if not active.any():
            break
        T = math.inf
        for wl in wlans:
            if not active[wl.flows].any():
                continue
            v, _, cnt = _refined_max(wl, wl.axes(spec), spec, _max_level(wl, rates, active, w))
            total += cnt
            T = min(T, v)
        base = np.where(active, w * T, rates)
        done = []
        for p in np.flatnonzero(active):
            probe = math.inf
            for wl in wlans:
                if p not in wl.flows:
                    continue
                v, _, cnt = _refined_max(wl, wl.axes(spec), spec, _max_level(wl, base, active, w, target=p))
                total += cnt
                probe = min(probe, v)
            if probe <= w[p] * T * (1 + tol):
                done.append(p)
        if not done:
            # grid noise: freeze the flow with the smallest probe margin
            done = [int(np.flatnonzero(active)[0])]
        for p in done:
            active[p] = False
            rates[p] = w[p] * T
    return rates, total


def grid_maxmin(topology: MeshTopology, spec: GridSpec = GridSpec(), mode="throughput", probe_tol=2e-3) -> OracleAllocation:
    """Max-min fair flow rates of a tiny instance by exhaustive sweeping.

    Single-WLAN instances take the lexicographic maximum, over all swept
    ``(x, N)``, of the sorted max-min vector inside each point's polytope of
    per-flow and per-station constraints. Two-WLAN instances are filled level
    by level, each level being the smallest over WLANs of the swept maximum.
    """
    w = _weights(topology, mode)
    ids = [f.flow_id for f in topology.flows]
    chans = [c for c in topology.wlans if any(h.channel == c for f in topology.flows for h in f.route)]
    wlans = [_Wlan(topology, c, ids, mode) for c in chans]
    _check_size(topology, wlans)
    if len(wlans) == 1:
        rates, total, steps = _single_wlan(topology, wlans[0], w, spec)
    else:
        rates, total = _progressive(topology, wlans, w, spec, probe_tol)
        steps = None
    mesh = float(np.max(steps)) if steps is not None and len(steps) else float("nan")
    return OracleAllocation({f: float(r) for f, r in zip(ids, rates)},
                            {f: float(r / wt) for f, r, wt in zip(ids, rates, w)}, total, mesh)


def enumerate_slot_distribution(tau) -> dict:
    """Exact slot outcome probabilities by enumerating all ``2**n`` attempt patterns."""
    t = [float(v) for v in np.atleast_1d(tau)]
    if len(t) > 4:
        raise DomainError(f"enumeration limited to n <= 4, got {len(t)}")
    if any(not 0 <= v <= 1 for v in t):
        raise DomainError(f"attempt probabilities must lie in [0, 1], got {t}")
    p_idle = 0.0
    p_coll = 0.0
    p_succ = [0.0] * len(t)
    for pattern in itertools.product((0, 1), repeat=len(t)):
        pr = 1.0
        for v, b in zip(t, pattern):
            pr *= v if b else 1.0 - v
        k = sum(pattern)
        if k == 0:
            p_idle += pr
        elif k == 1:
            p_succ[pattern.index(1)] += pr
        else:
            p_coll += pr
    return {"p_idle": p_idle, "p_succ": p_succ, "p_coll": p_coll}
