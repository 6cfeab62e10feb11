"""Max-min fair water-filling over the mesh rate region.

Flow rates are coupled only through the WLANs they cross, and a WLAN can carry
a given vector of rates iff its minimal operating point exists
(:func:`meshfair.region.minimal_operating_point`). Each water-filling step is
therefore the minimum over WLANs of a one-dimensional monotone search, and the
bottleneck probe of a flow is the minimum over the WLANs on its route. The
barrier route (``method="barrier"``) solves the same step and probe programs as
log-domain convex programs instead; it is slower and serves as a cross-check.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from . import solver as sv
from ._numeric import bisect_predicate
from .exceptions import DomainError, InfeasibleTopologyError, SolverError
from .model import X_MAX
from .region import minimal_operating_point
from .topology import MeshTopology, flow_sets, validate

MODES = ("throughput", "time", "goodput")
METHODS = ("exact", "barrier")

#: Relative tolerance of the bottleneck probe.
PROBE_RTOL = 1e-5
#: Relative tolerance of the structural audit.
AUDIT_RTOL = 1e-6
#: Settled levels are backed off by this fraction in barrier programs so the
#: feasible set keeps an interior.
BARRIER_BACKOFF = 1e-7


@dataclass
class WlanAllocation:
    channel: str
    stations: List[str]
    x: Dict[str, float]
    n: Dict[str, float]
    X: float
    x_bar: Optional[float]
    y: float
    p_idle: float
    p_bar: float
    bottlenecked: List[str]
    bottleneck_stations: List[str]

    @property
    def has_bottleneck(self):
        return bool(self.bottlenecked)


@dataclass
class MaxMinResult:
    rates: Dict[str, float]
    levels: List[float]
    level_index: Dict[str, int]
    bottleneck: Dict[str, str]
    tight: Dict[str, List[str]]
    wlans: Dict[str, WlanAllocation]
    share: Dict[tuple, float]
    airtime: Dict[tuple, float]
    saturated: Dict[tuple, bool]
    weights: Dict[str, float]
    mode: str
    method: str
    notes: List[str] = field(default_factory=list)

    def normalized(self, flow):
        """Rate of ``flow`` in weight units (its water level)."""
        return self.rates[flow] / self.weights[flow]

    def flow_airtime(self, flow):
        """Airtime fraction the flow uses at its bottleneck hop."""
        c = self.bottleneck[flow]
        return max(v for (p, k, ch), v in self.airtime.items() if p == flow and ch == c)


class _Net:
    """Topology compiled into per-channel index arrays."""

    def __init__(self, topology: MeshTopology, mode: str):
        if mode not in MODES:
            raise DomainError(f"mode must be one of {MODES}, got {mode!r}")
        problems = validate(topology)
        if problems:
            raise DomainError("invalid topology: " + "; ".join(f"{v.entity}: {v.rule} ({v.detail})" for v in problems))
        self.topology = topology
        self.mode = mode
        self.flows = list(topology.flows)
        self.ids = [f.flow_id for f in self.flows]
        self.w = np.array([topology.weight(f, mode) for f in self.flows], dtype=float)
        sets = flow_sets(topology)
        self.channels = []
        self.ch = {}
        self.flow_channels = [[] for _ in self.flows]
        for c, wl in topology.wlans.items():
            stations = [k for k in topology.members(c) if (k, c) in sets.per_station]
            if not stations:
                continue
            pos = {k: i for i, k in enumerate(stations)}
            fi, si, coef = [], [], []
            for p, f in enumerate(self.flows):
                l_bits = topology.flow_l_bits(f)
                for hop in f.route:
                    if hop.channel != c:
                        continue
                    a_scale = f.a_scaling(hop.src) if mode == "goodput" else 1.0
                    fi.append(p)
                    si.append(pos[hop.src])
                    coef.append(a_scale * wl.t_c / l_bits)
                    if c not in self.flow_channels[p]:
                        self.flow_channels[p].append(c)
            nbar = np.array([len(sets.per_station[(k, c)]) for k in stations], dtype=float)
            xcap = np.array([min(wl.y, topology.stations[k].tau_bar / (1 - topology.stations[k].tau_bar)
                                 if topology.stations[k].tau_bar is not None else math.inf)
                             for k in stations])
            if wl.pbar <= 1.0 or np.any(xcap <= 0):
                raise InfeasibleTopologyError(
                    f"WLAN {c} cannot carry any traffic (p_bar={wl.pbar}, x caps={xcap})",
                    certificate={"channel": c})
            self.channels.append(c)
            self.ch[c] = dict(params=wl, stations=stations, fi=np.array(fi), si=np.array(si),
                              coef=np.array(coef), nbar=nbar, xcap=xcap)

    # loads -------------------------------------------------------------
    def loads(self, c, s):
        d = self.ch[c]
        u = d["coef"] * s[d["fi"]]
        k = len(d["stations"])
        m = np.zeros(k)
        np.maximum.at(m, d["si"], u)
        sig = np.zeros(k)
        np.add.at(sig, d["si"], u)
        return u, m, sig

    def point(self, c, s):
        d = self.ch[c]
        _, m, sig = self.loads(c, s)
        share = np.maximum(m, sig / d["nbar"])
        return minimal_operating_point(d["params"].a, share, sig, p_bar=d["params"].pbar, x_cap=d["xcap"])

    def feasible(self, c, s):
        return self.point(c, s) is not None

    def rate_cap(self, c, p):
        """Rate at which flow ``p`` alone would fill its transmitter's airtime on ``c``."""
        d = self.ch[c]
        return 1.0 / d["coef"][d["fi"] == p].max()


# exact route ---------------------------------------------------------------


def _compose(net, active, levels, T):
    return np.where(active, net.w * T, levels)


def _step_exact(net, active, levels):
    best, per = math.inf, {}
    for c in net.channels:
        d = net.ch[c]
        if not np.any(active[d["fi"]]):
            continue
        act = np.unique(d["fi"][active[d["fi"]]])
        hi = min(net.rate_cap(c, p) / net.w[p] for p in act)
        T = bisect_predicate(lambda t: net.feasible(c, _compose(net, active, levels, t)), 0.0, hi, rtol=1e-13)
        per[c] = T
        best = min(best, T)
    return best, per


def _probe_exact(net, active, levels, T, p):
    base = _compose(net, active, levels, T)
    out = {}
    for c in net.flow_channels[p]:
        def ok(r, c=c):
            s = base.copy()
            s[p] = r
            return net.feasible(c, s)
        lo = base[p]
        if not ok(lo):
            out[c] = lo
            continue
        out[c] = bisect_predicate(ok, lo, net.rate_cap(c, p), rtol=1e-13)
    return out


# barrier route -------------------------------------------------------------


def _yvar(c, k):
    return f"y[{c},{k}]"


def _evar(c, k):
    return f"eta[{c},{k}]"


def _channel_program(net, c, rate_terms, variables, constraints, start):
    """Append the variables and constraints of WLAN ``c``. ``rate_terms[p]`` is
    ``(coef_dict, const)`` describing ``log s_p``."""
    d = net.ch[c]
    wl = d["params"]
    ys, es = [], []
    x_hi = min(X_MAX, wl.pbar - 1.0)
    P = wl.pbar if math.isfinite(wl.pbar) else 2.0
    x0 = (2.0 / (1.0 + 1.0 / P)) ** (1.0 / len(d["stations"])) - 1.0
    for i, k in enumerate(d["stations"]):
        yk = _yvar(c, k)
        hi = math.log(min(x_hi, d["xcap"][i]))
        variables[yk] = (math.log(1e-12), hi)
        start[yk] = min(math.log(x0), hi - 1e-3)
        ys.append(yk)
        if d["nbar"][i] > 1:
            ek = _evar(c, k)
            variables[ek] = (0.0, math.log(d["nbar"][i]))
            start[ek] = 0.5 * math.log(d["nbar"][i])
            es.append(ek)
        else:
            es.append(None)

    def den():
        return sv.LogDenominator(ys, es, wl.a)

    rows_by_station = {i: [] for i in range(len(ys))}
    for p, i, coef in zip(d["fi"], d["si"], d["coef"]):
        cd, const = rate_terms[p]
        row = (dict(cd), const + math.log(coef))
        rows_by_station[i].append(row)
        aff = dict(cd)
        aff[ys[i]] = aff.get(ys[i], 0.0) - 1.0
        constraints.append(sv.Constraint([sv.Affine(aff, row[1]), den()], f"eq6[{net.ids[p]},{c}]", "i"))
    for i, rows in rows_by_station.items():
        aff = {ys[i]: -1.0}
        if es[i] is not None:
            aff[es[i]] = -1.0
        constraints.append(sv.Constraint([sv.LogSumExp(rows), sv.Affine(aff), den()],
                                         f"eq7[{d['stations'][i]},{c}]", "i"))
    if math.isfinite(wl.pbar):
        constraints.append(sv.Constraint([sv.Softplus([({y: 1.0}, 0.0) for y in ys]),
                                          sv.Affine(const=-math.log(wl.pbar))], f"pbar[{c}]", "ii"))


def step_program(net, active, levels):
    """LogProgram of one water-filling step (maximize ``log T``)."""
    chans = [c for c in net.channels if np.any(active[net.ch[c]["fi"]])]
    hi = min(net.rate_cap(c, p) / net.w[p] for c in chans for p in np.unique(net.ch[c]["fi"]))
    variables = {"t": (math.log(hi) - 60.0, math.log(hi))}
    cmax = max(float(np.max(net.ch[c]["coef"] * net.w[net.ch[c]["fi"]])) for c in chans)
    start = {"t": math.log(1e-6 / cmax)}
    constraints = []
    rate_terms = {}
    for p in range(len(net.flows)):
        if active[p]:
            rate_terms[p] = ({"t": 1.0}, math.log(net.w[p]))
        else:
            rate_terms[p] = ({}, math.log(levels[p] * (1 - BARRIER_BACKOFF)))
    for c in chans:
        _channel_program(net, c, rate_terms, variables, constraints, start)
    return sv.LogProgram(variables, constraints, "t", start)


def probe_program(net, active, levels, T, p):
    chans = net.flow_channels[p]
    hi = min(net.rate_cap(c, p) for c in chans)
    variables = {"r": (math.log(hi) - 60.0, math.log(hi))}
    start = {"r": math.log(1e-6 * hi)}
    constraints = []
    rate_terms = {}
    for q in range(len(net.flows)):
        if q == p:
            rate_terms[q] = ({"r": 1.0}, 0.0)
        else:
            base = net.w[q] * T if active[q] else levels[q]
            rate_terms[q] = ({}, math.log(base * (1 - BARRIER_BACKOFF)))
    for c in chans:
        _channel_program(net, c, rate_terms, variables, constraints, start)
    return sv.LogProgram(variables, constraints, "r", start)


def _step_barrier(net, active, levels):
    prog = step_program(net, active, levels)
    sol = sv.solve(prog, audit=False)
    if sol.status != sv.OPTIMAL:
        raise SolverError(f"step program ended with status {sol.status}", program=prog, certificate=sol.certificate)
    T = math.exp(sol.values["t"])
    # per-channel attribution: channels whose constraints are active
    per = {}
    for c in net.channels:
        if any(name.endswith(f",{c}]") or name == f"pbar[{c}]" for name in sol.active_set):
            per[c] = T
    return T, per


def _probe_barrier(net, active, levels, T, p):
    out = {}
    for c in net.flow_channels[p]:
        sub = _Restricted(net, c)
        prog = probe_program(sub, active, levels, T, p)
        sol = sv.solve(prog, audit=False)
        if sol.status != sv.OPTIMAL:
            raise SolverError(f"probe of flow {net.ids[p]} ended with status {sol.status}",
                              program=prog, certificate=sol.certificate)
        out[c] = math.exp(sol.values["r"])
    return out


class _Restricted:
    """View of a compiled network limited to one channel."""

    def __init__(self, net, c):
        self.__dict__.update(net.__dict__)
        self.channels = [c]
        self.flow_channels = [[c] if c in fc else [] for fc in net.flow_channels]
        self._net = net

    def rate_cap(self, c, p):
        return self._net.rate_cap(c, p)


# public API ----------------------------------------------------------------


def step_max_common_rate(topology_or_net, active, levels, mode="throughput", method="exact"):
    """Largest common level ``T`` of the active flows with settled flows at
    ``levels`` (rates). Returns ``(T, {channel: operating point})``."""
    net = topology_or_net if isinstance(topology_or_net, _Net) else _Net(topology_or_net, mode)
    active = _mask(net, active)
    levels = _levels(net, levels)
    if not np.any(active):
        raise DomainError("active flow set is empty")
    T, _ = (_step_exact if method == "exact" else _step_barrier)(net, active, levels)
    s = _compose(net, active, levels, T)
    return T, {c: net.point(c, s) for c in net.channels}


def detect_bottlenecked(topology_or_net, active, levels, T, mode="throughput", method="exact", rtol=PROBE_RTOL):
    """Active flows whose rate cannot exceed level ``T``; maps each to the sorted
    list of WLANs where it is tight."""
    net = topology_or_net if isinstance(topology_or_net, _Net) else _Net(topology_or_net, mode)
    active = _mask(net, active)
    levels = _levels(net, levels)
    probe = _probe_exact if method == "exact" else _probe_barrier
    out = {}
    for p in np.flatnonzero(active):
        target = net.w[p] * T * (1 + rtol)
        per = probe(net, active, levels, T, p)
        tight = sorted(c for c, r in per.items() if r <= target)
        if tight:
            out[net.ids[p]] = tight
    return out


def _mask(net, active):
    if isinstance(active, np.ndarray) and active.dtype == bool:
        return active
    ids = set(active)
    return np.array([f in ids for f in net.ids])


def _levels(net, levels):
    if isinstance(levels, np.ndarray):
        return levels.astype(float)
    levels = levels or {}
    return np.array([float(levels.get(f, 0.0)) for f in net.ids])


def waterfill(topology: MeshTopology, mode="throughput", method="exact", rtol=PROBE_RTOL) -> MaxMinResult:
    """Weighted max-min fair rates of every flow.

    ``mode`` selects the weights: ``throughput`` (1 unless a flow sets its own
    weight), ``time`` (the flow's PHY rate, equalizing airtime) or ``goodput``
    (weight 1, per-hop send rates inflated by the downstream loss factor).
    """
    if method not in METHODS:
        raise DomainError(f"method must be one of {METHODS}, got {method!r}")
    net = _Net(topology, mode)
    nf = len(net.flows)
    active = np.ones(nf, dtype=bool)
    levels = np.zeros(nf)
    level_list, level_index, bottleneck, tight_map = [], {}, {}, {}
    notes = []
    step = _step_exact if method == "exact" else _step_barrier
    while np.any(active):
        T, per = step(net, active, levels)
        if not T > 0:
            c = min(per, key=per.get) if per else None
            raise InfeasibleTopologyError("no allocation with strictly positive rates exists",
                                          certificate={"channel": c, "level": T})
        found = detect_bottlenecked(net, active, levels, T, mode, method, rtol)
        if not found:
            # numerical corner: the argmin WLANs are tight for all of their active flows
            worst = [c for c, v in per.items() if v <= T * (1 + rtol)]
            for c in worst:
                for p in np.unique(net.ch[c]["fi"]):
                    if active[p]:
                        found.setdefault(net.ids[p], []).append(c)
            notes.append(f"level {len(level_list)}: probe found no bottleneck, used argmin WLANs {worst}")
        idx = len(level_list)
        level_list.append(float(T))
        for fid, chans in found.items():
            p = net.ids.index(fid)
            active[p] = False
            levels[p] = net.w[p] * T
            level_index[fid] = idx
            tight_map[fid] = sorted(chans)
            bottleneck[fid] = sorted(chans)[0]
    return _finish(net, levels, level_list, level_index, bottleneck, tight_map, mode, method, notes)


def _finish(net, rates, level_list, level_index, bottleneck, tight_map, mode, method, notes):
    wlans, share, airtime, saturated = {}, {}, {}, {}
    for c in net.channels:
        d = net.ch[c]
        res = net.point(c, rates)
        if res is None and method == "barrier":
            # barrier levels carry a relative error of order BARRIER_BACKOFF
            res = net.point(c, rates * (1 - 100 * BARRIER_BACKOFF))
            notes.append(f"{c}: operating point computed at rates scaled by 1-{100 * BARRIER_BACKOFF:g}")
        if res is None:
            raise SolverError(f"final allocation infeasible at WLAN {c}")
        X, x, n = res
        u, m, _ = net.loads(c, rates)
        stations = d["stations"]
        b_flows = sorted({net.ids[p] for p in d["fi"] if c in tight_map.get(net.ids[p], ())})
        b_idx = {net.ids.index(f) for f in b_flows}
        vb = sorted({stations[i] for p, i in zip(d["fi"], d["si"]) if p in b_idx})
        if vb:
            x_bar = max(x[stations.index(k)] for k in vb)
            y = x_bar
        else:
            x_bar = None
            # no saturated flows here: report the symmetric design value on the idle cap
            pb = d["params"].pbar
            sym = pb ** (1.0 / len(stations)) - 1.0 if math.isfinite(pb) else float(np.max(x))
            y = max(sym, float(np.max(x)))
        for p, i, uu in zip(d["fi"], d["si"], u):
            key = (net.ids[p], stations[i], c)
            frac = uu / (x[i] / X) if x[i] > 0 else 0.0
            share[key] = frac
            airtime[key] = uu
            saturated[key] = bool(abs(frac - 1) <= AUDIT_RTOL and x[i] >= y * (1 - AUDIT_RTOL))
        p_idle = 1.0 / float(np.prod(1.0 + x))
        wlans[c] = WlanAllocation(c, list(stations), dict(zip(stations, map(float, x))),
                                  dict(zip(stations, map(float, n))), float(X), x_bar, float(y), p_idle,
                                  d["params"].pbar, b_flows, vb)
    return MaxMinResult(
        rates={f: float(r) for f, r in zip(net.ids, rates)},
        levels=level_list, level_index=level_index, bottleneck=bottleneck, tight=tight_map,
        wlans=wlans, share=share, airtime=airtime, saturated=saturated,
        weights={f: float(w) for f, w in zip(net.ids, net.w)}, mode=mode, method=method, notes=notes,
    )


@dataclass
class AuditReport:
    passed: bool
    violations: List[str]
    flags: List[str]
    checks: Dict[str, Dict[str, bool]]


def audit_theorem3(result: MaxMinResult, topology: MeshTopology, rtol=AUDIT_RTOL) -> AuditReport:
    """Structural checks of a max-min allocation, per WLAN carrying bottlenecked flows.

    1. stations carrying bottlenecked flows share one attempt rate, equal to ``y``;
    2. bottlenecked flows send one frame per successful transmission of their
       station, and every station's aggregate balance holds with equality;
    3. flows crossing the WLAN without being bottlenecked there are unsaturated:
       their rate is strictly below ``y / X``.

    In goodput mode, deviations from 1 and 2 caused by unequal loss factors are
    expected and reported as flags rather than violations.
    """
    violations, flags, checks = [], [], {}
    by_channel = {}
    for (f, k, c), v in result.airtime.items():
        by_channel.setdefault(c, []).append((f, k, v))
    for c, wl in result.wlans.items():
        ok1 = ok2 = ok3 = True
        if not wl.has_bottleneck:
            checks[c] = {"common_rate": True, "one_frame": True, "unsaturated": True}
            continue
        soft = result.mode == "goodput"
        # 1
        for k in wl.bottleneck_stations:
            if abs(wl.x[k] - wl.x_bar) > rtol * wl.x_bar:
                msg = f"{c}: station {k} x={wl.x[k]:.9g} differs from x_bar={wl.x_bar:.9g}"
                if soft:
                    flags.append(msg + " (unequal loss factors)")
                else:
                    violations.append(msg)
                    ok1 = False
        if abs(wl.y - wl.x_bar) > rtol * wl.x_bar:
            violations.append(f"{c}: y={wl.y} != x_bar={wl.x_bar}")
            ok1 = False
        # 2
        sums = {}
        for f, k, u in by_channel[c]:
            sums[k] = sums.get(k, 0.0) + u
            if f in wl.bottlenecked:
                fr = result.share[(f, k, c)]
                if abs(fr - 1.0) > rtol or not result.saturated[(f, k, c)]:
                    msg = f"{c}: bottlenecked flow {f} at {k} is unsaturated (share {fr:.9g}, x={wl.x[k]:.9g}, y={wl.y:.9g})"
                    if soft:
                        flags.append(msg)
                    else:
                        violations.append(msg)
                        ok2 = False
        for k, tot in sums.items():
            cap = wl.n[k] * wl.x[k] / wl.X
            if abs(tot - cap) > rtol * max(cap, 1e-300):
                violations.append(f"{c}: station {k} aggregate balance slack {cap - tot:.3g}")
                ok2 = False
        # 3
        for f, k, u in by_channel[c]:
            if f in wl.bottlenecked:
                continue
            if not u < (wl.y / wl.X) * (1 - rtol):
                violations.append(f"{c}: non-bottlenecked flow {f} at {k} is saturated (u={u:.9g})")
                ok3 = False
        checks[c] = {"common_rate": ok1, "one_frame": ok2, "unsaturated": ok3}
    return AuditReport(not violations, violations, flags, checks)


@dataclass
class WlanConfig:
    channel: str
    y: float
    tau_bar: float
    cw: int
    pidle_target: float
    per_flow_queueing: bool
    x: Dict[str, float]
    n: Dict[str, float]


def cw_from_tau(tau):
    """Contention window with ``2 / (CW - 1) = tau``, rounded, at least 2."""
    if not 0 < tau <= 1:
        raise DomainError(f"tau must lie in (0, 1], got {tau}")
    return max(2, int(math.floor(1.0 + 2.0 / tau + 0.5)))


def tau_from_cw(cw):
    """Attempt probability of a fixed contention window, capped at 1."""
    if cw <= 1:
        raise DomainError(f"CW must exceed 1, got {cw}")
    return min(1.0, 2.0 / (cw - 1.0))


def configure_network(result: MaxMinResult) -> Dict[str, WlanConfig]:
    """Per-WLAN runtime configuration realizing ``result`` with per-flow queueing."""
    out = {}
    for c, wl in result.wlans.items():
        tau = wl.y / (1.0 + wl.y)
        out[c] = WlanConfig(c, wl.y, tau, cw_from_tau(tau), 1.0 / wl.p_bar, True, dict(wl.x), dict(wl.n))
    return out
