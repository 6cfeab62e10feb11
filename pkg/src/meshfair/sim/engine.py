"""Slot-level simulation of a mesh of non-interfering WLANs.

Each station transmitting on a channel keeps one queue per flow it relays
there. A station contends whenever one of its queues can send, and a won
opportunity carries one frame from every such queue. Frames leave a queue only
when the next hop has room, so nothing is ever dropped, and flow sources are
refilled as soon as they fall below capacity.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Dict, List, Mapping, Optional, Sequence

import numpy as np

from ..exceptions import ScenarioError
from ..topology import MeshTopology, validate
from . import kernel
from .config import SimConfig


def aimd_step(cw, p_idle, target, alpha=4.0, beta=0.25, floor=3, ceil=1024, literal=False):
    """New contention window after one AIMD period.

    ``literal=True`` grows the window when the measured idle probability is
    above target, exactly as the published pseudo-code reads. The default
    grows it when the channel is too busy, which is the direction that drives
    ``p_idle`` towards ``target``. A missing measurement leaves ``cw`` as is.
    """
    if p_idle is None or (isinstance(p_idle, float) and math.isnan(p_idle)):
        return cw
    return int(kernel.aimd_update(float(cw), float(p_idle), float(target), float(alpha),
                                  float(beta), float(floor), float(ceil), bool(literal)))


def measure_pidle(idle_slots, total_slots) -> Optional[float]:
    """Share of MAC slots that were idle, counted per slot not per second."""
    if total_slots <= 0:
        return None
    return idle_slots / total_slots


def backpressure_admit(next_hop_occupancy, capacity) -> bool:
    """Whether a frame may leave for a next-hop queue holding ``next_hop_occupancy``
    frames (queued plus in flight)."""
    return bool(kernel.admits(next_hop_occupancy, capacity))


@dataclass
class SimMeasurement:
    """Outcome of one run. Window arrays are indexed ``[window, ...]``; windows
    start at ``warmup`` and have width ``window`` seconds (the last may be
    shorter)."""

    seed: int
    flow_ids: List[str]
    channels: List[str]
    ports: List[tuple]
    window_start: np.ndarray
    window_length: np.ndarray
    bits: np.ndarray          # [w, flow] delivered payload bits
    airtime: np.ndarray       # [w, flow, channel] seconds of successful frames
    slots: np.ndarray         # [w, channel]
    idle_slots: np.ndarray    # [w, channel]
    idle_time: np.ndarray     # [w, channel] seconds
    success_time: np.ndarray
    collision_time: np.ndarray
    total_bits: np.ndarray    # [flow] after warmup
    total_airtime: np.ndarray  # [flow, channel] seconds after warmup
    total_slots: np.ndarray   # [channel]
    total_idle_slots: np.ndarray
    total_time: np.ndarray    # [channel] measured seconds
    injected: np.ndarray      # [flow] frames, including the initial fill
    delivered: np.ndarray
    in_queue: np.ndarray
    trace_time: List[np.ndarray]   # per channel, AIMD update instants
    trace_pidle: List[np.ndarray]
    trace_cw: Dict[tuple, np.ndarray]  # per (station, channel)
    final_cw: Dict[tuple, float]

    def throughput(self) -> Dict[str, float]:
        """Long-run mean rate of each flow in bit/s over the measured span."""
        span = float(np.max(self.total_time)) if self.total_time.size else 0.0
        return {f: (float(b) / span if span > 0 else 0.0) for f, b in zip(self.flow_ids, self.total_bits)}

    def window_mbps(self) -> np.ndarray:
        return self.bits / self.window_length[:, None] / 1e6

    def window_pidle(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.slots > 0, self.idle_slots / np.maximum(self.slots, 1), np.nan)

    def airtime_share(self) -> np.ndarray:
        """Per-window fraction of time each flow occupies each channel."""
        return self.airtime / self.window_length[:, None, None]

    def mean_cw(self) -> np.ndarray:
        """Per-window mean contention window of each channel's stations."""
        out = np.full((self.window_start.size, len(self.channels)), np.nan)
        for ci, c in enumerate(self.channels):
            keys = [k for k in self.ports if k[1] == c]
            if not keys:
                continue
            times = self.trace_time[ci]
            for w, (s, L) in enumerate(zip(self.window_start, self.window_length)):
                sel = (times >= s) & (times < s + L)
                if sel.any():
                    out[w, ci] = float(np.mean([self.trace_cw[k][sel] for k in keys]))
                else:
                    out[w, ci] = float(np.mean([self.final_cw[k] for k in keys]))
        return out


class _Layout:
    """Flat arrays describing ports (station, channel) and their flow queues."""

    def __init__(self, topology: MeshTopology):
        self.flow_ids = [f.flow_id for f in topology.flows]
        self.channels = list(topology.wlans)
        ports = []
        entries = {}
        for fi, f in enumerate(topology.flows):
            for h, hop in enumerate(f.route):
                key = (hop.src, hop.channel)
                if key not in ports:
                    ports.append(key)
                entries[(fi, h)] = key
        # ports grouped by channel, entries grouped by port
        ports.sort(key=lambda k: (self.channels.index(k[1]), list(topology.stations).index(k[0])))
        self.ports = ports
        order = sorted(entries, key=lambda e: (ports.index(entries[e]), e))
        index = {e: i for i, e in enumerate(order)}
        n_e = len(order)
        self.ent_flow = np.array([e[0] for e in order], dtype=np.int64)
        self.ent_next = np.full(n_e, -1, dtype=np.int64)
        self.ent_source = np.zeros(n_e, dtype=np.bool_)
        self.ent_bits = np.zeros(n_e)
        for (fi, h), i in index.items():
            f = topology.flows[fi]
            if h + 1 < len(f.route):
                self.ent_next[i] = index[(fi, h + 1)]
            self.ent_source[i] = h == 0
            self.ent_bits[i] = topology.flow_l_bits(f)
        port_of = np.array([ports.index(entries[e]) for e in order], dtype=np.int64)
        n_p = len(ports)
        self.port_start = np.searchsorted(port_of, np.arange(n_p), side="left").astype(np.int64)
        self.port_end = np.searchsorted(port_of, np.arange(n_p), side="right").astype(np.int64)
        ch_of = np.array([self.channels.index(k[1]) for k in ports], dtype=np.int64)
        n_c = len(self.channels)
        self.ch_port_start = np.searchsorted(ch_of, np.arange(n_c), side="left").astype(np.int64)
        self.ch_port_end = np.searchsorted(ch_of, np.arange(n_c), side="right").astype(np.int64)
        self.port_ch = ch_of
        self.ch_sigma = np.array([topology.wlans[c].sigma for c in self.channels])
        self.ch_tc = np.array([topology.wlans[c].t_c for c in self.channels])
        self.pbar = np.array([topology.wlans[c].pbar for c in self.channels])


def run(topology: MeshTopology, wlan_config: Optional[Mapping] = None, sim: Optional[SimConfig] = None) -> SimMeasurement:
    """Simulate ``topology`` under the per-WLAN settings in ``wlan_config``
    (or the CWs and targets already set on ``sim``)."""
    if sim is None:
        sim = SimConfig()
    problems = validate(topology)
    if problems:
        raise ScenarioError("invalid topology: " + "; ".join(f"{v.entity}: {v.rule} ({v.detail})" for v in problems))
    lay = _Layout(topology)
    cw_map = dict(sim.cw)
    target_map = dict(sim.pidle_target)
    if wlan_config:
        unknown = set(wlan_config) - set(lay.channels)
        if unknown:
            raise ScenarioError(f"configuration names unknown channel(s) {sorted(unknown)}")
        for c, w in wlan_config.items():
            cw_map.setdefault(c, float(w.cw))
            target_map.setdefault(c, float(w.pidle_target))
    unknown = (set(cw_map) | set(target_map)) - set(lay.channels)
    if unknown:
        raise ScenarioError(f"configuration names unknown channel(s) {sorted(unknown)}")

    n_c, n_p, n_e, n_f = len(lay.channels), len(lay.ports), lay.ent_flow.size, len(lay.flow_ids)
    aimd = sim.aimd
    cw = np.empty(n_p)
    for p, (_, c) in enumerate(lay.ports):
        if aimd is not None:
            cw[p] = sim.cw_init
        elif c in cw_map:
            cw[p] = cw_map[c]
        else:
            raise ScenarioError(f"no contention window configured for channel {c!r}")
    cw = np.clip(cw, sim.cw_floor, sim.cw_ceil)
    target = np.array([target_map.get(c, 1.0 / lay.pbar[i]) for i, c in enumerate(lay.channels)])

    duration = float(sim.duration)
    warmup = float(sim.warmup)
    window = float(sim.window)
    if math.isfinite(duration):
        n_win = int(math.ceil((duration - warmup) / window - 1e-12))
    else:
        n_win = 0
    period = aimd.period if aimd is not None else 1.0
    n_trace = int(math.ceil(duration / period)) + 2 if (aimd is not None and math.isfinite(duration)) else 0
    params = np.array([sim.queue_capacity, duration, warmup, window, sim.max_slots, period,
                       aimd.alpha if aimd else 0.0, aimd.beta if aimd else 0.0,
                       sim.cw_floor, sim.cw_ceil], dtype=float)

    q = np.where(lay.ent_source, sim.queue_capacity, 0).astype(np.int64)
    injected = np.zeros(n_f, dtype=np.int64)
    np.add.at(injected, lay.ent_flow[lay.ent_source], sim.queue_capacity)
    state = dict(
        clock=np.zeros(n_c), pend=np.zeros(n_c, dtype=np.int64), pend_port=np.zeros(n_c, dtype=np.int64),
        done=np.zeros(n_c, dtype=np.int64), q=q, r=np.zeros(n_e, dtype=np.int64),
        sent=np.zeros(n_e, dtype=np.int64), cw=cw, next_aimd=np.full(n_c, period),
        per_idle=np.zeros(n_c), per_slots=np.zeros(n_c), n_trace=np.zeros(n_c, dtype=np.int64),
        counters=np.zeros(n_c), injected=injected, delivered=np.zeros(n_f, dtype=np.int64),
    )
    out = dict(
        win_slots=np.zeros((n_win, n_c)), win_idle=np.zeros((n_win, n_c)),
        win_time=np.zeros((n_win, 3 * n_c)), win_bits=np.zeros((n_win, n_f)),
        win_air=np.zeros((n_win, n_f * n_c)),
        tot_slots=np.zeros((n_c, 2)), tot_time=np.zeros((n_c, 3)), tot_bits=np.zeros(n_f),
        tot_air=np.zeros((n_f, n_c)),
        tr_time=np.zeros((n_trace, n_c)), tr_pidle=np.zeros((n_trace, n_c)), tr_cw=np.zeros((n_trace, n_p)),
    )
    rng = np.random.Generator(np.random.PCG64(sim.seed))
    u = rng.random(sim.buffer_size)
    fstate = np.zeros(1)
    while True:
        status = kernel.run_kernel(
            lay.ch_sigma, lay.ch_tc, lay.ch_port_start, lay.ch_port_end, lay.port_start, lay.port_end,
            lay.ent_flow, lay.ent_next, lay.ent_source, lay.ent_bits,
            params, aimd is not None, bool(aimd.literal) if aimd else False, target,
            state["clock"], state["pend"], state["pend_port"], state["done"], state["q"], state["r"],
            state["sent"], state["cw"], state["next_aimd"], state["per_idle"], state["per_slots"],
            state["n_trace"], state["counters"], state["injected"], state["delivered"],
            out["win_slots"], out["win_idle"], out["win_time"], out["win_bits"], out["win_air"],
            out["tot_slots"], out["tot_time"], out["tot_bits"], out["tot_air"],
            out["tr_time"], out["tr_pidle"], out["tr_cw"],
            u, fstate,
        )
        if status == kernel.FINISHED:
            break
        # keep unused uniforms so the stream does not depend on the buffer size
        pos = int(fstate[0])
        u = np.concatenate([u[pos:], rng.random(pos)])
        fstate[0] = 0

    in_queue = np.zeros(n_f, dtype=np.int64)
    np.add.at(in_queue, lay.ent_flow, state["q"] + state["r"])
    starts = warmup + window * np.arange(n_win)
    lengths = np.minimum(starts + window, duration) - starts
    wt = out["win_time"].reshape(n_win, n_c, 3)
    traces_t, traces_p = [], []
    trace_cw = {}
    for ci in range(n_c):
        k = int(state["n_trace"][ci])
        traces_t.append(out["tr_time"][:k, ci].copy())
        traces_p.append(out["tr_pidle"][:k, ci].copy())
    for p, key in enumerate(lay.ports):
        k = int(state["n_trace"][lay.port_ch[p]])
        trace_cw[key] = out["tr_cw"][:k, p].copy()
    measured = state["clock"].copy()
    if math.isfinite(duration):
        measured = np.minimum(measured, duration)
    return SimMeasurement(
        seed=sim.seed, flow_ids=lay.flow_ids, channels=lay.channels, ports=list(lay.ports),
        window_start=starts, window_length=lengths,
        bits=out["win_bits"], airtime=out["win_air"].reshape(n_win, n_f, n_c),
        slots=out["win_slots"], idle_slots=out["win_idle"],
        idle_time=wt[:, :, 0].copy(), success_time=wt[:, :, 1].copy(), collision_time=wt[:, :, 2].copy(),
        total_bits=out["tot_bits"], total_airtime=out["tot_air"],
        total_slots=out["tot_slots"][:, 0].copy(), total_idle_slots=out["tot_slots"][:, 1].copy(),
        total_time=np.maximum(measured - warmup, 0.0),
        injected=state["injected"], delivered=state["delivered"], in_queue=in_queue,
        trace_time=traces_t, trace_pidle=traces_p, trace_cw=trace_cw,
        final_cw={key: float(state["cw"][p]) for p, key in enumerate(lay.ports)},
    )


def run_many(topology: MeshTopology, wlan_config: Optional[Mapping], sim: SimConfig,
             seeds: Sequence[int], workers: Optional[int] = None) -> List[SimMeasurement]:
    """Independent runs for several seeds, in parallel threads (the compiled
    loop releases the interpreter lock). Results come back in seed order."""

    configs = [replace(sim, seed=int(s)) for s in seeds]
    if workers is None:
        workers = min(len(configs), os.cpu_count() or 1)
    if len(configs) <= 1 or workers == 1:
        return [run(topology, wlan_config, c) for c in configs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda c: run(topology, wlan_config, c), configs))
