"""Mesh network description: WLAN cliques, multi-radio stations and routed flows."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Dict, List, NamedTuple, Optional, Tuple

from .model import StationParams, WlanParams


class Hop(NamedTuple):
    src: str
    dst: str
    channel: str


@dataclass(frozen=True)
class Station:
    station_id: str
    channels: Tuple[str, ...]
    l_bits: float = 8000.0
    tau_bar: Optional[float] = None
    mesh_point: bool = False


@dataclass(frozen=True)
class Flow:
    flow_id: str
    route: Tuple[Hop, ...]
    phy_rate: float = 11e6
    weight: Optional[float] = None
    l_bits: Optional[float] = None
    loss: Optional[Tuple[float, ...]] = None
    loss_scaling: Optional[Dict[str, float]] = None

    @property
    def source(self) -> str:
        return self.route[0].src

    def a_scaling(self, station: str) -> float:
        """Send-rate inflation needed at ``station`` so the destination sees the
        flow's goodput after downstream losses (1 when lossless)."""
        if self.loss_scaling and station in self.loss_scaling:
            return float(self.loss_scaling[station])
        if not self.loss:
            return 1.0
        for k, hop in enumerate(self.route):
            if hop.src == station:
                return loss_scaling_from_losses(self.loss[k:])
        return 1.0


def loss_scaling_from_losses(losses) -> float:
    """Product of ``1 / (1 - loss)`` over the remaining hops (block-ACK model)."""
    a = 1.0
    for p in losses:
        a /= 1.0 - p
    return a


class Violation(NamedTuple):
    entity: str
    rule: str
    detail: str


@dataclass
class FlowSets:
    """Index of which flows each station relays on each channel."""

    per_station: Dict[Tuple[str, str], frozenset]
    per_channel: Dict[str, frozenset]
    bottlenecked: Dict[str, set] = field(default_factory=dict)
    bottleneck_stations: Dict[str, set] = field(default_factory=dict)


class MeshTopology:
    def __init__(self, wlans: List[WlanParams], stations: List[Station], flows: List[Flow], name: str = ""):
        self.name = name
        self.wlans: Dict[str, WlanParams] = {w.channel_id: w for w in wlans}
        self.stations: Dict[str, Station] = {s.station_id: s for s in stations}
        self.flows: List[Flow] = list(flows)
        self._raw_counts = (len(wlans), len(stations), len(flows))

    def __repr__(self):
        return (f"MeshTopology({self.name!r}, wlans={len(self.wlans)}, "
                f"stations={len(self.stations)}, flows={len(self.flows)})")

    @property
    def channels(self) -> List[str]:
        return list(self.wlans)

    @property
    def flow_ids(self) -> List[str]:
        return [f.flow_id for f in self.flows]

    def flow(self, flow_id) -> Flow:
        for f in self.flows:
            if f.flow_id == flow_id:
                return f
        raise KeyError(flow_id)

    def members(self, channel) -> List[str]:
        return [k for k, s in self.stations.items() if channel in s.channels]

    def n(self, channel) -> int:
        return len(self.members(channel))

    def edges(self):
        """Directed labelled edges ``(i, j, c)`` implied by shared channel membership."""
        out = []
        for c in self.wlans:
            mem = self.members(c)
            out.extend(Hop(i, j, c) for i in mem for j in mem if i != j)
        return out

    def flow_l_bits(self, flow: Flow) -> float:
        if flow.l_bits is not None:
            return float(flow.l_bits)
        return float(self.stations[flow.source].l_bits)

    def weight(self, flow: Flow, mode: str = "throughput") -> float:
        if flow.weight is not None:
            return float(flow.weight)
        if mode == "time":
            return float(flow.phy_rate)
        return 1.0

    def station_params(self, station, channel) -> StationParams:
        s = self.stations[station]
        sets = flow_sets(self)
        n_bar = max(1, len(sets.per_station.get((station, channel), ())))
        return StationParams(station, s.l_bits, n_bar, s.tau_bar)

    def with_wlans(self, wlans: List[WlanParams]) -> "MeshTopology":
        return MeshTopology(wlans, list(self.stations.values()), self.flows, self.name)

    def scaled_payload(self, factor: float) -> "MeshTopology":
        """Copy with every payload size multiplied by ``factor``."""
        stations = [Station(s.station_id, s.channels, s.l_bits * factor, s.tau_bar, s.mesh_point)
                    for s in self.stations.values()]
        flows = [Flow(f.flow_id, f.route, f.phy_rate, f.weight,
                      None if f.l_bits is None else f.l_bits * factor, f.loss, f.loss_scaling)
                 for f in self.flows]
        return MeshTopology(list(self.wlans.values()), stations, flows, self.name)


def validate(topology: MeshTopology) -> List[Violation]:
    """Structural checks; returns an empty list iff the topology is well formed.

    Flows that originate at mesh points are legal but trigger a ``UserWarning``.
    """
    out: List[Violation] = []
    n_w, n_s, n_f = topology._raw_counts
    if n_w != len(topology.wlans):
        out.append(Violation("wlans", "duplicate id", "channel labels are not unique"))
    if n_s != len(topology.stations):
        out.append(Violation("stations", "duplicate id", "station ids are not unique"))
    if n_f != len({f.flow_id for f in topology.flows}):
        out.append(Violation("flows", "duplicate id", "flow ids are not unique"))

    for sid, st in topology.stations.items():
        if len(set(st.channels)) != len(st.channels):
            out.append(Violation(f"station {sid}", "duplicate channel", f"channels {st.channels}"))
        for c in st.channels:
            if c not in topology.wlans:
                out.append(Violation(f"station {sid}", "unknown channel", c))
        if not st.l_bits > 0:
            out.append(Violation(f"station {sid}", "payload", f"l_bits={st.l_bits}"))
    for c in topology.wlans:
        if topology.n(c) < 1:
            out.append(Violation(f"wlan {c}", "empty channel", "no member stations"))

    for f in topology.flows:
        ent = f"flow {f.flow_id}"
        if not f.route:
            out.append(Violation(ent, "empty route", "route has no hops"))
            continue
        if not f.phy_rate > 0:
            out.append(Violation(ent, "phy rate", f"phy_rate={f.phy_rate}"))
        if f.weight is not None and not f.weight > 0:
            out.append(Violation(ent, "weight", f"weight={f.weight}"))
        if f.loss is not None:
            if len(f.loss) != len(f.route):
                out.append(Violation(ent, "loss", "one loss rate per hop required"))
            elif any(not 0 <= p < 1 for p in f.loss):
                out.append(Violation(ent, "loss", f"loss rates {f.loss} outside [0, 1)"))
        if f.loss_scaling:
            for k, v in f.loss_scaling.items():
                if not v >= 1:
                    out.append(Violation(ent, "loss scaling", f"A[{k}]={v} < 1"))
        seen = set()
        for idx, hop in enumerate(f.route):
            for node in (hop.src, hop.dst):
                if node not in topology.stations:
                    out.append(Violation(ent, "unknown station", f"hop {idx}: {node}"))
            if hop.channel not in topology.wlans:
                out.append(Violation(ent, "unknown channel", f"hop {idx}: {hop.channel}"))
                continue
            if hop.src == hop.dst:
                out.append(Violation(ent, "broken chain", f"hop {idx} sends to itself"))
            for node in (hop.src, hop.dst):
                st = topology.stations.get(node)
                if st is not None and hop.channel not in st.channels:
                    out.append(Violation(ent, "broken chain",
                                         f"hop {idx}: {node} is not on channel {hop.channel}"))
            if idx and f.route[idx - 1].dst != hop.src:
                out.append(Violation(ent, "broken chain",
                                     f"hop {idx} starts at {hop.src}, previous hop ends at {f.route[idx - 1].dst}"))
            key = (hop.src, hop.channel)
            if key in seen:
                out.append(Violation(ent, "loop", f"{hop.src} transmits twice on {hop.channel}"))
            seen.add(key)
        nodes = [f.route[0].src] + [h.dst for h in f.route]
        if len(set(nodes)) != len(nodes) and not any(v.rule == "loop" and v.entity == ent for v in out):
            out.append(Violation(ent, "loop", f"route revisits a station: {nodes}"))
        src = topology.stations.get(f.source)
        if src is not None and src.mesh_point:
            warnings.warn(f"{ent} originates at mesh point {f.source}", UserWarning, stacklevel=2)
    return out


def flow_sets(topology: MeshTopology) -> FlowSets:
    per_station: Dict[Tuple[str, str], set] = {}
    per_channel: Dict[str, set] = {c: set() for c in topology.wlans}
    for f in topology.flows:
        for hop in f.route:
            per_station.setdefault((hop.src, hop.channel), set()).add(f.flow_id)
            per_channel.setdefault(hop.channel, set()).add(f.flow_id)
    return FlowSets(
        per_station={k: frozenset(v) for k, v in per_station.items()},
        per_channel={k: frozenset(v) for k, v in per_channel.items()},
    )


def transmitters(topology: MeshTopology, channel) -> List[str]:
    """Stations that relay at least one flow on ``channel``, in membership order."""
    sets = flow_sets(topology)
    return [k for k in topology.members(channel) if (k, channel) in sets.per_station]


def is_finite_positive(v) -> bool:
    return v is not None and math.isfinite(v) and v > 0
