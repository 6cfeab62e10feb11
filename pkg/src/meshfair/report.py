"""CSV outputs: allocations, configurations, measurements and figure data.

Every file opens with a comment line carrying the package version, the
scenario digest and the seed, followed by a header row.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

from . import __version__
from .exceptions import ScenarioError
from .model import WlanParams
from .region import RayQuery, boundary_along_ray, efficiency_ratio, pbar_max
from .waterfill import MaxMinResult, WlanConfig


def provenance_line(digest: str = "", seed="") -> str:
    return f"# meshfair-version={__version__}, scenario-hash={digest}, seed={seed}"


def write_csv(path, columns: Sequence[str], rows: Iterable[Sequence], digest: str = "", seed="") -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        fh.write(provenance_line(digest, seed) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return int(v)
    return v


def read_csv(path) -> List[Dict[str, str]]:
    """Rows of a CSV written by :func:`write_csv`, skipping comment lines."""
    path = Path(path)
    if not path.exists():
        raise ScenarioError(f"file not found: {path}")
    with path.open(newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def read_provenance(path) -> Dict[str, str]:
    with Path(path).open() as fh:
        first = fh.readline().strip()
    if not first.startswith("#"):
        return {}
    out = {}
    for part in first[1:].split(","):
        if "=" in part:
            k, v = part.split("=", 1)
            out[k.strip()] = v.strip()
    return out


# solver outputs

ALLOCATION_COLUMNS = ("flow", "rate", "airtime", "bottleneck", "level_index")
WLAN_CONFIG_COLUMNS = ("channel", "y", "cw", "pidle_target", "per_flow_queueing", "station", "x", "n")


def allocation_rows(result: MaxMinResult):
    for f, rate in result.rates.items():
        yield f, rate, result.flow_airtime(f), result.bottleneck.get(f, ""), result.level_index[f]


def wlan_config_rows(config: Dict[str, WlanConfig]):
    for c, w in config.items():
        stations = list(w.x) or [""]
        for k in stations:
            yield (c, w.y, w.cw, w.pidle_target, int(w.per_flow_queueing), k,
                   w.x.get(k, ""), w.n.get(k, ""))


def read_wlan_config(path) -> Dict[str, WlanConfig]:
    """Per-WLAN configuration from a ``wlan_config.csv``."""
    out: Dict[str, WlanConfig] = {}
    try:
        for row in read_csv(path):
            c = row["channel"]
            if c not in out:
                y = float(row["y"])
                out[c] = WlanConfig(c, y, y / (1 + y) if math.isfinite(y) else 1.0, int(row["cw"]),
                                    float(row["pidle_target"]), bool(int(row["per_flow_queueing"])), {}, {})
            if row["station"]:
                out[c].x[row["station"]] = float(row["x"])
                out[c].n[row["station"]] = float(row["n"])
    except (KeyError, ValueError) as exc:
        raise ScenarioError(f"malformed wlan configuration {path}: {exc}") from None
    return out


# simulator outputs

FLOWS_COLUMNS = ("window_start", "flow", "mbps", "airtime", "seed")
WLAN_COLUMNS = ("window_start", "channel", "pidle", "mean_cw", "seed")


def flows_rows(measurements):
    """Per-window rows; with several seeds the ``seed`` column tells runs apart."""
    for m in measurements:
        mbps = m.window_mbps()
        air = m.airtime_share().sum(axis=2)
        for w, start in enumerate(m.window_start):
            for i, f in enumerate(m.flow_ids):
                yield start, f, mbps[w, i], air[w, i], m.seed


def wlan_rows(measurements):
    for m in measurements:
        pid = m.window_pidle()
        cw = m.mean_cw()
        for w, start in enumerate(m.window_start):
            for ci, c in enumerate(m.channels):
                yield start, c, pid[w, ci], cw[w, ci], m.seed


@dataclass
class Comparison:
    tolerance: float
    theory: Dict[str, float]
    measured: Dict[str, float]
    errors: Dict[str, float]

    @property
    def passed(self) -> bool:
        return all(abs(e) <= self.tolerance for e in self.errors.values())

    @property
    def worst(self) -> float:
        return max((abs(e) for e in self.errors.values()), default=0.0)


def compare(allocation_csv, flows_csv, tolerance=0.1) -> Comparison:
    """Relative error of each flow's long-run simulated rate against theory.

    The simulated rate is the duration-weighted mean over all windows (and
    seeds) in ``flows_csv``.
    """
    if not tolerance >= 0:
        raise ScenarioError(f"tolerance must be nonnegative, got {tolerance}")
    theory = {r["flow"]: float(r["rate"]) / 1e6 for r in read_csv(allocation_csv)}
    rows = read_csv(flows_csv)
    starts = sorted({float(r["window_start"]) for r in rows})
    width = {s: (starts[i + 1] - s if i + 1 < len(starts) else None) for i, s in enumerate(starts)}
    default = min((v for v in width.values() if v), default=1.0)
    sums: Dict[str, float] = {}
    weights: Dict[str, float] = {}
    for r in rows:
        wgt = width[float(r["window_start"])] or default
        sums[r["flow"]] = sums.get(r["flow"], 0.0) + float(r["mbps"]) * wgt
        weights[r["flow"]] = weights.get(r["flow"], 0.0) + wgt
    measured = {f: sums[f] / weights[f] for f in sums}
    if set(measured) != set(theory):
        raise ScenarioError(f"flow sets differ: allocation has {sorted(theory)}, measurements have {sorted(measured)}")
    errors = {f: (measured[f] - theory[f]) / theory[f] if theory[f] else math.inf for f in theory}
    return Comparison(tolerance, theory, measured, errors)


# rate region

RATE_REGION_COLUMNS = ("n", "a", "lambda_star", "binding", "ratio")


def rate_region_rows(ns: Iterable[int], a: float):
    """Symmetric boundary point on the ``pbar_max(a)`` cap and the efficiency ratio for each ``n``."""
    for n in ns:
        ones = np.ones(n)
        bp = boundary_along_ray(RayQuery(ones, ones, WlanParams("c", a, 1.0, pbar_max(a))))
        yield n, a, bp.lambda_star, bp.binding, efficiency_ratio(n, a)


# figure analogues

def emit_figures(out_dir, result: Optional[MaxMinResult] = None, measurements=(), digest="", seed="",
                 time_result: Optional[MaxMinResult] = None, throughput_result: Optional[MaxMinResult] = None,
                 a=0.01, ns=range(2, 17)) -> List[Path]:
    """Write CSV analogues of the efficiency curve, per-WLAN flow histogram,
    CW/P_idle trace and throughput-versus-time allocation."""
    out = Path(out_dir)
    written = [write_csv(out / "fig3_efficiency.csv", ("n", "ratio"),
                         ((n, efficiency_ratio(n, a)) for n in ns), digest, seed)]
    measurements = list(measurements)
    if result is not None:
        sim_rate = {}
        if measurements:
            for f in result.rates:
                sim_rate[f] = float(np.mean([m.throughput()[f] for m in measurements]))
        rows = []
        for c, wl in result.wlans.items():
            flows = sorted({p for (p, k, ch) in result.share if ch == c})
            for f in flows:
                sim = sim_rate[f] / 1e6 if f in sim_rate else ""
                rows.append((c, f, result.rates[f] / 1e6, sim, int(result.bottleneck.get(f) == c)))
        written.append(write_csv(out / "fig5_histogram.csv",
                                 ("channel", "flow", "theory_mbps", "sim_mbps", "bottlenecked_here"),
                                 rows, digest, seed))
    if measurements:
        m = measurements[0]
        first = m.ports[0] if m.ports else None
        if result is not None and result.rates:
            f0 = next(iter(result.rates))
            cands = [k for k in m.ports if k[1] == result.bottleneck.get(f0)]
            first = cands[0] if cands else first
        if first is not None:
            ci = m.channels.index(first[1])
            rows = zip(m.trace_time[ci], m.trace_cw[first], m.trace_pidle[ci])
            written.append(write_csv(out / "fig6_trace.csv", ("t", "station", "channel", "cw", "pidle"),
                                     ((t, first[0], first[1], cw, p) for t, cw, p in rows), digest, m.seed))
    if time_result is not None and throughput_result is not None:
        rows = []
        for label, res in (("throughput", throughput_result), ("time", time_result)):
            for f in res.rates:
                rows.append((label, f, res.rates[f] / 1e6, res.flow_airtime(f)))
        written.append(write_csv(out / "fig9_allocation.csv", ("fairness", "flow", "mbps", "airtime"),
                                 rows, digest, seed))
    return written
