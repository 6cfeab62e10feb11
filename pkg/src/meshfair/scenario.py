"""Scenario files: JSON documents describing a mesh, solver options and sim options."""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional, Union

import jsonschema

from .exceptions import ScenarioError
from .model import WlanParams
from .topology import Flow, Hop, MeshTopology, Station

BUNDLED = ("example1", "example2", "example1_multirate", "example_lossy")


def _data_file(name):
    return resources.files("meshfair").joinpath("data", name)


def load_schema() -> dict:
    return json.loads(_data_file("schema.json").read_text())


def bundled_path(name: str) -> Path:
    if name not in BUNDLED:
        raise ScenarioError(f"unknown bundled scenario {name!r}; choose from {BUNDLED}")
    return Path(str(_data_file(f"{name}.json")))


@dataclass
class SolverOptions:
    mode: str = "throughput"
    method: str = "exact"
    tolerance: float = 1e-5


@dataclass
class AimdOptions:
    alpha: float = 4.0
    beta: float = 0.25
    period: float = 1.0
    literal: bool = False


@dataclass
class SimOptions:
    seed: int = 1
    duration: float = 620.0
    warmup: float = 20.0
    window: float = 50.0
    queue_capacity: int = 50
    cw_init: int = 32
    cw_floor: int = 3
    cw_ceil: int = 1024
    aimd: Optional[AimdOptions] = field(default_factory=AimdOptions)


@dataclass
class Scenario:
    name: str
    topology: MeshTopology
    solver: SolverOptions
    sim: SimOptions
    document: dict
    digest: str


def scenario_hash(document: dict) -> str:
    canon = json.dumps(document, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:12]


def _opt(v, default):
    return default if v is None else v


def parse_scenario(document: dict, name: str = "") -> Scenario:
    """Validate a scenario document and build its objects."""
    try:
        jsonschema.validate(document, load_schema())
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path)
        raise ScenarioError(f"scenario schema violation at {path or '<root>'}: {exc.message}") from None

    solver_doc = document.get("solver", {})
    overrides = solver_doc.get("p_bar", {})
    wlans = []
    for w in document["wlans"]:
        p_bar = overrides.get(w["channel"], w.get("p_bar"))
        wlans.append(WlanParams(w["channel"], float(w["sigma"]), float(w["t_c"]), p_bar,
                                float(_opt(w.get("y"), math.inf))))
    unknown = set(overrides) - {w.channel_id for w in wlans}
    if unknown:
        raise ScenarioError(f"p_bar override for unknown channel(s) {sorted(unknown)}")

    stations = [Station(s["id"], tuple(s["channels"]), float(s.get("l_bits", 8000.0)),
                        s.get("tau_bar"), bool(s.get("mesh_point", False)))
                for s in document["stations"]]
    flows = []
    for f in document["flows"]:
        loss = f.get("loss")
        flows.append(Flow(
            f["id"], tuple(Hop(*h) for h in f["route"]), float(f.get("phy_rate", 11e6)),
            f.get("weight"), f.get("l_bits"), None if loss is None else tuple(loss),
            f.get("loss_scaling"),
        ))
    name = document.get("name", name)
    topo = MeshTopology(wlans, stations, flows, name)

    sim_doc = dict(document.get("sim", {}))
    aimd_doc = sim_doc.pop("aimd", {})
    aimd = None if aimd_doc is None else AimdOptions(**aimd_doc)
    sim = SimOptions(aimd=aimd, **sim_doc)
    if sim.cw_floor > sim.cw_ceil:
        raise ScenarioError(f"cw_floor {sim.cw_floor} exceeds cw_ceil {sim.cw_ceil}")
    solver = SolverOptions(**{k: v for k, v in solver_doc.items() if k != "p_bar"})
    return Scenario(name, topo, solver, sim, document, scenario_hash(document))


def load_scenario(source: Union[str, Path, dict]) -> Scenario:
    """Load a scenario from a dict, a file path, or the name of a bundled example."""
    if isinstance(source, dict):
        return parse_scenario(source)
    src = str(source)
    path = bundled_path(src) if src in BUNDLED else Path(src)
    try:
        document = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ScenarioError(f"scenario file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"scenario file {path} is not valid JSON: {exc}") from None
    return parse_scenario(document, Path(path).stem)
