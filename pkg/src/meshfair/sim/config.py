"""Simulation settings."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Dict, Mapping, Optional

from ..exceptions import DomainError
from ..scenario import AimdOptions, SimOptions


@dataclass
class SimConfig:
    """Run parameters. ``duration`` and ``warmup`` are in seconds; a finite
    ``max_slots`` additionally stops each channel after that many MAC slots."""

    seed: int = 1
    duration: float = 620.0
    warmup: float = 20.0
    window: float = 50.0
    queue_capacity: int = 50
    cw_init: int = 32
    cw_floor: int = 3
    cw_ceil: int = 1024
    aimd: Optional[AimdOptions] = field(default_factory=AimdOptions)
    max_slots: float = math.inf
    cw: Dict[str, float] = field(default_factory=dict)
    pidle_target: Dict[str, float] = field(default_factory=dict)
    buffer_size: int = 1 << 16

    def __post_init__(self):
        if self.queue_capacity < 1:
            raise DomainError(f"queue capacity must be at least 1, got {self.queue_capacity}")
        if not self.duration > 0 or not self.warmup >= 0 or not self.window > 0:
            raise DomainError("duration and window must be positive and warmup nonnegative")
        if self.warmup >= self.duration:
            raise DomainError(f"warmup {self.warmup} leaves nothing of duration {self.duration}")
        if not 2 < self.cw_floor <= self.cw_ceil:
            raise DomainError(f"need 2 < cw_floor <= cw_ceil, got {self.cw_floor}, {self.cw_ceil}")
        if not self.max_slots >= 1:
            raise DomainError("max_slots must be at least 1")
        if self.buffer_size < 16:
            raise DomainError("buffer_size too small")
        a = self.aimd
        if a is not None:
            if not a.alpha > 0 or not 0 < a.beta < 1 or not a.period > 0:
                raise DomainError(f"invalid AIMD parameters {a}")

    @classmethod
    def from_options(cls, options: SimOptions, wlan_config: Optional[Mapping] = None, **overrides) -> "SimConfig":
        """Build from scenario options and a per-WLAN configuration.

        With AIMD on, every station starts from ``cw_init``; with it off, from
        the configured CW of its WLAN.
        """
        cfg = cls(options.seed, options.duration, options.warmup, options.window,
                  options.queue_capacity, options.cw_init, options.cw_floor, options.cw_ceil,
                  options.aimd)
        if wlan_config:
            cfg.cw = {c: float(w.cw) for c, w in wlan_config.items()}
            cfg.pidle_target = {c: float(w.pidle_target) for c, w in wlan_config.items()}
        return replace(cfg, **overrides) if overrides else cfg
