"""Estimator-style wrappers around the allocator and the simulator.

Both follow the scikit-learn conventions: constructor arguments are stored
untouched, ``fit`` does the work and sets trailing-underscore attributes, and
``predict`` returns one rate per flow.
"""
from __future__ import annotations

from typing import Mapping, Optional

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .exceptions import DomainError
from .scenario import AimdOptions, Scenario
from .sim import SimConfig, run_many
from .topology import MeshTopology
from .waterfill import METHODS, MODES, PROBE_RTOL, audit_theorem3, configure_network, waterfill


def _topology(X):
    if isinstance(X, Scenario):
        return X.topology
    if isinstance(X, MeshTopology):
        return X
    raise DomainError(f"expected a MeshTopology or Scenario, got {type(X).__name__}")


class MaxMinAllocator(BaseEstimator):
    """Max-min fair flow rates of a mesh topology.

    >>> alloc = MaxMinAllocator(mode="time").fit(topology)   # doctest: +SKIP
    >>> alloc.predict()                                       # doctest: +SKIP
    """

    def __init__(self, mode="throughput", method="exact", rtol=PROBE_RTOL):
        self.mode = mode
        self.method = method
        self.rtol = rtol

    def fit(self, X, y=None):
        if self.mode not in MODES:
            raise DomainError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.method not in METHODS:
            raise DomainError(f"method must be one of {METHODS}, got {self.method!r}")
        if not 0 < self.rtol < 1:
            raise DomainError(f"rtol must lie in (0, 1), got {self.rtol}")
        topo = _topology(X)
        self.result_ = waterfill(topo, self.mode, self.method, self.rtol)
        self.flow_ids_ = list(topo.flow_ids)
        self.levels_ = np.array(self.result_.levels)
        self.wlan_config_ = configure_network(self.result_)
        self.audit_ = audit_theorem3(self.result_, topo)
        return self

    def predict(self, X=None):
        """Rates in bit/s, in flow order of the fitted topology."""
        check_is_fitted(self, "result_")
        return np.array([self.result_.rates[f] for f in self.flow_ids_])


class MeshSimulator(BaseEstimator):
    """Slot-level simulation of a topology under a per-WLAN configuration.

    ``fit(topology, wlan_config)`` takes the configuration from a fitted
    :class:`MaxMinAllocator`, a mapping of ``WlanConfig``, or ``None`` (then a
    fresh allocator is fitted first). Several seeds run in parallel.
    """

    def __init__(self, seeds=(1,), duration=620.0, warmup=20.0, window=50.0, queue_capacity=50,
                 aimd=True, alpha=4.0, beta=0.25, period=1.0, literal=False, cw_init=32,
                 cw_floor=3, cw_ceil=1024, mode="throughput", workers=None):
        self.seeds = seeds
        self.duration = duration
        self.warmup = warmup
        self.window = window
        self.queue_capacity = queue_capacity
        self.aimd = aimd
        self.alpha = alpha
        self.beta = beta
        self.period = period
        self.literal = literal
        self.cw_init = cw_init
        self.cw_floor = cw_floor
        self.cw_ceil = cw_ceil
        self.mode = mode
        self.workers = workers

    def _config(self):
        aimd = AimdOptions(self.alpha, self.beta, self.period, self.literal) if self.aimd else None
        return SimConfig(seed=1, duration=self.duration, warmup=self.warmup, window=self.window,
                         queue_capacity=self.queue_capacity, cw_init=self.cw_init,
                         cw_floor=self.cw_floor, cw_ceil=self.cw_ceil, aimd=aimd)

    def fit(self, X, y=None):
        topo = _topology(X)
        seeds = [int(s) for s in np.atleast_1d(self.seeds)]
        if not seeds:
            raise DomainError("at least one seed is required")
        if isinstance(y, MaxMinAllocator):
            check_is_fitted(y, "result_")
            config: Optional[Mapping] = y.wlan_config_
        elif y is None:
            config = MaxMinAllocator(mode=self.mode).fit(topo).wlan_config_
        else:
            config = y
        self.wlan_config_ = config
        self.measurements_ = run_many(topo, config, self._config(), seeds, self.workers)
        self.flow_ids_ = list(topo.flow_ids)
        return self

    def predict(self, X=None):
        """Long-run mean rate of each flow in bit/s, averaged over seeds."""
        check_is_fitted(self, "measurements_")
        per_seed = [[m.throughput()[f] for f in self.flow_ids_] for m in self.measurements_]
        return np.mean(per_seed, axis=0)
