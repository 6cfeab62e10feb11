"""Closed-form throughput and airtime of one 802.11 WLAN with TXOP bursting.

All functions work on a single WLAN: ``x`` holds the attempt rates
``tau / (1 - tau)`` of its stations and ``n`` their mean burst sizes in frames.
Outputs are in normalized units (``L / T_c = 1``) unless ``l_bits`` and ``t_c``
are passed explicitly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np

from .exceptions import DomainError

#: Upper end of the attempt-rate box used by every numerical routine.
X_MAX = 1e6
#: Above this many stations the product in the denominator is formed in log space.
LOG_PRODUCT_THRESHOLD = 30


@dataclass(frozen=True)
class WlanParams:
    """Per-channel MAC constants."""

    channel_id: str
    sigma: float
    t_c: float
    p_bar: Optional[float] = None
    y: float = math.inf

    def __post_init__(self):
        if not (self.sigma > 0 and math.isfinite(self.sigma)):
            raise DomainError(f"sigma must be positive, got {self.sigma}")
        if not (self.t_c > 0 and math.isfinite(self.t_c)):
            raise DomainError(f"t_c must be positive, got {self.t_c}")
        if self.p_bar is not None and not self.p_bar >= 1:
            raise DomainError(f"p_bar must be >= 1, got {self.p_bar}")
        if not self.y >= 0:
            raise DomainError(f"y must be >= 0, got {self.y}")

    @property
    def a(self) -> float:
        return self.sigma / self.t_c

    @property
    def pbar(self) -> float:
        """Idle-probability cap; defaults to the largest value that keeps the
        cap binding on every ray."""
        if self.p_bar is not None:
            return self.p_bar
        from .region import pbar_max

        return pbar_max(min(self.a, 1.0))


@dataclass(frozen=True)
class StationParams:
    station_id: str
    l_bits: float = 8000.0
    n_bar: int = 1
    tau_bar: Optional[float] = None

    def __post_init__(self):
        if not self.l_bits > 0:
            raise DomainError(f"l_bits must be positive, got {self.l_bits}")
        if int(self.n_bar) != self.n_bar or self.n_bar < 1:
            raise DomainError(f"n_bar must be an integer >= 1, got {self.n_bar}")
        if self.tau_bar is not None and not 0 <= self.tau_bar < 1:
            raise DomainError(f"tau_bar must lie in [0, 1), got {self.tau_bar}")

    @property
    def y(self) -> float:
        if self.tau_bar is None:
            return math.inf
        return tau_to_x(self.tau_bar)


@dataclass
class OperatingPoint:
    """Attempt rates and burst sizes keyed by ``(station, channel)``."""

    x: dict = field(default_factory=dict)
    n: dict = field(default_factory=dict)

    def channel(self, channel_id):
        """Keys, attempt rates and burst sizes of the radios on one channel."""
        keys = sorted(k for k in self.x if k[1] == channel_id)
        x = np.array([self.x[k] for k in keys], dtype=float)
        n = np.array([self.n.get(k, 1.0) for k in keys], dtype=float)
        return keys, x, n

    def check(self, wlans: Mapping[str, WlanParams], n_bar: Mapping, rtol=1e-9):
        """List of invariant violations (empty when the point is admissible)."""
        problems = []
        for key, xv in self.x.items():
            y = wlans[key[1]].y
            if xv < 0:
                problems.append(f"{key}: x={xv} < 0")
            if xv > y * (1 + rtol):
                problems.append(f"{key}: x={xv} exceeds y={y}")
            nv = self.n.get(key, 1.0)
            cap = n_bar.get(key, 1)
            if nv < 1 - rtol or nv > cap * (1 + rtol):
                problems.append(f"{key}: n={nv} outside [1, {cap}]")
        return problems


@dataclass
class LogCoords:
    """Log-domain coordinates: ``y_log = log x``, ``eta = log n``, optional ``mu``."""

    y_log: dict
    eta: dict
    mu: Optional[dict] = None

    @classmethod
    def from_point(cls, op: OperatingPoint) -> "LogCoords":
        with np.errstate(divide="ignore"):
            y_log = {k: float(np.log(v)) for k, v in op.x.items()}
        eta = {k: float(np.log(op.n.get(k, 1.0))) for k in op.x}
        return cls(y_log=y_log, eta=eta)

    def to_point(self) -> OperatingPoint:
        return OperatingPoint(
            x={k: math.exp(v) for k, v in self.y_log.items()},
            n={k: math.exp(v) for k, v in self.eta.items()},
        )


def _as_prob(tau):
    t = np.asarray(tau, dtype=float)
    if np.any(np.isnan(t)) or np.any(t < 0) or np.any(t >= 1):
        raise DomainError(f"attempt probability must lie in [0, 1), got {tau}")
    return t


def _as_rate(x, name="x"):
    v = np.asarray(x, dtype=float)
    if np.any(np.isnan(v)) or np.any(v < 0):
        raise DomainError(f"{name} must be nonnegative, got {x}")
    return v


def _scalar_or_array(v):
    return float(v) if np.ndim(v) == 0 else v


def tau_to_x(tau):
    t = _as_prob(tau)
    return _scalar_or_array(t / (1.0 - t))


def x_to_tau(x):
    v = _as_rate(x)
    with np.errstate(invalid="ignore"):
        t = np.where(np.isinf(v), 1.0, v / (1.0 + v))
    return _scalar_or_array(t)


def _prod1p_minus1(x):
    """``prod(1 + x) - 1`` for a 1-D array."""
    if x.size > LOG_PRODUCT_THRESHOLD:
        return math.expm1(float(np.sum(np.log1p(x))))
    return float(np.prod(1.0 + x)) - 1.0


def _pair(x, n):
    x = np.atleast_1d(_as_rate(x))
    if n is None:
        n = np.ones_like(x)
    n = np.atleast_1d(np.asarray(n, dtype=float))
    if n.shape != x.shape:
        raise DomainError(f"x and n shapes differ: {x.shape} vs {n.shape}")
    if np.any(np.isnan(n)) or np.any(n <= 0):
        raise DomainError(f"burst sizes must be positive, got {n}")
    return x, n


def denominator_x(x, n=None, a=0.01):
    """Mean MAC-slot duration over ``T_c``, times ``1 / P_idle``.

    ``a + sum((n_k - 1) x_k) + prod(1 + x_k) - 1``; equals ``a`` when no
    station attempts.
    """
    if not a > 0:
        raise DomainError(f"a must be positive, got {a}")
    x, n = _pair(x, n)
    if x.size == 0:
        return float(a)
    return float(a + np.dot(n - 1.0, x) + _prod1p_minus1(x))


def station_throughput(x, n=None, a=0.01, i=None, l_bits=1.0, t_c=1.0):
    """Per-station throughput ``n_i x_i / X * L_i / T_c``.

    ``l_bits`` may be a scalar or one payload size per station. Returns the
    full vector, or element ``i`` when given.
    """
    x, n = _pair(x, n)
    big = np.isinf(x)
    if np.any(big):
        # tau = 1 stations: only meaningful alone; the limit is one burst per slot
        if big.sum() > 1:
            s = np.zeros_like(x)
        else:
            s = np.where(big, 1.0, 0.0)
    else:
        s = n * x / denominator_x(x, n, a)
    s = s * np.asarray(l_bits, dtype=float) / t_c
    return float(s[i]) if i is not None else s


def station_airtime(x, n=None, a=0.01, i=None):
    """Fraction of time spent on successful transmissions, ``n_i x_i / X``."""
    return station_throughput(x, n, a, i=i)


def slot_probabilities(x):
    """``(p_idle, p_succ, p_coll)`` of one MAC slot; ``p_coll`` by complement."""
    x = np.atleast_1d(_as_rate(x))
    if x.size == 0:
        return 1.0, 0.0, 0.0
    if x.size > LOG_PRODUCT_THRESHOLD:
        p_idle = math.exp(-float(np.sum(np.log1p(x))))
    else:
        p_idle = 1.0 / float(np.prod(1.0 + x))
    p_succ = float(np.sum(x)) * p_idle
    return p_idle, p_succ, 1.0 - p_idle - p_succ


def log_denominator(y_log, eta, a):
    """``log X`` as a function of log attempt rates and log burst sizes."""
    y_log = np.atleast_1d(np.asarray(y_log, dtype=float))
    eta = np.atleast_1d(np.asarray(eta, dtype=float))
    x = np.exp(y_log)
    # sum(n x) - sum(x) kept as a sum of nonnegative pieces for accuracy
    burst = float(np.dot(np.expm1(eta), x))
    return math.log(a + burst + _prod1p_minus1(x))


def log_throughput(y_log, eta, a, i=None):
    """``log s_i`` (normalized) in log coordinates; concave in ``(y_log, eta)``."""
    y_log = np.atleast_1d(np.asarray(y_log, dtype=float))
    eta = np.atleast_1d(np.asarray(eta, dtype=float))
    v = y_log + eta - log_denominator(y_log, eta, a)
    return float(v[i]) if i is not None else v


def burst_limit_throughput(weights, x, l_bits=1.0, t_c=1.0):
    """Limit of the throughput when every burst size is scaled to infinity."""
    w = np.atleast_1d(_as_rate(weights, "weights"))
    x = np.atleast_1d(_as_rate(x))
    total = float(np.dot(w, x))
    if total <= 0:
        raise DomainError("at least one station needs a positive attempt rate")
    return w * x / total * np.asarray(l_bits, dtype=float) / t_c
