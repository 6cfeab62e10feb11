"""Boundary and feasibility analysis of a single WLAN's rate region."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Optional

import numpy as np

from ._numeric import bisect_root, expand_bracket
from .exceptions import DomainError, SolverError
from .model import X_MAX, OperatingPoint, WlanParams, denominator_x

MAX_NEWTON = 500

PBAR_CONSTRAINT = "pbar_constraint"
TURNING_POINT = "turning_point"


def pbar_max(a):
    """Largest idle cap for which the cap binds before the turning point on any ray."""
    if not 0 < a <= 1:
        raise DomainError(f"a must lie in (0, 1], got {a}")
    return 1.0 / (1.0 + a - math.sqrt(2.0 * a))


def a_from_pbar(p_bar):
    """Inverse of :func:`pbar_max` on its increasing branch ``a`` in ``(0, 1/2]``."""
    inv = 1.0 / p_bar
    lo = 1.0 / pbar_max(0.5)
    if not lo <= inv < 1.0:
        raise DomainError(f"1/p_bar must lie in [{lo}, 1), got {inv}")
    # sqrt(a)^2 - sqrt(2) sqrt(a) + (1 - 1/p_bar) = 0, smaller root
    disc = 2.0 - 4.0 * (1.0 - inv)
    u = (math.sqrt(2.0) - math.sqrt(disc)) / 2.0
    return u * u


def turning_point_residual(tau, a):
    """``sum(tau) + (1 - a) * prod(1 - tau) - 1``; zero on the unconstrained boundary."""
    t = np.atleast_1d(np.asarray(tau, dtype=float))
    return float(np.sum(t) + (1.0 - a) * np.prod(1.0 - t) - 1.0)


@dataclass
class RayQuery:
    y_dir: np.ndarray
    burst: np.ndarray
    params: WlanParams

    def __post_init__(self):
        y = np.asarray(self.y_dir, dtype=float)
        if y.ndim != 1 or np.any(np.isnan(y)) or np.any(y < 0):
            raise DomainError(f"ray direction must be a nonnegative vector, got {self.y_dir}")
        total = y.sum()
        if total <= 0:
            raise DomainError("ray direction is zero")
        self.y_dir = y / total
        n = np.ones_like(y) if self.burst is None else np.asarray(self.burst, dtype=float)
        if n.shape != y.shape or np.any(n < 1):
            raise DomainError(f"burst sizes must be >= 1 and match the direction, got {self.burst}")
        self.burst = n


@dataclass
class BoundaryPoint:
    lambda_star: float
    x_star: np.ndarray
    binding: str
    throughput: np.ndarray
    residual: float

    @property
    def total(self) -> float:
        return float(self.throughput.sum())


def boundary_along_ray(q: RayQuery, rtol=1e-13) -> BoundaryPoint:
    """Point where the ray ``x = lambda * y / N`` leaves the (capped) rate region."""
    a = q.params.a
    p_bar = q.params.pbar
    step = q.y_dir / q.burst
    lam_cap = X_MAX / step.max()

    def log_prod(lam):
        return float(np.sum(np.log1p(lam * step)))

    if math.isinf(p_bar):
        lam_p = math.inf
    else:
        target = math.log(p_bar)
        hi = expand_bracket(lambda lam: log_prod(lam) >= target, 1e-6, lam_cap)
        lam_p = math.inf if math.isinf(hi) else bisect_root(lambda lam: log_prod(lam) - target, 0.0, hi, rtol)

    def resid(lam):
        x = lam * step
        return turning_point_residual(x / (1.0 + x), a)

    hi = expand_bracket(lambda lam: resid(lam) > 0, 1e-6, lam_cap)
    lam_t = math.inf if math.isinf(hi) else bisect_root(resid, 0.0, hi, rtol)

    if lam_p <= lam_t:
        lam, binding = lam_p, PBAR_CONSTRAINT
    else:
        lam, binding = lam_t, TURNING_POINT
    if math.isinf(lam):
        raise DomainError("ray is unbounded: single-station direction with no idle cap")
    x = lam * step
    s = q.burst * x / denominator_x(x, q.burst, a)
    return BoundaryPoint(lam, x, binding, s, resid(lam))


def efficiency_ratio(n, a):
    """Throughput on the ``pbar_max(a)`` cap over the unconstrained maximum,
    for ``n`` symmetric saturated stations with one frame per burst."""
    if int(n) != n or n < 1:
        raise DomainError(f"n must be a positive integer, got {n}")
    n = int(n)
    ones = np.ones(n)
    capped = boundary_along_ray(RayQuery(ones, ones, WlanParams("c", a, 1.0, pbar_max(a))))
    if n == 1:
        # tau = 1 is not an operating point; the supremum is one frame per T_c
        return capped.total
    free = boundary_along_ray(RayQuery(ones, ones, WlanParams("c", a, 1.0, math.inf)))
    return capped.total / free.total


def minimal_operating_point(a, share_max, share_sum, pinned_x=(), pinned_n=(),
                            p_bar=math.inf, x_cap=math.inf, cap_rtol=0.0):
    """Smallest attempt rates serving the given loads, or ``None`` if infeasible.

    Balanced stations must satisfy ``x_k / X >= share_max[k]`` and
    ``N_k x_k / X >= share_sum[k]``; pinned stations transmit at fixed
    ``(x, N)``. The minimum has every balanced station on ``x_k = X m_k`` and
    ``N_k = share_sum / m_k``, which reduces the problem to the smallest root
    of a convex scalar function of ``X``.

    Returns ``(X, x, n)`` for the balanced stations.
    """
    m = np.asarray(share_max, dtype=float)
    sg = np.asarray(share_sum, dtype=float)
    px = np.asarray(pinned_x, dtype=float)
    pn = np.asarray(pinned_n, dtype=float)
    q_pin = float(np.prod(1.0 + px)) if px.size else 1.0
    const = a + (float(np.dot(pn - 1.0, px)) if px.size else 0.0) - 1.0
    slope = float(np.sum(sg - m)) - 1.0

    def g(X):
        return const + q_pin * float(np.prod(1.0 + X * m)) + X * slope

    def dg(X):
        f = 1.0 + X * m
        return q_pin * float(np.prod(f)) * float(np.sum(m / f)) + slope

    if np.all(m == 0):
        if slope >= 0:
            return None
        X = g(0.0) / -slope
    else:
        # Newton from X = 0: g is convex, so the iterates increase monotonically
        # to the smallest root, or step past the minimizer of g when no root exists
        X = 0.0
        for _ in range(MAX_NEWTON):
            gv = g(X)
            if gv <= 0.0:
                break
            d = dg(X)
            if d >= 0.0:
                return None
            step = gv / -d
            X += step
            if step <= 1e-16 * X:
                break
        else:
            raise SolverError("minimal operating point: Newton iteration did not converge")
    x = X * m
    slack = 1.0 + cap_rtol
    if q_pin * float(np.prod(1.0 + x)) > p_bar * slack:
        return None
    if x.size and np.any(x > np.minimum(x_cap, X_MAX) * slack):
        return None
    n = np.divide(sg, m, out=np.ones_like(sg), where=m > 0)
    return X, x, np.maximum(n, 1.0)


def finite_load_feasible(wlan: WlanParams, offered: Mapping, saturated=(), n_bar: Optional[Mapping] = None,
                         y: Optional[Mapping] = None, l_bits: Optional[Mapping] = None) -> Optional[OperatingPoint]:
    """Operating point serving ``offered`` at the unsaturated stations, or ``None``.

    Rates are normalized (``L / T_c = 1``) unless ``l_bits`` gives per-station
    payloads, in which case they are bits/second. Saturated stations transmit at
    their design rate ``y`` with full bursts. Among all solutions of the balance
    equations the one with the smallest attempt rates is returned.
    """
    n_bar = n_bar or {}
    y = y or {}
    saturated = list(saturated)
    unsat = [k for k in offered if k not in saturated]
    shares = []
    for k in unsat:
        s = float(offered[k])
        if s < 0 or math.isnan(s):
            raise DomainError(f"offered load of {k} must be nonnegative, got {s}")
        scale = wlan.t_c / float(l_bits[k]) if l_bits else 1.0
        shares.append(s * scale)
    shares = np.array(shares, dtype=float)
    caps = np.array([float(n_bar.get(k, 1)) for k in unsat])
    m = shares / caps if unsat else np.zeros(0)

    px, pn = [], []
    for k in saturated:
        yk = float(y.get(k, wlan.y))
        if not math.isfinite(yk):
            raise DomainError(f"saturated station {k} needs a finite design rate y")
        px.append(yk)
        pn.append(float(n_bar.get(k, 1)))

    x_cap = np.array([float(y.get(k, wlan.y)) for k in unsat])
    res = minimal_operating_point(wlan.a, m, shares, px, pn, wlan.pbar, x_cap=x_cap)
    if res is None:
        return None
    _, x, n = res
    c = wlan.channel_id
    op = OperatingPoint()
    for k, xv, nv, cap in zip(unsat, x, n, caps):
        op.x[(k, c)] = float(xv)
        op.n[(k, c)] = float(min(nv, cap)) if xv > 0 else 1.0
    for k, xv, nv in zip(saturated, px, pn):
        op.x[(k, c)] = xv
        op.n[(k, c)] = nv
    return op
