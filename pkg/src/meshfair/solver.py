"""Log-barrier solver for small convex programs in log coordinates.

A :class:`LogProgram` maximizes one variable subject to constraints
``sum(terms) <= 0`` where every term is convex by construction:

* :class:`Affine` -- ``g . v + h``
* :class:`LogSumExp` -- ``log sum_j exp(a_j . v + b_j)``
* :class:`Softplus` -- ``sum_j log(1 + exp(a_j . v + b_j))``
* :class:`LogDenominator` -- ``log X`` of one WLAN in log coordinates. ``X`` is a
  posynomial (the singleton terms of ``prod(1 + x) - 1`` cancel against
  ``-sum(x)``), so this is a log-sum-exp of affine functions evaluated in
  factored form instead of over ``2**n`` monomials.

Each barrier stage is minimized with BFGS and a backtracking line search that
keeps iterates strictly feasible.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .exceptions import DomainError, SolverError

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
MAX_ITER = "max_iter"

CONSTRAINT_TOL = 1e-7
ACTIVE_TOL = 1e-6


def _rows(rows):
    """Normalize ``[(coef_dict, const), ...]``."""
    return [(dict(c), float(b)) for c, b in rows]


class Term:
    """Convex function of the program variables."""

    def variables(self) -> set:
        raise NotImplementedError

    def bind(self, index: Dict[str, int]) -> None:
        raise NotImplementedError

    def value_grad(self, v: np.ndarray) -> Tuple[float, np.ndarray]:
        raise NotImplementedError

    def value(self, v):
        return self.value_grad(v)[0]


class Affine(Term):
    def __init__(self, coef: Optional[dict] = None, const: float = 0.0):
        self.coef = dict(coef or {})
        self.const = float(const)

    def variables(self):
        return set(self.coef)

    def bind(self, index):
        self._idx = np.array([index[k] for k in self.coef], dtype=int)
        self._c = np.array(list(self.coef.values()), dtype=float)
        self._n = len(index)

    def value_grad(self, v):
        g = np.zeros(self._n)
        np.add.at(g, self._idx, self._c)
        return float(self._c @ v[self._idx]) + self.const, g


class _RowTerm(Term):
    def __init__(self, rows: Sequence):
        self.rows = _rows(rows)
        if not self.rows:
            raise DomainError(f"{type(self).__name__} needs at least one row")

    def variables(self):
        out = set()
        for c, _ in self.rows:
            out |= set(c)
        return out

    def bind(self, index):
        n = len(index)
        self._A = np.zeros((len(self.rows), n))
        for r, (c, _) in enumerate(self.rows):
            for k, val in c.items():
                self._A[r, index[k]] += val
        self._b = np.array([b for _, b in self.rows])

    def _z(self, v):
        return self._A @ v + self._b


class LogSumExp(_RowTerm):
    def value_grad(self, v):
        z = self._z(v)
        top = z.max()
        w = np.exp(z - top)
        tot = w.sum()
        return float(top + math.log(tot)), (w / tot) @ self._A


class Softplus(_RowTerm):
    def value_grad(self, v):
        z = self._z(v)
        val = float(np.sum(np.logaddexp(0.0, z)))
        sig = 0.5 * (1.0 + np.tanh(0.5 * z))
        return val, sig @ self._A


class LogDenominator(Term):
    """``log(a + sum((N_k - 1) x_k) + prod(1 + x_k) - 1)`` with ``x = exp(y)``,
    ``N = exp(eta)``. ``eta`` entries may be ``None`` for stations with ``N = 1``."""

    def __init__(self, y_vars: Sequence[str], eta_vars: Sequence[Optional[str]], a: float):
        if len(y_vars) != len(eta_vars):
            raise DomainError("y_vars and eta_vars must have equal length")
        if not a > 0:
            raise DomainError(f"a must be positive, got {a}")
        self.y_vars = list(y_vars)
        self.eta_vars = list(eta_vars)
        self.a = float(a)

    def variables(self):
        return set(self.y_vars) | {e for e in self.eta_vars if e is not None}

    def bind(self, index):
        self._n = len(index)
        self._yi = np.array([index[k] for k in self.y_vars], dtype=int)
        self._has_eta = np.array([e is not None for e in self.eta_vars])
        self._ei = np.array([index[e] if e is not None else 0 for e in self.eta_vars], dtype=int)

    def value_grad(self, v):
        x = np.exp(v[self._yi])
        eta = np.where(self._has_eta, v[self._ei], 0.0)
        nm1 = np.expm1(eta)
        log1p = np.log1p(x)
        prod = math.exp(float(log1p.sum()))
        X = self.a + float(nm1 @ x) + math.expm1(float(log1p.sum()))
        g = np.zeros(self._n)
        # d/dy_k: x_k (N_k - 1) + x_k prod / (1 + x_k);  d/deta_k: N_k x_k
        np.add.at(g, self._yi, x * nm1 + x * prod / (1.0 + x))
        np.add.at(g, self._ei[self._has_eta], ((nm1 + 1.0) * x)[self._has_eta])
        return math.log(X), g / X


@dataclass
class Constraint:
    """``sum(terms) <= 0``."""

    terms: List[Term]
    name: str = ""
    form: str = ""

    def variables(self):
        out = set()
        for t in self.terms:
            out |= t.variables()
        return out

    def value_grad(self, v):
        f = 0.0
        g = None
        for t in self.terms:
            tv, tg = t.value_grad(v)
            f += tv
            g = tg if g is None else g + tg
        return f, g


@dataclass
class LogProgram:
    variables: Dict[str, Tuple[float, float]]
    constraints: List[Constraint]
    objective: Optional[str] = None
    start: Optional[Dict[str, float]] = None

    def __post_init__(self):
        self.names = list(self.variables)
        self.index = {k: i for i, k in enumerate(self.names)}
        for k, (lo, hi) in self.variables.items():
            if math.isnan(lo) or math.isnan(hi) or not lo <= hi:
                raise DomainError(f"variable {k} has an empty box [{lo}, {hi}]")
        if self.objective is not None and self.objective not in self.index:
            raise DomainError(f"objective {self.objective} is not a variable")
        for i, c in enumerate(self.constraints):
            if not c.name:
                c.name = f"c{i}"
            missing = c.variables() - set(self.index)
            if missing:
                raise DomainError(f"constraint {c.name} uses unknown variables {sorted(missing)}")
            for t in c.terms:
                t.bind(self.index)
        self.lo = np.array([self.variables[k][0] for k in self.names], dtype=float)
        self.hi = np.array([self.variables[k][1] for k in self.names], dtype=float)

    @property
    def n(self):
        return len(self.names)

    def constraint_values(self, v):
        return np.array([c.value_grad(v)[0] for c in self.constraints])

    def box_center(self):
        lo = np.where(np.isfinite(self.lo), self.lo, np.minimum(self.hi - 1.0, 0.0))
        hi = np.where(np.isfinite(self.hi), self.hi, np.maximum(self.lo + 1.0, 0.0))
        lo = np.where(np.isfinite(lo), lo, 0.0)
        hi = np.where(np.isfinite(hi), hi, 0.0)
        return 0.5 * (lo + hi)

    def initial_point(self):
        v = self.box_center()
        if self.start:
            for k, val in self.start.items():
                v[self.index[k]] = val
        # pull strictly inside the box
        width = self.hi - self.lo
        pad = np.where(np.isfinite(width), 1e-3 * width, 1e-3)
        inside = np.clip(v, self.lo + pad, self.hi - pad)
        return np.where(width > 0, inside, self.lo)

    def to_dict(self, v):
        return {k: float(v[i]) for i, k in enumerate(self.names)}


@dataclass
class Solution:
    values: Dict[str, float]
    status: str
    kkt_residual: float
    active_set: List[str] = field(default_factory=list)
    certificate: Optional[dict] = None
    iterations: int = 0
    trace: List[Tuple[int, float, float]] = field(default_factory=list)

    @property
    def ok(self):
        return self.status == OPTIMAL


def _check_finite(prog):
    for c in prog.constraints:
        for t in c.terms:
            for arr in (getattr(t, "_A", None), getattr(t, "_b", None), getattr(t, "_c", None)):
                if arr is not None and not np.all(np.isfinite(arr)):
                    raise DomainError(f"constraint {c.name} has non-finite data")
            if isinstance(t, Affine) and not math.isfinite(t.const):
                raise DomainError(f"constraint {c.name} has a non-finite constant")


def _bfgs(fun, z0, max_iter, gtol=1e-10):
    """Minimize a barrier function that returns ``inf`` outside its domain."""
    z = z0.copy()
    f, g = fun(z)
    n = z.size
    H = np.eye(n)
    it = 0
    for it in range(1, max_iter + 1):
        gn = float(np.max(np.abs(g))) if n else 0.0
        if gn <= gtol:
            return z, f, g, it, True
        d = -H @ g
        slope = float(g @ d)
        if slope >= 0:
            H = np.eye(n)
            d = -g
            slope = float(g @ d)
        step = 1.0
        accepted = False
        for _ in range(80):
            zn = z + step * d
            fn, gn_vec = fun(zn)
            if fn <= f + 1e-4 * step * slope:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            # no descent possible at working precision
            return z, f, g, it, True
        s = zn - z
        yv = gn_vec - g
        sy = float(s @ yv)
        if abs(f - fn) <= 1e-15 * max(1.0, abs(f)) and np.max(np.abs(s)) <= 1e-14 * max(1.0, np.max(np.abs(z))):
            z, f, g = zn, fn, gn_vec
            return z, f, g, it, True
        z, f, g = zn, fn, gn_vec
        if sy > 1e-300:
            if it == 1:
                H = np.eye(n) * (sy / float(yv @ yv))
            rho = 1.0 / sy
            Hy = H @ yv
            H = H - rho * (np.outer(s, Hy) + np.outer(Hy, s)) + (rho * rho * float(yv @ Hy) + rho) * np.outer(s, s)
    return z, f, g, it, False


def _run_barrier(prog, v0, objective_vec, slack=False, mu0=1.0, mu_min=1e-8, factor=10.0,
                 max_iter=10_000, stop=None, trace=None):
    """Barrier stages from ``v0``. With ``slack`` the last coordinate of the
    working vector is the phase-one variable ``s`` and constraints read
    ``f_i(v) - s <= 0``."""
    n = prog.n
    width = prog.hi - prog.lo
    free = np.where(width > 0)[0]
    fixed_v = v0.copy()
    lo_f, hi_f = prog.lo[free], prog.hi[free]
    has_lo, has_hi = np.isfinite(lo_f), np.isfinite(hi_f)
    cons = prog.constraints

    def unpack(z):
        v = fixed_v.copy()
        v[free] = z[: free.size]
        return v, (z[-1] if slack else 0.0)

    mu = mu0
    z = np.concatenate([v0[free], [objective_vec]]) if slack else v0[free].copy()
    total = 0
    converged = True

    def make_fun(mu_):
        def fun(zz):
            v, s = unpack(zz)
            zf = zz[: free.size]
            if np.any(has_lo & (zf <= lo_f)) or np.any(has_hi & (zf >= hi_f)):
                return math.inf, None
            if slack and not s > -1.0:
                return math.inf, None
            grad_v = np.zeros(n)
            val = 0.0
            gs = 0.0
            for c in cons:
                f, g = c.value_grad(v)
                r = s - f if slack else -f
                if not r > 0:
                    return math.inf, None
                val -= mu_ * math.log(r)
                grad_v += (mu_ / r) * g
                gs -= mu_ / r
            dl = zf - lo_f
            dh = hi_f - zf
            val -= mu_ * float(np.sum(np.log(dl[has_lo])) + np.sum(np.log(dh[has_hi])))
            gz = grad_v[free] - mu_ * np.where(has_lo, 1.0 / np.where(has_lo, dl, 1.0), 0.0) \
                + mu_ * np.where(has_hi, 1.0 / np.where(has_hi, dh, 1.0), 0.0)
            if slack:
                # minimize s (phase one); s is bounded below by -1
                val += s - mu_ * math.log(s + 1.0)
                gs += 1.0 - mu_ / (s + 1.0)
                return val, np.concatenate([gz, [gs]])
            val -= float(v @ objective_vec)
            gz = gz - objective_vec[free]
            return val, gz
        return fun

    while True:
        fun = make_fun(mu)
        z, f, g, it, ok = _bfgs(fun, z, max_iter)
        total += it
        converged = converged and ok
        v, s = unpack(z)
        if trace is not None:
            trace.append((total, mu, float(s if slack else v @ objective_vec)))
        if stop is not None and stop(v, s):
            break
        if mu <= mu_min * (1 + 1e-12):
            break
        mu /= factor
    gnorm = float(np.max(np.abs(g))) if g is not None and g.size else 0.0
    return v, s, mu, gnorm, total, converged


def feasibility(prog: LogProgram, max_iter=10_000) -> Solution:
    """Strictly feasible point of ``prog`` (objective ignored), or an
    infeasibility certificate naming the most violated constraint."""
    _check_finite(prog)
    v0 = prog.initial_point()
    if not prog.constraints:
        return Solution(prog.to_dict(v0), OPTIMAL, 0.0, [])
    f0 = prog.constraint_values(v0)
    if np.all(f0 < 0):
        return Solution(prog.to_dict(v0), OPTIMAL, 0.0, _active(prog, v0))
    s0 = float(f0.max()) + 1.0
    trace = []
    v, s, mu, gnorm, total, ok = _run_barrier(
        prog, v0, s0, slack=True, max_iter=max_iter, trace=trace,
        stop=lambda v, s: s < -1e-6 and np.all(prog.constraint_values(v) < 0),
    )
    fv = prog.constraint_values(v)
    if np.all(fv < 0):
        return Solution(prog.to_dict(v), OPTIMAL, gnorm, _active(prog, v), iterations=total, trace=trace)
    worst = int(np.argmax(fv))
    cert = {"constraint": prog.constraints[worst].name, "value": float(fv[worst]), "min_max_violation": float(s)}
    status = INFEASIBLE if ok else MAX_ITER
    return Solution(prog.to_dict(v), status, gnorm, _active(prog, v), cert, total, trace)


def _active(prog, v):
    fv = prog.constraint_values(v)
    return [c.name for c, f in zip(prog.constraints, fv) if f >= -ACTIVE_TOL]


def solve(prog: LogProgram, mu0=1.0, mu_min=1e-8, factor=10.0, max_iter=10_000, audit=True) -> Solution:
    """Maximize ``prog.objective`` by the log-barrier method."""
    if prog.objective is None:
        return feasibility(prog, max_iter)
    _check_finite(prog)
    if audit:
        convexity_audit(prog)
    phase1 = feasibility(prog, max_iter)
    if phase1.status != OPTIMAL:
        return phase1
    v0 = np.array([phase1.values[k] for k in prog.names])
    obj = np.zeros(prog.n)
    obj[prog.index[prog.objective]] = 1.0
    if prog.hi[prog.index[prog.objective]] == prog.lo[prog.index[prog.objective]]:
        return Solution(phase1.values, OPTIMAL, 0.0, _active(prog, v0), iterations=phase1.iterations)
    trace = []
    v, _, mu, gnorm, total, ok = _run_barrier(prog, v0, obj, mu0=mu0, mu_min=mu_min, factor=factor,
                                              max_iter=max_iter, trace=trace)
    fv = prog.constraint_values(v)
    if np.any(fv > CONSTRAINT_TOL):
        raise SolverError("barrier iterate left the feasible set", program=prog)
    kkt = max(gnorm, mu * len(prog.constraints))
    status = OPTIMAL if ok else MAX_ITER
    return Solution(prog.to_dict(v), status, kkt, _active(prog, v), iterations=total + phase1.iterations,
                    trace=trace)


def convexity_audit(prog: LogProgram, n_checks=100, seed=0, tol=1e-9):
    """Random chord checks of every constraint function over the variable box.

    Raises :class:`SolverError` naming the first constraint that fails.
    """
    rng = np.random.default_rng(seed)
    lo = np.where(np.isfinite(prog.lo), prog.lo, -10.0)
    hi = np.where(np.isfinite(prog.hi), prog.hi, 10.0)
    lo, hi = np.minimum(lo, hi), np.maximum(lo, hi)
    for c in prog.constraints:
        for _ in range(n_checks):
            z1 = rng.uniform(lo, hi)
            z2 = rng.uniform(lo, hi)
            t = rng.uniform(0.05, 0.95)
            f1 = c.value_grad(z1)[0]
            f2 = c.value_grad(z2)[0]
            fm = c.value_grad(t * z1 + (1 - t) * z2)[0]
            chord = t * f1 + (1 - t) * f2
            if fm > chord + tol * max(1.0, abs(chord)):
                raise SolverError(f"constraint {c.name} failed a convexity chord check "
                                  f"({fm} > {chord})", program=prog)
    return True
