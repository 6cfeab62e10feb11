"""Bracketed bisection helpers.

Both routines are plain bisection: every structure they are applied to in this
package is monotone on the bracket, so derivative-free halving is sufficient and
fully deterministic.
"""
import math

from .exceptions import SolverError

MAX_BISECT = 400


def bisect_root(f, lo, hi, rtol=1e-13, atol=0.0):
    """Root of ``f`` on ``[lo, hi]`` where ``f(lo)`` and ``f(hi)`` differ in sign."""
    flo = f(lo)
    fhi = f(hi)
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if (flo > 0) == (fhi > 0):
        raise SolverError(f"no sign change on [{lo}, {hi}]: f={flo}, {fhi}")
    for _ in range(MAX_BISECT):
        mid = 0.5 * (lo + hi)
        if hi - lo <= max(rtol * abs(mid), atol) or mid in (lo, hi):
            return mid
        fm = f(mid)
        if fm == 0.0:
            return mid
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def bisect_predicate(ok, lo, hi, rtol=1e-14):
    """Largest ``t`` in ``[lo, hi]`` with ``ok(t)`` true, for a predicate that is
    true at ``lo``, false at ``hi`` and switches exactly once.

    Returns the last point known to satisfy the predicate.
    """
    for _ in range(MAX_BISECT):
        mid = 0.5 * (lo + hi)
        if hi - lo <= rtol * abs(hi) or mid in (lo, hi):
            break
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return lo


def expand_bracket(f_positive, start=1.0, limit=1e300):
    """Double ``start`` until ``f_positive`` returns True; ``math.inf`` if never."""
    hi = start
    while not f_positive(hi):
        hi *= 2.0
        if hi > limit:
            return math.inf
    return hi
