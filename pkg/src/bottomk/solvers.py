"""Scalar root finding for the monotone equations used by the estimators."""

from __future__ import annotations

import math
from typing import Callable

from .errors import MonotonicityError

RTOL = 1e-9
MAXITER = 200


def bisect_monotone(fun: Callable[[float], float], lo: float, hi: float, *,
                    increasing: bool = False, rtol: float = RTOL,
                    maxiter: int = MAXITER, what: str = "equation") -> float:
    """Root of a monotone ``fun`` on [lo, hi] by bisection.

    The endpoint values must straddle zero in the direction given by
    ``increasing``; otherwise (or if an interior value falls outside the
    endpoint range) a :class:`MonotonicityError` is raised.
    """
    sign = 1.0 if increasing else -1.0
    flo = sign * fun(lo)
    fhi = sign * fun(hi)
    if math.isnan(flo) or math.isnan(fhi) or flo > 0 or fhi < 0:
        raise MonotonicityError(
            f"{what}: bracket [{lo!r}, {hi!r}] does not straddle a root of a "
            f"{'increasing' if increasing else 'decreasing'} function "
            f"(values {sign * flo!r}, {sign * fhi!r})")
    if flo == 0:
        return lo
    if fhi == 0:
        return hi
    for _ in range(maxiter):
        if hi - lo <= rtol * max(abs(lo), abs(hi), 1e-300):
            break
        mid = 0.5 * (lo + hi)
        fm = sign * fun(mid)
        if math.isnan(fm) or fm < flo or fm > fhi:
            raise MonotonicityError(f"{what}: value at {mid!r} breaks monotonicity")
        if fm == 0:
            return mid
        if fm < 0:
            lo, flo = mid, fm
        else:
            hi, fhi = mid, fm
    return 0.5 * (lo + hi)


def expand_upper(fun: Callable[[float], float], lo: float, hi: float, *,
                 increasing: bool = False, limit: int = 200) -> float:
    """Double (hi - lo) until fun(hi) has the sign past the root."""
    sign = 1.0 if increasing else -1.0
    width = hi - lo
    for _ in range(limit):
        if sign * fun(hi) >= 0:
            return hi
        width *= 2.0
        hi = lo + width
    raise MonotonicityError("could not bracket root from above")
