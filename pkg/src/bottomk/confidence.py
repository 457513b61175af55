"""Confidence bounds on total and subpopulation weight.

WS bounds rest on v(t, s_0..s_h): a sum of h+1 independent exponentials
with rates t - s_j, the distribution of a rank given the ordered prefix of
items before it.  A candidate weight x is in the lower (upper) bound
position when the observed rank is the delta (1-delta) quantile of
v(x, ...).  Two solvers are provided: a normal approximation using the
closed-form mean and variance, and the quantile method, which draws many
parametric samples, solves each for x and takes empirical quantiles of
the roots.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import stats

from . import kernels
from .errors import CapabilityError, DomainError, InputError
from .estimators import (_breakpoints, _integration_window, _log_integrand, _quad_pieces,
                         _require_family, _resolve_total, _split_prefix, _unseen)
from .predicates import PredicateLike, as_predicate
from .ranks import RankFamily, make_rng, open_uniform
from .sketch import BottomKSketch, KMinsSketch
from .solvers import bisect_monotone, expand_upper

DEFAULT_DRAWS = 200


@dataclass(frozen=True)
class ConfidenceInterval:
    lower: float
    upper: float
    delta: float
    method: str

    def __post_init__(self):
        if not (self.lower <= self.upper):
            raise ValueError(f"lower bound {self.lower} exceeds upper bound {self.upper}")

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def contains(self, value: float) -> bool:
        return bool(self.lower <= value <= self.upper)


@dataclass(frozen=True)
class SumExpSpec:
    t: float
    prefix_sums: tuple

    def __post_init__(self):
        s = np.asarray(self.prefix_sums, dtype=float)
        if s.size == 0 or np.any(np.diff(s) < 0):
            raise DomainError("prefix sums must be a nonempty nondecreasing sequence")
        if not self.t > s[-1]:
            raise DomainError(f"rate anchor t={self.t!r} must exceed the last prefix sum {s[-1]!r}")


def _check_delta(delta):
    if not (0 < delta < 0.5):
        raise DomainError(f"delta must be in (0, 0.5), got {delta!r}")


def z_value(delta: float) -> float:
    """alpha with P(Z <= alpha) = 1 - delta for a standard normal Z."""
    return float(stats.norm.ppf(1.0 - delta))


def sample_sum_exp(spec: SumExpSpec, uniforms: Sequence[float]) -> float:
    """One draw of v(t, s_0..s_h) from h+1 uniforms: sum -ln(v_j)/(t - s_j)."""
    s = np.asarray(spec.prefix_sums, dtype=float)
    u = np.asarray(uniforms, dtype=float)
    if u.shape != s.shape:
        raise DomainError(f"need {s.size} uniforms, got {u.size}")
    if np.any(u <= 0) or np.any(u >= 1):
        raise DomainError("uniforms must lie in (0, 1)")
    return float(np.sum(-np.log(u) / (spec.t - s)))


def _bisect_open(fun, lo, hi, rtol=1e-12, maxiter=300):
    for _ in range(maxiter):
        if hi - lo <= rtol * max(abs(lo), abs(hi), 1e-300):
            break
        mid = 0.5 * (lo + hi)
        if fun(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def solve_normal_approx(prefix_sums, tau: float, delta: float, side: str) -> Optional[float]:
    """x with E[v] + alpha sd[v] = tau (upper) or E[v] - alpha sd[v] = tau (lower).

    v = v(x, s_0..s_h).  The upper-side function is decreasing in x and
    always has a root.  The lower-side one can rise and then fall; the
    largest root is returned, or None if there is none above s_h.
    """
    _check_delta(delta)
    if not tau > 0:
        raise DomainError(f"tau must be positive, got {tau!r}")
    s = np.asarray(prefix_sums, dtype=float)
    top = s[-1]
    n = s.size
    alpha = z_value(delta)

    def moments(x):
        inv = 1.0 / (x - s)
        return inv.sum(), math.sqrt(float(np.sum(inv * inv)))

    if side == "upper":
        def fun(x):
            m, sd = moments(x)
            return m + alpha * sd - tau
        hi = top + n * (1.0 + alpha) / tau
        return _bisect_open(fun, top, hi)
    if side != "lower":
        raise DomainError(f"side must be 'lower' or 'upper', got {side!r}")

    def fun(x):
        m, sd = moments(x)
        return m - alpha * sd - tau

    scale = n / tau
    grid = top + scale * np.logspace(-12, 6, 721)
    inv = 1.0 / (grid[:, None] - s[None, :])
    vals = inv.sum(axis=1) - alpha * np.sqrt((inv * inv).sum(axis=1)) - tau
    pos = np.flatnonzero(vals > 0)
    if pos.size == 0:
        return None
    j = pos[-1]
    if j == grid.size - 1:  # pragma: no cover - the function tends to -tau
        raise DomainError("lower normal-approximation root beyond search range")
    return _bisect_open(fun, grid[j], grid[j + 1])


def empirical_quantile(values, p: float) -> float:
    """Ascending order statistic at 1-based index ceil(p m)."""
    v = np.sort(np.asarray(values, dtype=float))
    m = v.size
    if m == 0:
        raise InputError("no values")
    idx = min(max(math.ceil(p * m - 1e-9), 1), m)
    return float(v[idx - 1])


def quantile_method_solve(parametric_solver: Callable, n_uniforms: int, delta: float,
                          draws: int = DEFAULT_DRAWS, rng=None, vectorized: bool = True,
                          quantiles: Sequence[float] = None):
    """Empirical quantiles of per-draw roots of s(x) = tau.

    ``parametric_solver`` maps a (draws, n_uniforms) array of uniforms to
    the root per draw (``vectorized``), or one row to one root.  Returns
    the delta-quantile, or a tuple for the requested ``quantiles``.
    """
    if int(draws) != draws or draws < 1:
        raise InputError(f"draws must be a positive integer, got {draws!r}")
    rng = make_rng(rng)
    U = open_uniform(rng, (int(draws), int(n_uniforms)))
    if vectorized:
        roots = np.asarray(parametric_solver(U), dtype=float)
    else:
        roots = np.empty(draws)
        for j in range(draws):
            try:
                roots[j] = parametric_solver(U[j])
            except Exception as exc:
                raise type(exc)(f"draw {j}: {exc}") from exc
    bad = np.flatnonzero(~np.isfinite(roots))
    if bad.size:
        raise ArithmeticError(f"draw {bad[0]}: solver returned {roots[bad[0]]!r}")
    if quantiles is None:
        return empirical_quantile(roots, delta)
    return tuple(empirical_quantile(roots, p) for p in quantiles)


def _sumexp_quantiles(s, tau, delta, draws, rng):
    """(delta, 1-delta) quantiles of roots of sum -ln(v_j)/(x - s_j) = tau."""
    def solver(U):
        return kernels.sumexp_roots(s, -np.log(U), tau)
    return quantile_method_solve(solver, len(s), delta, draws, rng,
                                 quantiles=(delta, 1.0 - delta))


# ---------------------------------------------------------------- WS total

def _density_cdf(w, ell, tau):
    """P(y <= tau) for the (k+1)-st rank given the sketched set and unseen weight ell."""
    g = _log_integrand(w, ell)
    lo, mode, hi, peak = _integration_window(g, ell, w)
    fn = lambda y: math.exp(g(y) - peak)  # noqa: E731
    pts = _breakpoints(lo, mode, hi, ell) + [tau]
    below = _quad_pieces(fn, lo, min(tau, hi), pts) if tau > lo else 0.0
    above = _quad_pieces(fn, max(tau, lo), hi, pts) if tau < hi else 0.0
    return below / (below + above)


def _density_solve(w, tau, p):
    def fun(t):
        return _density_cdf(w, math.exp(t), tau) - p
    t0 = math.log(max(w.size, 1) / tau)
    lo, hi = t0 - 1.0, t0 + 1.0
    while fun(lo) > 0:
        lo -= 2.0 * (hi - lo)
    while fun(hi) < 0:
        hi += 2.0 * (hi - lo)
    return math.exp(bisect_monotone(fun, lo, hi, increasing=True, rtol=1e-10,
                                    what="density bound"))


def ws_bounds_total(sketch: BottomKSketch, delta: float, method: str = "quantile",
                    draws: int = DEFAULT_DRAWS, rng=None) -> ConfidenceInterval:
    """(1-delta) lower and upper bounds on the total weight of a WS sketch."""
    _require_family(sketch, RankFamily.EXP, "WS bounds")
    _check_delta(delta)
    ws = sketch.sampled_weight
    if sketch.is_exact:
        return ConfidenceInterval(ws, ws, delta, f"ws-{method}")
    s = sketch.prefix_sums()
    tau = sketch.r_k_plus_1
    if method == "normal":
        lo = solve_normal_approx(s, tau, delta, "lower")
        hi = solve_normal_approx(s, tau, delta, "upper")
        lo = ws if lo is None else max(lo, ws)
        hi = ws if hi is None else max(hi, ws)
    elif method == "quantile":
        lo, hi = _sumexp_quantiles(s, tau, delta, draws, rng)
    elif method == "density":
        w = sketch.weights
        hi = ws + _density_solve(w, tau, 1.0 - delta)
        lo = ws + _density_solve(w, tau, delta)
    else:
        raise InputError(f"unknown bound method {method!r}")
    return ConfidenceInterval(float(lo), float(max(lo, hi)), delta, f"ws-{method}")


# ---------------------------------------------------------------- WS subpopulation

def ws_bounds_subpop(sketch: BottomKSketch, predicate: PredicateLike, delta: float,
                     method: str = "quantile", draws: int = DEFAULT_DRAWS, rng=None
                     ) -> ConfidenceInterval:
    """(1-delta) bounds on w(J) from a WS sketch without the total weight.

    Upper: matched prefix sums s_0..s_c against r_{k+1}.  Lower: 0 if no
    entry matches, else s_0..s_{c-1} against the largest entry rank,
    never below w(J & s).
    """
    _require_family(sketch, RankFamily.EXP, "WS bounds")
    _check_delta(delta)
    pred = as_predicate(predicate)
    sJ, _ = _split_prefix(sketch.entries, pred)
    c = sJ.size - 1
    wj = float(sJ[c])
    tag = f"ws-subpop-{method}"
    if sketch.is_exact:
        return ConfidenceInterval(wj, wj, delta, tag)
    rng = make_rng(rng)
    r_next = sketch.r_k_plus_1
    r_k = sketch.entries[-1].rank
    if method == "normal":
        hi = solve_normal_approx(sJ, r_next, delta, "upper")
        lo = solve_normal_approx(sJ[:c], r_k, delta, "lower") if c else 0.0
    elif method == "quantile":
        hi = _sumexp_quantiles(sJ, r_next, delta, draws, rng)[1]
        lo = _sumexp_quantiles(sJ[:c], r_k, delta, draws, rng)[0] if c else 0.0
    else:
        raise InputError(f"unknown bound method {method!r}")
    hi = wj if hi is None else max(hi, wj)
    lo = 0.0 if c == 0 else (wj if lo is None else max(lo, wj))
    return ConfidenceInterval(float(lo), float(max(lo, hi)), delta, tag)


def ws_bounds_subpop_with_total(sketch: BottomKSketch, predicate: PredicateLike,
                                W: Optional[float], delta: float,
                                draws: int = DEFAULT_DRAWS, rng=None) -> ConfidenceInterval:
    """(1-delta) bounds on w(J) from a WS sketch and the total weight W.

    Conditions on the ordered prefixes of matched and unmatched entries
    and uses the pair (|J & s|, Delta) as the statistic, with Delta the
    largest unmatched entry rank minus the largest matched entry rank.
    Each quantile-method draw uses k+2 uniforms and the lexicographic
    solver; bounds are the delta and 1-delta quantiles of the per-draw
    solutions, all within [w(J & s), w(J & s) + W - w(s)].
    """
    _require_family(sketch, RankFamily.EXP, "WS bounds")
    _check_delta(delta)
    W = _resolve_total(sketch, W, "bounds with total weight")
    pred = as_predicate(predicate)
    sJ, sO = _split_prefix(sketch.entries, pred)
    wj = float(sJ[-1])
    tag = "ws-subpop-total"
    if sketch.is_exact or _unseen(sketch, W) == 0.0:
        return ConfidenceInterval(wj, wj, delta, tag)
    rJ = max((e.rank for e in sketch.entries if pred(e)), default=0.0)
    rO = max((e.rank for e in sketch.entries if not pred(e)), default=0.0)
    gap = rO - rJ
    nJ, nO = sJ.size, sO.size

    def solver(U):
        E = -np.log(U)
        return kernels.lex_roots(sJ, sO, E[:, :nJ], E[:, nJ:], W, gap)

    lo, hi = quantile_method_solve(solver, nJ + nO, delta, draws, rng,
                                   quantiles=(delta, 1.0 - delta))
    top = wj + (W - sketch.sampled_weight)
    lo = min(max(lo, wj), top)
    hi = min(max(hi, wj), top)
    return ConfidenceInterval(float(lo), float(max(lo, hi)), delta, tag)


# ---------------------------------------------------------------- PRI, WSR

def chernoff_counts(n_prime: int, delta: float) -> tuple[float, float]:
    """(lower, upper) count bounds solving n' - x + n' ln(x/n') = ln(delta)."""
    _check_delta(delta)
    target = math.log(delta)
    if n_prime == 0:
        return 0.0, -target

    def phi(x):
        return n_prime - x + n_prime * math.log(x / n_prime) - target

    hi_end = expand_upper(phi, n_prime, 64.0 * n_prime)
    upper = bisect_monotone(phi, float(n_prime), hi_end, what="Chernoff upper")
    lower = bisect_monotone(phi, 1e-12, float(n_prime), increasing=True, what="Chernoff lower")
    return lower, upper


def pri_bounds_subpop(sketch: BottomKSketch, predicate: PredicateLike, delta: float
                      ) -> ConfidenceInterval:
    """Chernoff bounds on w(J) from a PRI sketch with threshold r_{k+1}."""
    if sketch.family is not RankFamily.PRI:
        raise CapabilityError(f"PRI bounds need a pri sketch, got {sketch.family.value}")
    _check_delta(delta)
    pred = as_predicate(predicate)
    matched = [e for e in sketch.entries if pred(e)]
    if sketch.is_exact:
        wj = math.fsum(e.weight for e in matched)
        return ConfidenceInterval(wj, wj, delta, "pri-chernoff")
    tau = sketch.r_k_plus_1
    heavy = math.fsum(e.weight for e in matched if e.weight * tau >= 1.0)
    n_prime = sum(1 for e in matched if e.weight * tau < 1.0)
    n_low, n_up = chernoff_counts(n_prime, delta)
    return ConfidenceInterval(heavy + n_low / tau, heavy + n_up / tau, delta, "pri-chernoff")


def pri_bounds_total(sketch: BottomKSketch, delta: float) -> ConfidenceInterval:
    return pri_bounds_subpop(sketch, None, delta)


def wsr_bounds_total(kmins: KMinsSketch, delta: float) -> ConfidenceInterval:
    """Normal-approximation bounds (1 -+ alpha/sqrt(k)) / mean rank."""
    _check_delta(delta)
    rbar = math.fsum(m.rank for m in kmins.mins) / kmins.k
    spread = z_value(delta) / math.sqrt(kmins.k)
    return ConfidenceInterval(max(0.0, (1.0 - spread) / rbar), (1.0 + spread) / rbar,
                              delta, "wsr-normal")


BOUND_METHODS = {
    "ws-normal": "WS total or subpopulation, normal approximation",
    "ws-quantile": "WS total or subpopulation, quantile method",
    "ws-density": "WS total, conditioned on the sketched set (density integral)",
    "ws-total": "WS subpopulation using the total weight W (lexicographic quantile method)",
    "pri": "PRI Chernoff bounds",
    "wsr": "k-mins normal approximation (total only)",
}
