"""Point estimators of total and subpopulation weight from sketches.

Adjusted-weight estimators return an :class:`AdjustedWeightAssignment`;
a subpopulation estimate is the sum of adjusted weights of matching
sketch entries.  Maximum-likelihood and k-mins estimators return floats.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy import integrate, optimize

from . import kernels
from .errors import CapabilityError, DomainError, InputError
from .predicates import PredicateLike, as_predicate
from .ranks import RankFamily, make_rng, redraw_sketch_ranks
from .sketch import BottomKSketch, KMinsSketch, SketchEntry
from .solvers import bisect_monotone

EXACT_SUBSET_LIMIT = 20
UNSEEN_RTOL = 1e-12  # unseen weight below this fraction of W counts as none


@dataclass(frozen=True)
class ScParams:
    inperm: int = 20
    permnum: int = 20

    def __post_init__(self):
        if int(self.inperm) != self.inperm or self.inperm < 1:
            raise InputError(f"inperm must be a positive integer, got {self.inperm!r}")
        if int(self.permnum) != self.permnum or self.permnum < 1:
            raise InputError(f"permnum must be a positive integer, got {self.permnum!r}")


@dataclass(frozen=True)
class AdjustedWeightAssignment:
    method: str
    weights: dict
    uses_total_weight: bool
    entries: tuple = ()

    def estimate(self, predicate: PredicateLike = None) -> float:
        return estimate_subpop(self, predicate)

    def as_array(self) -> np.ndarray:
        return np.array([self.weights[e.id] for e in self.entries])


def _assignment(method, sketch, a, uses_total):
    return AdjustedWeightAssignment(
        method=method,
        weights={e.id: float(v) for e, v in zip(sketch.entries, a)},
        uses_total_weight=uses_total,
        entries=tuple(sketch.entries),
    )


def _require_family(sketch, family, what):
    if sketch.family is not family:
        raise CapabilityError(f"{what} needs a {family.value} sketch, got {sketch.family.value}")


def _resolve_total(sketch: BottomKSketch, W: Optional[float], what: str) -> float:
    if W is None:
        W = sketch.total_weight
    if W is None:
        raise CapabilityError(f"{what} needs the total weight; supply W")
    W = float(W)
    if not math.isfinite(W) or W < sketch.sampled_weight * (1 - 1e-12):
        raise InputError(f"total weight {W!r} is below the sampled weight {sketch.sampled_weight!r}")
    return W


def _unseen(sketch, W) -> float:
    ell = W - sketch.sampled_weight
    return 0.0 if ell <= UNSEEN_RTOL * W else ell


# ---------------------------------------------------------------- k-mins

def wsr_total_weight(kmins: KMinsSketch, form: str = "unbiased") -> float:
    """Total weight from k independent minimum ranks.

    ``unbiased``: (k-1)/sum r; ``ml``: k/sum r; ``inverse``: sum r / k, an
    unbiased estimate of 1/w(I).
    """
    k = kmins.k
    total_r = math.fsum(m.rank for m in kmins.mins)
    if form == "unbiased":
        if k < 2:
            raise CapabilityError("the unbiased k-mins estimator needs k >= 2")
        return (k - 1) / total_r
    if form == "ml":
        return k / total_r
    if form == "inverse":
        return total_r / k
    raise InputError(f"unknown k-mins estimator form {form!r}")


def wsr_subpop_with_total(kmins: KMinsSketch, predicate: PredicateLike, W: float,
                          variant: str = "ht") -> float:
    """Subpopulation weight from a k-mins sketch and the known total W.

    ``ht`` sums w/(1-(1-w/W)^k) over distinct sampled members; ``ratio``
    is (multiplicity of members among the k draws) * W / k.
    """
    pred = as_predicate(predicate)
    max_w = max(m.weight for m in kmins.mins)
    if W < max_w * (1 - 1e-12):
        raise InputError(f"total weight {W!r} is below a sampled weight {max_w!r}")
    k = kmins.k
    if variant == "ratio":
        return sum(1 for m in kmins.mins if pred(m)) * W / k
    if variant == "ht":
        seen = {}
        for m in kmins.mins:
            if m.id not in seen and pred(m):
                seen[m.id] = m.weight
        out = 0.0
        for w in seen.values():
            p = -math.expm1(k * math.log1p(-min(w / W, 1.0))) if w < W else 1.0
            out += w / p
        return out
    raise InputError(f"unknown variant {variant!r}")


# ---------------------------------------------------------------- ML

def _ml_total_root(s: np.ndarray, r: float) -> float:
    k = s.size - 1

    def fun(x):
        return float(np.sum(1.0 / (x - s))) - r

    return bisect_monotone(fun, s[k] + 1.0 / r, s[k] + (k + 1) / r, what="ML total")


def _resorted(sketch, rng):
    ranks = redraw_sketch_ranks(sketch, rng)
    order = sorted(range(len(ranks)), key=lambda j: ranks[j])
    return [sketch.entries[j] for j in order]


def ml_total_weight(sketch: BottomKSketch, redraws: int = 0, rng=None) -> float:
    """Maximum-likelihood total weight of a WS sketch.

    Solves sum_{i=0..k} 1/(x - s_i) = r_{k+1}.  With ``redraws`` > 0 the
    entry ranks are redrawn given r_{k+1} and the estimates averaged.
    """
    _require_family(sketch, RankFamily.EXP, "ML estimation")
    if sketch.is_exact:
        return sketch.sampled_weight
    r = sketch.r_k_plus_1
    est = [_ml_total_root(sketch.prefix_sums(), r)]
    if redraws:
        rng = make_rng(rng)
        for _ in range(redraws):
            ents = _resorted(sketch, rng)
            s = np.concatenate(([0.0], np.cumsum([e.weight for e in ents])))
            est.append(_ml_total_root(s, r))
    return float(np.mean(est))


def _split_prefix(entries: Sequence[SketchEntry], pred):
    sJ, sO = [0.0], [0.0]
    for e in entries:
        if pred(e):
            sJ.append(sJ[-1] + e.weight)
        else:
            sO.append(sO[-1] + e.weight)
    return np.array(sJ), np.array(sO)


def _ml_subpop_root(sJ, tau):
    c = sJ.size - 1
    if c == 0:
        return 0.0
    s = sJ[:c]
    if c == 1:  # the bracket below collapses to the root itself
        return max(s[0] + 1.0 / tau, sJ[c])

    def fun(x):
        return float(np.sum(1.0 / (x - s))) - tau

    hi = s[-1] + c / tau
    root = bisect_monotone(fun, s[-1] + 1.0 / tau, hi * (1 + 1e-12), what="ML subpopulation")
    return max(root, sJ[c])


def ml_subpop(sketch: BottomKSketch, predicate: PredicateLike, redraws: int = 0,
              rng=None) -> float:
    """ML subpopulation weight without the total weight.

    Root of sum_{h<c} 1/(x - s_h) = r_{k+1} over the c matching entries,
    reported as max(root, w(J & s)); 0 if nothing matches.
    """
    _require_family(sketch, RankFamily.EXP, "ML estimation")
    pred = as_predicate(predicate)
    if sketch.is_exact:
        return math.fsum(e.weight for e in sketch.entries if pred(e))
    tau = sketch.r_k_plus_1
    sJ, _ = _split_prefix(sketch.entries, pred)
    est = [_ml_subpop_root(sJ, tau)]
    if redraws:
        rng = make_rng(rng)
        for _ in range(redraws):
            sJ, _ = _split_prefix(_resorted(sketch, rng), pred)
            est.append(_ml_subpop_root(sJ, tau))
    return float(np.mean(est))


def _bisect_open(fun, lo, hi, rtol=1e-9, maxiter=200):
    """Bisection for a decreasing function running from +inf at lo to -inf at hi."""
    for _ in range(maxiter):
        if hi - lo <= rtol * max(abs(lo), abs(hi), 1e-300):
            break
        mid = 0.5 * (lo + hi)
        if fun(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def ml_subpop_with_total(sketch: BottomKSketch, predicate: PredicateLike,
                         W: Optional[float] = None) -> float:
    """ML subpopulation weight given the total weight W.

    Root of sum_{h<c} 1/(x-s_h) - sum_{h<a} 1/((W-x)-s'_h) = 0, clamped to
    the feasible range [w(J & s), W - w(s \\ J)].
    """
    _require_family(sketch, RankFamily.EXP, "ML estimation")
    W = _resolve_total(sketch, W, "ML with total weight")
    pred = as_predicate(predicate)
    sJ, sO = _split_prefix(sketch.entries, pred)
    c, a = sJ.size - 1, sO.size - 1
    if sketch.is_exact or _unseen(sketch, W) == 0.0:
        return float(sJ[c])
    if c == 0:
        return 0.0
    if a == 0:
        return W
    s, sp = sJ[:c], sO[:a]

    def fun(x):
        return float(np.sum(1.0 / (x - s)) - np.sum(1.0 / ((W - x) - sp)))

    root = _bisect_open(fun, s[-1], W - sp[-1])
    return float(min(max(root, sJ[c]), W - sO[a]))


# ---------------------------------------------------------------- RC

def rc_weights(w, r_next, family: RankFamily | str) -> np.ndarray:
    """Rank-conditioning adjusted weights w / F_w(r_{k+1}), elementwise."""
    family = RankFamily.parse(family)
    w = np.asarray(w, dtype=float)
    r_next = np.asarray(r_next, dtype=float)
    if family is RankFamily.EXP:
        return w / -np.expm1(-w * r_next)
    if family is RankFamily.PRI:
        return np.maximum(w, 1.0 / r_next)
    return w / np.minimum(1.0, r_next)


def rc_adjusted_weights(sketch: BottomKSketch) -> AdjustedWeightAssignment:
    """HT adjusted weights conditioned on the k-th smallest rank of the others."""
    tag = {RankFamily.EXP: "WS-RC", RankFamily.PRI: "PRI-RC",
           RankFamily.UNIFORM: "UNIFORM-RC"}[sketch.family]
    w = sketch.weights
    a = w if sketch.is_exact else rc_weights(w, sketch.r_k_plus_1, sketch.family)
    return _assignment(tag, sketch, a, False)


# ---------------------------------------------------------------- f(s, ell)

def _inclusion_exclusion(w: np.ndarray, ell: float) -> float:
    sums = np.zeros(1)
    signs = np.ones(1)
    for wj in w:
        sums = np.concatenate((sums, sums + wj))
        signs = np.concatenate((signs, -signs))
    return float(np.sum(signs * (ell / (ell + sums))))


def _log_integrand(w: np.ndarray, ell: float):
    def g(x):
        x = np.asarray(x, dtype=float)
        return math.log(ell) - ell * x + np.sum(np.log(-np.expm1(-np.multiply.outer(x, w))), axis=-1)
    return g


def _integration_window(g, ell, w, drop=40.0):
    """Mode and the range where the log-concave integrand is within e^-drop of its peak."""
    hi0 = max(w.size, 1) / ell  # the mode never exceeds |s| / ell
    res = optimize.minimize_scalar(lambda x: -g(x), bounds=(0.0, hi0), method="bounded",
                                   options={"xatol": 1e-12 * hi0})
    mode = float(res.x)
    peak = float(g(mode))
    lo = 0.0
    tiny = mode * 1e-30
    if w.size and mode > 0 and g(tiny) < peak - drop:
        lo = optimize.brentq(lambda x: g(x) - (peak - drop), tiny, mode)
    hi = mode + 1.0 / ell
    while g(hi) > peak - drop:
        hi = mode + 2.0 * (hi - mode)
    return lo, mode, hi, peak


def _breakpoints(lo, mode, hi, ell):
    """The integrand varies on scales 1/w_j near the mode and 1/ell in the
    tail; a geometric grid keeps each quad panel on a single scale."""
    start = max(lo, hi * 1e-16)
    grid = start * 2.0 ** np.arange(1, int(math.log2(hi / start)) + 1)
    return [mode, 1.0 / ell, *grid.tolist()]


def _quad_pieces(fn, a, b, points):
    pts = sorted({a, b, *[p for p in points if a < p < b]})
    total = 0.0
    for lo, hi in zip(pts, pts[1:]):
        val, _ = integrate.quad(fn, lo, hi, epsabs=1e-14, epsrel=1e-12, limit=200)
        total += val
    return total


def _quadrature(w: np.ndarray, ell: float) -> float:
    g = _log_integrand(w, ell)
    lo, mode, hi, peak = _integration_window(g, ell, w)
    fn = lambda x: math.exp(g(x) - peak)  # noqa: E731
    return math.exp(peak) * _quad_pieces(fn, lo, hi, _breakpoints(lo, mode, hi, ell))


def f_subset_prob(weights, ell: float, method: str = "auto") -> float:
    """Probability that the items ``weights`` get the |s| smallest ranks
    in a WS rank assignment over them plus unseen weight ``ell``.

    Equals the integral of ell e^(-ell x) prod_j (1 - e^(-w_j x)) over x >= 0.
    Methods: ``subset_dp`` (exact positive recursion over subsets),
    ``inclusion_exclusion`` (exact alternating sum), ``quadrature``
    (adaptive integration), ``auto`` (subset_dp up to 20 weights, else
    quadrature).
    """
    if ell < 0 or not math.isfinite(ell):
        raise DomainError(f"unseen weight must be nonnegative and finite, got {ell!r}")
    w = np.asarray(weights, dtype=float).ravel()
    if w.size and (np.any(w <= 0) or not np.all(np.isfinite(w))):
        raise DomainError("weights must be positive")
    if ell == 0 or w.size == 0:
        return 1.0
    if method == "auto":
        method = "subset_dp" if w.size <= EXACT_SUBSET_LIMIT else "quadrature"
    if method == "subset_dp":
        if w.size > 26:
            raise CapabilityError("subset recursion limited to 26 weights")
        return float(kernels.subset_f_table(w, ell)[-1])
    if method == "inclusion_exclusion":
        if w.size > 26:
            raise CapabilityError("inclusion-exclusion limited to 26 weights")
        return _inclusion_exclusion(w, ell)
    if method == "quadrature":
        return _quadrature(w, ell)
    raise InputError(f"unknown method {method!r}")


# ---------------------------------------------------------------- SC / prefix

def sc_adjusted_weights_exact(sketch: BottomKSketch, W: Optional[float] = None
                              ) -> AdjustedWeightAssignment:
    """Subset-conditioning adjusted weights w(i) f(s\\i, l) / f(s, l), l = W - w(s)."""
    _require_family(sketch, RankFamily.EXP, "subset conditioning")
    W = _resolve_total(sketch, W, "subset conditioning")
    if len(sketch) > EXACT_SUBSET_LIMIT:
        raise CapabilityError(f"exact subset conditioning is limited to k <= "
                              f"{EXACT_SUBSET_LIMIT}; use the Markov-chain variant")
    w = sketch.weights
    if sketch.is_exact or _unseen(sketch, W) == 0.0 or w.size == 0:
        a = w
    else:
        a = kernels.sc_exact(w, W)
    return _assignment("WS-SC-exact", sketch, a, True)


def sc_markov_weights(w, W: float, params: ScParams, rng) -> np.ndarray:
    """Markov-chain SC weights for entry weights ``w`` in rank order."""
    w = np.asarray(w, dtype=float)
    k = w.size
    rng = make_rng(rng)
    Er = rng.standard_exponential((params.permnum, params.inperm, k + 1))
    U = rng.random((params.permnum, k))
    return kernels.sc_markov(w, W, Er, U)


def sc_adjusted_weights_markov(sketch: BottomKSketch, W: Optional[float] = None,
                               params: ScParams = ScParams(), rng=None
                               ) -> AdjustedWeightAssignment:
    """Subset conditioning approximated by averaging RC weights along a
    Markov chain over orderings of the sketched items."""
    _require_family(sketch, RankFamily.EXP, "subset conditioning")
    W = _resolve_total(sketch, W, "subset conditioning")
    w = sketch.weights
    if sketch.is_exact or _unseen(sketch, W) == 0.0 or w.size == 0:
        a = w
    else:
        a = sc_markov_weights(w, W, params, rng)
    return _assignment("WS-SC-markov", sketch, a, True)


def prefix_adjusted_weights(sketch: BottomKSketch, W: Optional[float] = None
                            ) -> AdjustedWeightAssignment:
    """Adjusted weights conditioned on the ordered prefix of the other items."""
    _require_family(sketch, RankFamily.EXP, "prefix conditioning")
    W = _resolve_total(sketch, W, "prefix conditioning")
    w = sketch.weights
    if sketch.is_exact or _unseen(sketch, W) == 0.0 or w.size == 0:
        a = w
    else:
        a = kernels.prefix_adjusted(w, W)
    return _assignment("WS-prefix", sketch, a, True)


def sc_exact_weights_batch(wrows, W: float) -> np.ndarray:
    """Exact SC weights for many sketches at once; ``wrows`` is (trials, k)
    entry weights in rank order, all from a set of total weight ``W``."""
    wrows = np.asarray(wrows, dtype=float)
    if wrows.ndim != 2 or wrows.shape[1] > EXACT_SUBSET_LIMIT:
        raise CapabilityError(f"expected a (trials, k<={EXACT_SUBSET_LIMIT}) array")
    return kernels.sc_exact_rows(wrows, W)


def prefix_weights_batch(wrows, W: float) -> np.ndarray:
    """Prefix-conditioning weights for many sketches at once, (trials, k)."""
    return kernels.prefix_rows(np.atleast_2d(np.asarray(wrows, dtype=float)), W)


def sc_markov_weights_batch(wrows, W: float, params: ScParams, rng) -> np.ndarray:
    """Markov-chain SC weights row by row, each row with fresh draws."""
    wrows = np.atleast_2d(np.asarray(wrows, dtype=float))
    rng = make_rng(rng)
    return np.vstack([sc_markov_weights(row, W, params, rng) for row in wrows])


def prefix_position_probs(w, W: float, t: int):
    """Unnormalized p(i -> j and prefix) for j = 1..k and p(i not in s and prefix)
    for entry ``t``, written out term by term (used to cross-check the kernel)."""
    w = [float(x) for x in w]
    k = len(w)
    wi = w[t]
    others = w[:t] + w[t + 1:]
    pos = []
    for j in range(1, k + 1):
        p, used = 1.0, 0.0
        seq = others[:j - 1] + [wi] + others[j - 1:]
        for x in seq:
            p *= x / (W - used)
            used += x
        pos.append(p)
    p = 1.0
    used = 0.0
    for x in others:
        p *= x / (W - used)
        used += x
    miss = p * (W - wi - used) / (W - used)
    return pos, miss


# ---------------------------------------------------------------- queries

def estimate_subpop(assignment: AdjustedWeightAssignment, predicate: PredicateLike = None) -> float:
    """Sum of adjusted weights over entries satisfying the predicate."""
    pred = as_predicate(predicate)
    return math.fsum(assignment.weights[e.id] for e in assignment.entries if pred(e))


def estimate_attribute_sum(assignment: AdjustedWeightAssignment,
                           value: Union[str, Callable], predicate: PredicateLike = None) -> float:
    """Estimate of sum h(i) over the subpopulation: sum h(i) a(i) / w(i).

    ``value`` is an attribute name (parsed as a number) or a function of
    the entry.
    """
    pred = as_predicate(predicate)
    if isinstance(value, str):
        name = value

        def value(e):
            try:
                return float(e.attributes[name])
            except KeyError:
                raise InputError(f"item {e.id!r} has no attribute {name!r}") from None
    return math.fsum(value(e) * assignment.weights[e.id] / e.weight
                     for e in assignment.entries if pred(e))


ESTIMATORS = {
    "ws-rc": "rank conditioning, WS sketch",
    "pri-rc": "rank conditioning, PRI sketch",
    "rc": "rank conditioning, any bottom-k sketch",
    "sc": "subset conditioning (exact, k <= 20), needs W",
    "sc-markov": "subset conditioning via Markov chain, needs W",
    "prefix": "prefix conditioning, needs W",
    "ml": "maximum likelihood, WS sketch",
    "ml-w": "maximum likelihood with total weight, WS sketch",
    "wsr": "k-mins unbiased total estimator",
    "wsr-ht": "k-mins HT subpopulation estimator, needs W",
    "wsr-ratio": "k-mins ratio subpopulation estimator, needs W",
}
