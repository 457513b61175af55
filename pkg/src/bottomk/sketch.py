"""Bottom-k and k-mins sketches of weighted item sets."""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .errors import InputError
from .ranks import (RankFamily, open_uniform, rank_from_uniform, truncated_ranks,
                    _check_weight)


@dataclass(frozen=True)
class WeightedItem:
    id: str
    weight: float
    attributes: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if not (self.weight > 0) or not math.isfinite(self.weight):
            raise InputError(f"item {self.id!r}: weight must be positive, got {self.weight!r}")


@dataclass(frozen=True)
class SketchEntry:
    id: str
    weight: float
    rank: float
    attributes: Mapping[str, str] = field(default_factory=dict)

    @property
    def key(self) -> tuple[float, str]:
        return (self.rank, self.id)


@dataclass(frozen=True)
class BottomKSketch:
    """The k smallest-rank entries of one rank assignment.

    ``r_k_plus_1`` is None when the sketched set had at most k items, in
    which case the sketch holds the whole set and estimators are exact.
    ``total_weight`` is known in explicit mode (sketch built from the data).
    """

    k: int
    entries: tuple[SketchEntry, ...]
    family: RankFamily
    r_k_plus_1: Optional[float] = None
    total_weight: Optional[float] = None
    ground_set_size: Optional[int] = None

    def __post_init__(self):
        if self.k < 1:
            raise InputError(f"k must be >= 1, got {self.k}")
        if len(self.entries) > self.k:
            raise InputError(f"sketch holds {len(self.entries)} entries but k={self.k}")
        keys = [e.key for e in self.entries]
        if any(a >= b for a, b in zip(keys, keys[1:])):
            raise InputError("sketch entries must be strictly increasing in (rank, id)")
        if self.r_k_plus_1 is not None:
            if len(self.entries) < self.k:
                raise InputError("r_k_plus_1 present but sketch has fewer than k entries")
            if self.entries and not self.r_k_plus_1 >= self.entries[-1].rank:
                raise InputError("r_k_plus_1 must not be below the largest entry rank")
        if self.total_weight is not None:
            if self.total_weight < self.sampled_weight * (1 - 1e-12):
                raise InputError("total_weight is smaller than the sampled weight")

    @classmethod
    def empty(cls, k: int, family: RankFamily | str) -> "BottomKSketch":
        return cls(k=k, entries=(), family=RankFamily.parse(family),
                   total_weight=0.0, ground_set_size=0)

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def is_exact(self) -> bool:
        return self.r_k_plus_1 is None

    @property
    def weights(self) -> np.ndarray:
        return np.array([e.weight for e in self.entries], dtype=float)

    @property
    def ranks(self) -> np.ndarray:
        return np.array([e.rank for e in self.entries], dtype=float)

    @property
    def ids(self) -> list[str]:
        return [e.id for e in self.entries]

    @property
    def sampled_weight(self) -> float:
        return math.fsum(e.weight for e in self.entries)

    def prefix_sums(self) -> np.ndarray:
        """s_0 = 0, s_j = sum of the j smallest-rank weights."""
        return np.concatenate(([0.0], np.cumsum(self.weights)))


@dataclass(frozen=True)
class KMinsEntry:
    rank: float
    id: str
    weight: float
    attributes: Mapping[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class KMinsSketch:
    """k independent minimum-rank records (weighted sampling with replacement)."""

    k: int
    mins: tuple[KMinsEntry, ...]
    total_weight: Optional[float] = None

    def __post_init__(self):
        if self.k < 1:
            raise InputError(f"k must be >= 1, got {self.k}")
        if len(self.mins) != self.k:
            raise InputError(f"k-mins sketch needs exactly k={self.k} entries, got {len(self.mins)}")

    @property
    def ranks(self) -> np.ndarray:
        return np.array([m.rank for m in self.mins], dtype=float)


def _check_items(items: Sequence[WeightedItem]) -> None:
    if not items:
        raise InputError("item set is empty")
    seen = set()
    for it in items:
        if it.id in seen:
            raise InputError(f"duplicate item id {it.id!r}")
        seen.add(it.id)


def _check_k(k) -> int:
    if int(k) != k or k < 1:
        raise InputError(f"k must be a positive integer, got {k!r}")
    return int(k)


def bottom_k_order(ranks: np.ndarray, ids: Sequence[str], m: int) -> np.ndarray:
    """Indices of the m smallest ranks, ties broken by id."""
    n = len(ranks)
    m = min(m, n)
    if m < n:
        # widen the partition to catch every value tied with the m-th
        part = np.argpartition(ranks, m - 1)[:m]
        cut = ranks[part].max()
        cand = np.flatnonzero(ranks <= cut)
    else:
        cand = np.arange(n)
    order = sorted(cand, key=lambda i: (ranks[i], ids[i]))
    return np.asarray(order[:m], dtype=np.intp)


def sketch_from_ranks(items: Sequence[WeightedItem], ranks, k: int,
                      family: RankFamily | str, *, explicit: bool = True) -> BottomKSketch:
    """Bottom-k sketch for a fixed rank assignment ``ranks`` (one per item)."""
    k = _check_k(k)
    family = RankFamily.parse(family)
    ranks = np.asarray(ranks, dtype=float)
    if ranks.shape != (len(items),):
        raise InputError("need exactly one rank per item")
    ids = [it.id for it in items]
    sel = bottom_k_order(ranks, ids, k + 1)
    entries = tuple(SketchEntry(items[i].id, float(items[i].weight), float(ranks[i]),
                                dict(items[i].attributes)) for i in sel[:k])
    r_next = float(ranks[sel[k]]) if len(sel) > k else None
    total = math.fsum(it.weight for it in items) if explicit else None
    return BottomKSketch(k=k, entries=entries, family=family, r_k_plus_1=r_next,
                         total_weight=total, ground_set_size=len(items) if explicit else None)


def build_bottom_k(items: Sequence[WeightedItem], k: int, family: RankFamily | str,
                   rng: np.random.Generator) -> BottomKSketch:
    """Draw one rank assignment over ``items`` and keep the k smallest."""
    k = _check_k(k)
    items = list(items)
    _check_items(items)
    w = np.array([it.weight for it in items], dtype=float)
    ranks = np.asarray(rank_from_uniform(open_uniform(rng, len(items)), w, family), dtype=float)
    return sketch_from_ranks(items, ranks, k, family)


def build_bottom_k_stream(stream: Iterable[WeightedItem], k: int, family: RankFamily | str,
                          rng: np.random.Generator) -> BottomKSketch:
    """One-pass bottom-k sketch over an item stream.

    Keeps the k+1 smallest-rank items in a sorted buffer.  For the
    exponential family, once the buffer is full the weight that can be
    skipped before the next accepted item is drawn directly: with r_max the
    largest buffered rank, skipped weight ~ Exp(r_max).  Accepted items get a
    rank from the exponential truncated to [0, r_max].  Other families draw
    a rank per item.
    """
    k = _check_k(k)
    family = RankFamily.parse(family)
    cap = k + 1
    buf: list[tuple[float, str, WeightedItem]] = []
    total = 0.0
    count = 0
    skip_left = math.inf  # remaining weight to skip before the next acceptance

    for item in stream:
        w = item.weight
        total += w
        count += 1
        if len(buf) < cap:
            r = float(rank_from_uniform(open_uniform(rng), w, family))
            bisect.insort(buf, (r, item.id, item))
            if len(buf) == cap and family is RankFamily.EXP:
                skip_left = rng.standard_exponential() / buf[-1][0]
            continue
        if family is RankFamily.EXP:
            if w < skip_left:
                skip_left -= w
                continue
            r_max = buf[-1][0]
            r = float(truncated_ranks(np.array([w]), family, r_max, rng)[0])
            buf.pop()
            bisect.insort(buf, (r, item.id, item))
            skip_left = rng.standard_exponential() / buf[-1][0]
        else:
            r = float(rank_from_uniform(open_uniform(rng), w, family))
            if (r, item.id) < buf[-1][:2]:
                buf.pop()
                bisect.insort(buf, (r, item.id, item))

    if not buf:
        raise InputError("stream was empty")
    entries = tuple(SketchEntry(it.id, float(it.weight), r, dict(it.attributes))
                    for r, _, it in buf[:k])
    r_next = buf[k][0] if len(buf) > k else None
    return BottomKSketch(k=k, entries=entries, family=family, r_k_plus_1=r_next,
                         total_weight=total, ground_set_size=count)


def merge_sketches(s1: BottomKSketch, s2: BottomKSketch, k: Optional[int] = None) -> BottomKSketch:
    """Sketch of the union of two disjoint sets from their sketches.

    Keeps the k smallest entries of the concatenation; the (k+1)-st rank is
    the (k+1)-st smallest among all entry ranks and the inputs' r_{k+1}.
    ``k`` defaults to min(s1.k, s2.k) and may not exceed the k of an input
    that is not exact.
    """
    if s1.family is not s2.family:
        raise InputError(f"cannot merge {s1.family.value} and {s2.family.value} sketches")
    if k is None:
        k = min(s1.k, s2.k)
    k = _check_k(k)
    for s in (s1, s2):
        if not s.is_exact and k > s.k:
            raise InputError(f"merge k={k} exceeds input sketch k={s.k}")
    ids1 = {e.id for e in s1.entries}
    if any(e.id in ids1 for e in s2.entries):
        raise InputError("merged sketches must cover disjoint ground sets")
    entries = sorted(s1.entries + s2.entries, key=lambda e: e.key)
    tail = [e.rank for e in entries[k:]]
    tail += [s.r_k_plus_1 for s in (s1, s2) if s.r_k_plus_1 is not None]
    r_next = min(tail) if tail else None
    if s1.total_weight is not None and s2.total_weight is not None:
        total = s1.total_weight + s2.total_weight
    else:
        total = None
    if s1.ground_set_size is not None and s2.ground_set_size is not None:
        size = s1.ground_set_size + s2.ground_set_size
    else:
        size = None
    return BottomKSketch(k=k, entries=tuple(entries[:k]), family=s1.family,
                         r_k_plus_1=r_next, total_weight=total, ground_set_size=size)


def truncate_sketch(sketch: BottomKSketch, k: int) -> BottomKSketch:
    """The bottom-k' sketch (k' <= k) of the same rank assignment."""
    k = _check_k(k)
    if k >= sketch.k:
        return sketch
    if len(sketch.entries) <= k:
        return replace(sketch, k=k)
    r_next = sketch.entries[k].rank
    return replace(sketch, k=k, entries=sketch.entries[:k], r_k_plus_1=r_next)


def build_k_mins(items: Sequence[WeightedItem], k: int, rng: np.random.Generator) -> KMinsSketch:
    """k-mins sketch with exponential ranks (weighted sampling with replacement).

    For exponential ranks the minimum over a set is Exp(w(I)) and is
    independent of which item attains it (chosen with probability
    w(i)/w(I)), so each of the k assignments is drawn in O(1) after a
    cumulative-weight table instead of drawing n ranks.
    """
    k = _check_k(k)
    items = list(items)
    _check_items(items)
    w = _check_weight([it.weight for it in items])
    total = math.fsum(w)
    cum = np.cumsum(w)
    idx = np.searchsorted(cum, open_uniform(rng, k) * cum[-1], side="right")
    idx = np.minimum(idx, len(items) - 1)
    mins_r = rng.standard_exponential(k) / total
    mins = tuple(KMinsEntry(float(r), items[i].id, float(items[i].weight),
                            dict(items[i].attributes)) for r, i in zip(mins_r, idx))
    return KMinsSketch(k=k, mins=mins, total_weight=total)


def sample_bottom_k_batch(weights, k: int, family: RankFamily | str, trials: int,
                          rng: np.random.Generator):
    """Many independent bottom-k sketches of one weight vector, as arrays.

    Returns ``(idx, ranks)`` with ``idx`` of shape (trials, k) holding item
    indices in rank order and ``ranks`` of shape (trials, k+1) holding the
    k+1 smallest ranks.  Requires len(weights) > k.  Ties (probability zero)
    are broken by index.
    """
    w = _check_weight(weights)
    k = _check_k(k)
    if w.size <= k:
        raise InputError("batch sampling needs more items than k")
    r = np.asarray(rank_from_uniform(open_uniform(rng, (trials, w.size)), w, family))
    if k + 1 < w.size:
        part = np.argpartition(r, k, axis=1)[:, :k + 1]
    else:
        part = np.broadcast_to(np.arange(w.size), (trials, w.size))
    pr = np.take_along_axis(r, part, axis=1)
    o = np.lexsort((part, pr), axis=1)
    idx = np.take_along_axis(part, o, axis=1)
    return idx[:, :k], np.take_along_axis(pr, o, axis=1)
