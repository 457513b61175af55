"""Random rank families and rank drawing.

A rank assignment maps every item to an independent random rank whose
distribution depends on the item's weight.  Three families are supported:

* ``EXP`` (weighted sampling without replacement, "ws"): rank ~ Exp(w).
* ``PRI`` (priority sampling): rank ~ U[0, 1/w].
* ``UNIFORM`` (unweighted): rank ~ U[0, 1] regardless of weight.

All draws go through :func:`open_uniform` so that ``-log(u)`` is finite.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import DomainError, SketchStateError

SeedLike = Union[None, int, np.random.SeedSequence, np.random.Generator]


class RankFamily(str, enum.Enum):
    EXP = "ws"
    PRI = "pri"
    UNIFORM = "uniform"

    @classmethod
    def parse(cls, value: "RankFamily | str") -> "RankFamily":
        if isinstance(value, RankFamily):
            return value
        aliases = {"exp": cls.EXP, "exponential": cls.EXP, "ws": cls.EXP,
                   "pri": cls.PRI, "priority": cls.PRI,
                   "uniform": cls.UNIFORM, "unweighted": cls.UNIFORM}
        try:
            return aliases[str(value).lower()]
        except KeyError:
            raise DomainError(f"unknown rank family {value!r}") from None


@dataclass(frozen=True, order=True)
class RankValue:
    """A rank with its owner; ordering is lexicographic on (value, owner)."""

    value: float
    owner: str = ""


def make_rng(seed: SeedLike = None) -> np.random.Generator:
    """Return a counter-based (Philox) generator.

    Generators pass through unchanged; ints and seed sequences are wrapped.
    """
    if isinstance(seed, np.random.Generator):
        return seed
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(seed)
    return np.random.Generator(np.random.Philox(seed))


def spawn_rngs(seed: SeedLike, n: int) -> list[np.random.Generator]:
    """Independent child streams, e.g. one per Monte Carlo repetition."""
    if isinstance(seed, np.random.Generator):
        seq = seed.bit_generator.seed_seq
    elif isinstance(seed, np.random.SeedSequence):
        seq = seed
    else:
        seq = np.random.SeedSequence(seed)
    return [np.random.Generator(np.random.Philox(s)) for s in seq.spawn(n)]


def open_uniform(rng: np.random.Generator, size=None):
    """Uniform draws from the open interval (0, 1)."""
    if size is None:
        u = rng.random()
        while u == 0.0:
            u = rng.random()
        return u
    u = rng.random(size)
    zero = u == 0.0
    while zero.any():
        u[zero] = rng.random(int(zero.sum()))
        zero = u == 0.0
    return u


def _check_weight(weight):
    w = np.asarray(weight, dtype=float)
    if not np.all(w > 0) or not np.all(np.isfinite(w)):
        raise DomainError(f"rank weights must be positive and finite, got {weight!r}")
    return w


def rank_from_uniform(u, weight, family: RankFamily | str):
    """Inverse-CDF transform of uniforms ``u`` in (0, 1) into ranks.

    Works elementwise on scalars or arrays.  For ``EXP`` this is
    ``-log(u)/w`` (the complement ``1-u`` is equally valid in distribution;
    the direct form matches the documented convention).
    """
    family = RankFamily.parse(family)
    w = _check_weight(weight)
    u = np.asarray(u, dtype=float)
    if family is RankFamily.EXP:
        out = -np.log(u) / w
    elif family is RankFamily.PRI:
        out = u / w
    else:
        out = u * np.ones_like(w)
    return out if out.ndim else float(out)


def rank_cdf(family: RankFamily | str, weight, x):
    """F_w(x): probability that an item of weight ``weight`` has rank <= x."""
    family = RankFamily.parse(family)
    w = _check_weight(weight)
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise DomainError("rank CDF is defined for x >= 0")
    if family is RankFamily.EXP:
        out = -np.expm1(-w * x)
    elif family is RankFamily.PRI:
        out = np.minimum(1.0, w * x)
    else:
        out = np.minimum(1.0, x) * np.ones_like(w)
    return out if out.ndim else float(out)


def rank_inverse_cdf(family: RankFamily | str, weight, p):
    """Quantile function of the rank distribution, p in (0, 1)."""
    family = RankFamily.parse(family)
    w = _check_weight(weight)
    p = np.asarray(p, dtype=float)
    if family is RankFamily.EXP:
        out = -np.log1p(-p) / w
    elif family is RankFamily.PRI:
        out = p / w
    else:
        out = p * np.ones_like(w)
    return out if out.ndim else float(out)


def draw_rank(weight: float, family: RankFamily | str, rng: np.random.Generator,
              owner: str = "") -> RankValue:
    """Draw one rank for an item of the given weight."""
    if not (weight > 0) or not math.isfinite(weight):
        raise DomainError(f"weight must be positive, got {weight!r}")
    u = open_uniform(rng)
    return RankValue(rank_from_uniform(u, weight, family), owner)


def draw_ranks(weights, family: RankFamily | str, rng: np.random.Generator) -> np.ndarray:
    """Vectorized :func:`draw_rank` returning a float array."""
    w = _check_weight(weights)
    return np.asarray(rank_from_uniform(open_uniform(rng, w.shape), w, family), dtype=float)


def truncated_ranks(weights, family: RankFamily | str, threshold: float,
                    rng: np.random.Generator) -> np.ndarray:
    """Ranks conditioned to lie below ``threshold``.

    Density f_w(x)/F_w(threshold) on [0, threshold], via inverse CDF on
    u ~ U(0, F_w(threshold)).
    """
    family = RankFamily.parse(family)
    w = _check_weight(weights)
    cap = np.asarray(rank_cdf(family, w, threshold), dtype=float)
    u = open_uniform(rng, w.shape) * cap
    r = np.asarray(rank_inverse_cdf(family, w, u), dtype=float)
    # float rounding can land exactly on the threshold
    return np.minimum(r, np.nextafter(threshold, 0.0))


def redraw_sketch_ranks(sketch, rng: np.random.Generator) -> list[RankValue]:
    """Redraw entry ranks of a bottom-k sketch given its (k+1)-st rank.

    Returns one :class:`RankValue` per entry, in entry order (not re-sorted).
    """
    if sketch.r_k_plus_1 is None:
        raise SketchStateError("sketch has no (k+1)-st rank; nothing to condition on")
    if not sketch.entries:
        return []
    w = np.array([e.weight for e in sketch.entries])
    r = truncated_ranks(w, sketch.family, sketch.r_k_plus_1, rng)
    return [RankValue(float(v), e.id) for v, e in zip(r, sketch.entries)]
