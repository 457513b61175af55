"""Item predicates: small attribute expressions and membership tests.

Expression syntax::

    region = west and bytes >= 100
    *                      (matches every item; also "all" or "true")

Clauses are ``name op value`` with op one of = == != < <= > >=, joined by
``and``.  Comparisons with < <= > >= are numeric.  ``id`` and ``weight``
are available as pseudo-attributes.
"""

from __future__ import annotations

import operator
import re
from dataclasses import dataclass
from typing import Callable, Iterable, Union

from .errors import PredicateError

_OPS = {
    "=": operator.eq, "==": operator.eq, "!=": operator.ne,
    "<": operator.lt, "<=": operator.le, ">": operator.gt, ">=": operator.ge,
}
_NUMERIC = {"<", "<=", ">", ">="}
_CLAUSE = re.compile(r"^\s*([A-Za-z_][\w.:-]*)\s*(==|!=|<=|>=|=|<|>)\s*(.*?)\s*$")


def _lookup(item, name):
    if name == "id":
        return item.id
    if name == "weight":
        return item.weight
    try:
        return item.attributes[name]
    except KeyError:
        raise PredicateError(f"item {item.id!r} has no attribute {name!r}") from None


@dataclass(frozen=True)
class _Clause:
    name: str
    op: str
    value: str

    def __call__(self, item) -> bool:
        got = _lookup(item, self.name)
        if self.op in _NUMERIC or isinstance(got, float):
            try:
                return _OPS[self.op](float(got), float(self.value))
            except ValueError:
                raise PredicateError(
                    f"item {item.id!r}: cannot compare {self.name}={got!r} "
                    f"numerically with {self.value!r}") from None
        return _OPS[self.op](str(got), self.value)


class Predicate:
    """A deterministic boolean function of an item."""

    def __init__(self, fn: Callable, text: str = "<callable>"):
        self._fn = fn
        self.text = text

    def __call__(self, item) -> bool:
        return bool(self._fn(item))

    def __repr__(self):
        return f"Predicate({self.text!r})"

    @classmethod
    def parse(cls, text: str) -> "Predicate":
        src = text.strip()
        if src.lower() in ("*", "all", "true", ""):
            return MATCH_ALL
        clauses = []
        for part in re.split(r"\s+and\s+", src):
            m = _CLAUSE.match(part)
            if not m:
                raise PredicateError(f"cannot parse predicate clause {part.strip()!r}")
            name, op, value = m.groups()
            if len(value) >= 2 and value[0] == value[-1] and value[0] in "'\"":
                value = value[1:-1]
            clauses.append(_Clause(name, op, value))
        return cls(lambda item: all(c(item) for c in clauses), src)

    @classmethod
    def members(cls, ids: Iterable[str], text: str = "<members>") -> "Predicate":
        ids = frozenset(ids)
        return cls(lambda item: item.id in ids, text)


MATCH_ALL = Predicate(lambda item: True, "*")

PredicateLike = Union[Predicate, str, Callable, None]


def as_predicate(p: PredicateLike) -> Predicate:
    if p is None:
        return MATCH_ALL
    if isinstance(p, Predicate):
        return p
    if isinstance(p, str):
        return Predicate.parse(p)
    if callable(p):
        return Predicate(p)
    raise PredicateError(f"not a predicate: {p!r}")
