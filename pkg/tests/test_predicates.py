import pytest

from bottomk.errors import PredicateError
from bottomk.predicates import MATCH_ALL, Predicate, as_predicate
from bottomk.sketch import WeightedItem

A = WeightedItem("a", 5.0, {"region": "west", "bytes": "120"})
B = WeightedItem("b", 1.0, {"region": "east", "bytes": "80"})


@pytest.mark.parametrize("text,expect", [
    ("*", (True, True)),
    ("all", (True, True)),
    ("", (True, True)),
    ("region = west", (True, False)),
    ("region == 'east'", (False, True)),
    ("region != west", (False, True)),
    ("bytes >= 100", (True, False)),
    ("bytes < 100 and region = east", (False, True)),
    ("weight > 2", (True, False)),
    ("id = b", (False, True)),
])
def test_parse_and_evaluate(text, expect):
    p = Predicate.parse(text)
    assert (p(A), p(B)) == expect


def test_missing_attribute_names_item():
    with pytest.raises(PredicateError, match="'a'.*'colour'"):
        Predicate.parse("colour = red")(A)


def test_non_numeric_comparison():
    with pytest.raises(PredicateError):
        Predicate.parse("region > 3")(A)


def test_unparseable_clause():
    with pytest.raises(PredicateError):
        Predicate.parse("region west")


def test_members_and_coercion():
    p = Predicate.members(["b"])
    assert not p(A) and p(B)
    assert as_predicate(None) is MATCH_ALL
    assert as_predicate(lambda it: it.weight > 3)(A)
    assert as_predicate("region = east")(B)
    with pytest.raises(PredicateError):
        as_predicate(42)
