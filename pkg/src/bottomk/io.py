"""CSV item input and the sketch document format.

Sketch documents are JSON with a ``format``/``version`` header.  Floats are
stored as hex strings (``float.hex``) so round trips are exact.
"""

from __future__ import annotations

import csv
import json
import math
from typing import Iterator, Optional

from .errors import InputError, SketchFormatError
from .ranks import RankFamily
from .sketch import BottomKSketch, KMinsEntry, KMinsSketch, SketchEntry, WeightedItem

FORMAT = "bottomk-sketch"
VERSION = 1


def _hex(x: Optional[float]):
    return None if x is None else float(x).hex()


def _unhex(v, where):
    if v is None:
        return None
    try:
        if isinstance(v, str):
            return float.fromhex(v) if "x" in v.lower() else float(v)
        if isinstance(v, (int, float)) and not isinstance(v, bool):
            return float(v)
    except ValueError:
        pass
    raise SketchFormatError(f"not a number: {v!r}", where)


def sketch_to_dict(sketch) -> dict:
    if isinstance(sketch, KMinsSketch):
        return {
            "format": FORMAT, "version": VERSION, "kind": "k-mins", "k": sketch.k,
            "family": RankFamily.EXP.value,
            "total_weight": _hex(sketch.total_weight),
            "mins": [{"id": m.id, "weight": _hex(m.weight), "rank": _hex(m.rank),
                      "attributes": dict(m.attributes)} for m in sketch.mins],
        }
    return {
        "format": FORMAT, "version": VERSION, "kind": "bottom-k", "k": sketch.k,
        "family": sketch.family.value,
        "r_k_plus_1": _hex(sketch.r_k_plus_1),
        "total_weight": _hex(sketch.total_weight),
        "ground_set_size": sketch.ground_set_size,
        "entries": [{"id": e.id, "weight": _hex(e.weight), "rank": _hex(e.rank),
                     "attributes": dict(e.attributes)} for e in sketch.entries],
    }


def serialize_sketch(sketch) -> str:
    return json.dumps(sketch_to_dict(sketch), indent=1, sort_keys=True) + "\n"


def _entry_fields(raw, where):
    if not isinstance(raw, dict):
        raise SketchFormatError("entry must be an object", where)
    if not isinstance(raw.get("id"), str):
        raise SketchFormatError("missing or non-string id", where)
    weight = _unhex(raw.get("weight"), f"{where}.weight")
    if weight is None or not (weight > 0) or not math.isfinite(weight):
        raise SketchFormatError(f"weight must be positive, got {raw.get('weight')!r}",
                                f"{where}.weight")
    rank = _unhex(raw.get("rank"), f"{where}.rank")
    if rank is None or not (rank >= 0):
        raise SketchFormatError(f"rank must be nonnegative, got {raw.get('rank')!r}",
                                f"{where}.rank")
    attrs = raw.get("attributes", {})
    if not isinstance(attrs, dict) or not all(isinstance(v, str) for v in attrs.values()):
        raise SketchFormatError("attributes must map strings to strings", f"{where}.attributes")
    return raw["id"], weight, rank, attrs


def sketch_from_dict(doc: dict):
    if not isinstance(doc, dict):
        raise SketchFormatError("document must be an object", "$")
    if doc.get("format") != FORMAT:
        raise SketchFormatError(f"unknown format {doc.get('format')!r}", "format")
    if doc.get("version") != VERSION:
        raise SketchFormatError(f"unsupported version {doc.get('version')!r}", "version")
    k = doc.get("k")
    if not isinstance(k, int) or isinstance(k, bool) or k < 1:
        raise SketchFormatError(f"k must be a positive integer, got {k!r}", "k")
    total = _unhex(doc.get("total_weight"), "total_weight")
    kind = doc.get("kind")
    try:
        if kind == "k-mins":
            mins = doc.get("mins")
            if not isinstance(mins, list):
                raise SketchFormatError("missing list", "mins")
            out = []
            for j, raw in enumerate(mins):
                id_, w, r, attrs = _entry_fields(raw, f"mins[{j}]")
                out.append(KMinsEntry(r, id_, w, attrs))
            return KMinsSketch(k=k, mins=tuple(out), total_weight=total)
        if kind != "bottom-k":
            raise SketchFormatError(f"unknown kind {kind!r}", "kind")
        try:
            family = RankFamily.parse(doc.get("family"))
        except InputError as exc:
            raise SketchFormatError(str(exc), "family") from None
        entries = doc.get("entries")
        if not isinstance(entries, list):
            raise SketchFormatError("missing list", "entries")
        out = []
        for j, raw in enumerate(entries):
            id_, w, r, attrs = _entry_fields(raw, f"entries[{j}]")
            out.append(SketchEntry(id_, w, r, attrs))
        size = doc.get("ground_set_size")
        if size is not None and (not isinstance(size, int) or size < 0):
            raise SketchFormatError(f"bad ground_set_size {size!r}", "ground_set_size")
        return BottomKSketch(k=k, entries=tuple(out), family=family,
                             r_k_plus_1=_unhex(doc.get("r_k_plus_1"), "r_k_plus_1"),
                             total_weight=total, ground_set_size=size)
    except SketchFormatError:
        raise
    except InputError as exc:
        raise SketchFormatError(str(exc), "$") from None


def deserialize_sketch(text: str):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SketchFormatError(exc.msg, f"line {exc.lineno} column {exc.colno}") from None
    return sketch_from_dict(doc)


def read_sketch(path: str):
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    try:
        return deserialize_sketch(text)
    except SketchFormatError as exc:
        raise SketchFormatError(f"{path}: {exc}") from None


def write_sketch(sketch, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize_sketch(sketch))


def iter_items_csv(path: str) -> Iterator[WeightedItem]:
    """Stream items from a CSV with header ``id,weight,attr:<name>...``."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SketchFormatError("empty file", f"{path}:1") from None
        header = [h.strip() for h in header]
        if header[:2] != ["id", "weight"]:
            raise SketchFormatError("header must start with id,weight", f"{path}:1")
        attr_cols = []
        for col in header[2:]:
            if not col.startswith("attr:") or len(col) == 5:
                raise SketchFormatError(f"bad column {col!r}, expected attr:<name>", f"{path}:1")
            attr_cols.append(col[5:])
        seen = set()
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise SketchFormatError(f"expected {len(header)} fields, got {len(row)}",
                                        f"{path}:{line}")
            id_ = row[0].strip()
            if not id_:
                raise SketchFormatError("empty id", f"{path}:{line}")
            if id_ in seen:
                raise SketchFormatError(f"duplicate id {id_!r}", f"{path}:{line}")
            seen.add(id_)
            try:
                w = float(row[1])
            except ValueError:
                raise SketchFormatError(f"malformed weight {row[1]!r} for id {id_!r}",
                                        f"{path}:{line}") from None
            if not (w > 0) or not math.isfinite(w):
                raise SketchFormatError(f"weight must be positive, got {row[1]!r} for id {id_!r}",
                                        f"{path}:{line}")
            yield WeightedItem(id_, w, dict(zip(attr_cols, (c.strip() for c in row[2:]))))


def read_items_csv(path: str) -> list[WeightedItem]:
    return list(iter_items_csv(path))


def write_items_csv(items, path: str) -> None:
    names = sorted({name for it in items for name in it.attributes})
    with open(path, "w", newline="", encoding="utf-8") as fh:
        out = csv.writer(fh)
        out.writerow(["id", "weight"] + [f"attr:{n}" for n in names])
        for it in items:
            out.writerow([it.id, repr(it.weight)] + [it.attributes.get(n, "") for n in names])
