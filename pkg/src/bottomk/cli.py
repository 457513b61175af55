"""Command-line interface: ``bottomk {sketch,merge,estimate,bounds,simulate}``.

Exit codes: 0 ok, 2 input error, 3 estimator/sketch mismatch, 4 config error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys

from . import confidence as conf
from . import estimators as est
from .errors import (BottomKError, CapabilityError, ConfigError, InputError,
                     SketchStateError)
from .io import iter_items_csv, read_items_csv, read_sketch, serialize_sketch, write_sketch
from .predicates import Predicate
from .ranks import RankFamily, make_rng
from .simulation import parse_config, run_experiment
from .sketch import (BottomKSketch, KMinsSketch, build_bottom_k, build_bottom_k_stream,
                     build_k_mins, merge_sketches)

DEFAULT_SEED = 12345

EXIT_OK, EXIT_INPUT, EXIT_CAPABILITY, EXIT_CONFIG = 0, 2, 3, 4

CLI_ESTIMATORS = ("rc", "ws-rc", "pri-rc", "sc", "sc-markov", "prefix", "ml", "ml-w",
                  "wsr", "wsr-ht", "wsr-ratio")
CLI_BOUNDS = ("ws-normal", "ws-quantile", "ws-density", "ws-total", "pri", "wsr")


def _fmt(x):
    if x is None:
        return "none"
    return repr(float(x))


def cmd_sketch(args) -> int:
    rng = make_rng(args.seed)
    if args.family == "wsr":
        sk = build_k_mins(read_items_csv(args.input), args.k, rng)
        write_sketch(sk, args.out)
        print(f"kind=k-mins k={sk.k} w(I)={_fmt(sk.total_weight)}")
        return EXIT_OK
    family = RankFamily.parse(args.family)
    if args.stream:
        sk = build_bottom_k_stream(iter_items_csv(args.input), args.k, family, rng)
    else:
        sk = build_bottom_k(read_items_csv(args.input), args.k, family, rng)
    write_sketch(sk, args.out)
    print(f"kind=bottom-k family={family.value} k={sk.k} |I|={sk.ground_set_size} "
          f"entries={len(sk)} w(I)={_fmt(sk.total_weight)} r_k_plus_1={_fmt(sk.r_k_plus_1)}")
    return EXIT_OK


def cmd_merge(args) -> int:
    sketches = [read_sketch(p) for p in args.inputs]
    if any(not isinstance(s, BottomKSketch) for s in sketches):
        raise CapabilityError("only bottom-k sketches can be merged")
    out = sketches[0]
    k = args.k
    if k is None:
        non_exact = [s.k for s in sketches if not s.is_exact]
        k = min(non_exact) if non_exact else min(s.k for s in sketches)
    out = merge_sketches(out, BottomKSketch.empty(k, out.family), k)
    for s in sketches[1:]:
        out = merge_sketches(out, s, k)
    write_sketch(out, args.out)
    print(f"kind=bottom-k family={out.family.value} k={out.k} entries={len(out)} "
          f"w(I)={_fmt(out.total_weight)} r_k_plus_1={_fmt(out.r_k_plus_1)}")
    return EXIT_OK


def _total(args, sketch):
    if args.total_weight is not None:
        return args.total_weight
    return sketch.total_weight


def _need_bottom_k(sketch, what):
    if not isinstance(sketch, BottomKSketch):
        raise CapabilityError(f"{what} needs a bottom-k sketch, got a k-mins sketch")


def _need_kmins(sketch, what):
    if not isinstance(sketch, KMinsSketch):
        raise CapabilityError(f"{what} needs a k-mins sketch (build with --family wsr)")


def cmd_estimate(args) -> int:
    sketch = read_sketch(args.sketch)
    pred = Predicate.parse(args.predicate)
    name = args.estimator
    W = _total(args, sketch)
    if name.startswith("wsr"):
        _need_kmins(sketch, name)
        if name == "wsr":
            value = est.wsr_total_weight(sketch, args.form)
        else:
            if W is None:
                raise CapabilityError(f"{name} needs the total weight (--total-weight)")
            value = est.wsr_subpop_with_total(sketch, pred, W, name.split("-")[1])
    else:
        _need_bottom_k(sketch, name)
        if name in ("sc", "sc-markov", "prefix", "ml-w") and W is None:
            raise CapabilityError(f"{name} needs the total weight: the sketch has none, "
                                  f"pass --total-weight")
        if name == "rc":
            value = est.rc_adjusted_weights(sketch).estimate(pred)
        elif name in ("ws-rc", "pri-rc"):
            want = RankFamily.EXP if name == "ws-rc" else RankFamily.PRI
            if sketch.family is not want:
                raise CapabilityError(f"{name} needs a {want.value} sketch, got {sketch.family.value}")
            value = est.rc_adjusted_weights(sketch).estimate(pred)
        elif name == "sc":
            value = est.sc_adjusted_weights_exact(sketch, W).estimate(pred)
        elif name == "sc-markov":
            params = est.ScParams(args.inperm, args.permnum)
            value = est.sc_adjusted_weights_markov(sketch, W, params, make_rng(args.seed)).estimate(pred)
        elif name == "prefix":
            value = est.prefix_adjusted_weights(sketch, W).estimate(pred)
        elif name == "ml":
            value = est.ml_subpop(sketch, pred) if args.predicate.strip() not in ("*", "all", "") \
                else est.ml_total_weight(sketch)
        else:
            value = est.ml_subpop_with_total(sketch, pred, W)
    record = {"command": "estimate", "method": name, "estimate": value,
              "predicate": args.predicate, "k": sketch.k,
              "family": "wsr" if isinstance(sketch, KMinsSketch) else sketch.family.value,
              "total_weight": W}
    print(json.dumps(record, sort_keys=True))
    return EXIT_OK


def cmd_bounds(args) -> int:
    sketch = read_sketch(args.sketch)
    pred = Predicate.parse(args.predicate)
    everything = args.predicate.strip().lower() in ("*", "all", "true", "")
    method = args.method
    W = _total(args, sketch)
    rng = make_rng(args.seed)
    if method == "wsr":
        _need_kmins(sketch, method)
        if not everything:
            raise CapabilityError("k-mins bounds cover the total weight only")
        ci = conf.wsr_bounds_total(sketch, args.delta)
    else:
        _need_bottom_k(sketch, method)
        if method == "pri":
            ci = conf.pri_bounds_subpop(sketch, pred, args.delta)
        elif method in ("ws-normal", "ws-quantile"):
            kind = method.split("-")[1]
            if everything:
                ci = conf.ws_bounds_total(sketch, args.delta, kind, args.draws, rng)
            else:
                ci = conf.ws_bounds_subpop(sketch, pred, args.delta, kind, args.draws, rng)
        elif method == "ws-density":
            if not everything:
                raise CapabilityError("the density method bounds the total weight only")
            ci = conf.ws_bounds_total(sketch, args.delta, "density")
        else:
            if W is None:
                raise CapabilityError("ws-total needs the total weight (--total-weight)")
            ci = conf.ws_bounds_subpop_with_total(sketch, pred, W, args.delta, args.draws, rng)
    record = {"command": "bounds", "method": method, "lower": ci.lower, "upper": ci.upper,
              "delta": ci.delta, "confidence": 1 - 2 * ci.delta, "predicate": args.predicate,
              "draws": args.draws, "total_weight": W}
    print(json.dumps(record, sort_keys=True))
    return EXIT_OK


def cmd_simulate(args) -> int:
    try:
        with open(args.config, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {args.config}: {exc.strerror}") from None
    cfg = parse_config(text, full_scale=args.full_scale)
    if args.workers is not None:
        from dataclasses import replace
        cfg = replace(cfg, workers=args.workers).validate()
    csv_text = run_experiment(cfg).to_csv()
    if args.out in (None, "-"):
        sys.stdout.write(csv_text)
    else:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(csv_text)
    return EXIT_OK


def _positive_float(text):
    v = float(text)
    if not (v > 0) or not math.isfinite(v):
        raise argparse.ArgumentTypeError(f"must be positive, got {text!r}")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bottomk", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("sketch", help="build a sketch from a CSV file")
    s.add_argument("input", help="CSV with header id,weight,attr:<name>...")
    s.add_argument("-k", type=int, required=True)
    s.add_argument("--family", default="ws", choices=["ws", "pri", "uniform", "wsr"],
                   help="rank family; wsr builds a k-mins sketch")
    s.add_argument("--stream", action="store_true", help="one-pass stream builder")
    s.add_argument("--seed", type=int, default=DEFAULT_SEED)
    s.add_argument("-o", "--out", required=True)
    s.set_defaults(func=cmd_sketch)

    m = sub.add_parser("merge", help="merge sketches of disjoint sets")
    m.add_argument("inputs", nargs="+")
    m.add_argument("-k", type=int, default=None)
    m.add_argument("-o", "--out", required=True)
    m.set_defaults(func=cmd_merge)

    e = sub.add_parser("estimate", help="estimate a subpopulation weight")
    e.add_argument("sketch")
    e.add_argument("--estimator", required=True, choices=CLI_ESTIMATORS)
    e.add_argument("--predicate", default="*")
    e.add_argument("--total-weight", type=_positive_float, default=None)
    e.add_argument("--form", default="unbiased", choices=["unbiased", "ml", "inverse"],
                   help="k-mins total estimator form")
    e.add_argument("--inperm", type=int, default=20)
    e.add_argument("--permnum", type=int, default=20)
    e.add_argument("--seed", type=int, default=DEFAULT_SEED)
    e.set_defaults(func=cmd_estimate)

    b = sub.add_parser("bounds", help="confidence bounds on a subpopulation weight")
    b.add_argument("sketch")
    b.add_argument("--method", required=True, choices=CLI_BOUNDS)
    b.add_argument("--predicate", default="*")
    b.add_argument("--delta", type=float, default=0.05, help="error probability per side")
    b.add_argument("--total-weight", type=_positive_float, default=None)
    b.add_argument("--draws", type=int, default=conf.DEFAULT_DRAWS)
    b.add_argument("--seed", type=int, default=DEFAULT_SEED)
    b.set_defaults(func=cmd_bounds)

    r = sub.add_parser("simulate", help="run an experiment config, write metrics CSV")
    r.add_argument("config")
    r.add_argument("-o", "--out", default=None)
    r.add_argument("--workers", type=int, default=None)
    r.add_argument("--full-scale", action="store_true",
                   help="default n=20000 and reps=1000 unless set in the config")
    r.set_defaults(func=cmd_simulate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"bottomk: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (CapabilityError, SketchStateError) as exc:
        print(f"bottomk: {exc}", file=sys.stderr)
        return EXIT_CAPABILITY
    except (InputError, OSError) as exc:
        print(f"bottomk: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except BottomKError as exc:
        print(f"bottomk: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
