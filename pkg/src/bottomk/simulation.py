"""Monte Carlo experiments: estimator error over group partitions and
confidence-bound coverage and width.

A weight set is drawn once per experiment from the configured
distribution; repetitions redraw only the rank assignments.  Each
repetition owns a child random stream spawned from the seed, and uses one
rank assignment per family for every k (bottom-k sketches for smaller k
are prefixes of the largest one), so results do not depend on the number
of workers.
"""

from __future__ import annotations

import configparser
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from . import confidence as conf
from . import estimators as est
from .errors import CapabilityError, ConfigError, InputError
from .predicates import Predicate
from .ranks import RankFamily, make_rng, open_uniform, rank_from_uniform, spawn_rngs
from .sketch import (BottomKSketch, KMinsEntry, KMinsSketch, SketchEntry, WeightedItem,
                     truncate_sketch)

ESTIMATOR_NAMES = {
    "ws-rc": "WS rank conditioning",
    "pri-rc": "PRI rank conditioning",
    "ws-sc": "WS subset conditioning, Markov chain (inperm, permnum)",
    "ws-sc-exact": "WS subset conditioning, exact (k <= 20)",
    "ws-prefix": "WS prefix conditioning",
    "ws-ml": "WS maximum likelihood without total weight",
    "ws-ml-w": "WS maximum likelihood with total weight",
    "wsr": "k-mins unbiased total estimator (g = n only)",
    "wsr-ht": "k-mins HT subpopulation estimator with total weight",
    "wsr-ratio": "k-mins ratio subpopulation estimator with total weight",
}

BOUND_NAMES = {
    "ws-normal": "WS bounds, normal approximation, no total weight",
    "ws-quantile": "WS bounds, quantile method, no total weight",
    "ws-w": "WS subpopulation bounds using the total weight",
    "pri": "PRI Chernoff bounds",
    "wsr": "k-mins normal bounds (g = n only)",
}


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str = "estimators"
    distribution: str = "pareto"
    alpha: float = 1.2
    n: int = 1000
    k: tuple = (4, 16, 40, 100, 500)
    g: tuple = (1,)
    reps: int = 500
    estimators: tuple = ("ws-rc", "pri-rc", "ws-sc")
    bounds: tuple = ("ws-normal", "wsr", "pri")
    delta: float = 0.05
    inperm: int = 20
    permnum: int = 20
    draws: int = 200
    seed: int = 20240601
    workers: int = 1
    per_group_max: int = 64

    def validate(self) -> "ExperimentConfig":
        if self.experiment not in ("estimators", "bounds"):
            raise ConfigError(f"experiment must be 'estimators' or 'bounds', got {self.experiment!r}")
        if self.distribution not in ("pareto", "uniform"):
            raise ConfigError(f"distribution must be 'pareto' or 'uniform', got {self.distribution!r}")
        if self.distribution == "pareto" and not self.alpha > 0:
            raise ConfigError("alpha must be positive")
        if self.n < 1:
            raise ConfigError("n must be >= 1")
        if self.reps < 1:
            raise ConfigError("reps must be >= 1")
        if not self.k or any(k < 1 for k in self.k):
            raise ConfigError("k values must be positive")
        for g in self.g:
            if g < 1 or self.n % g:
                raise ConfigError(f"group size g={g} must divide n={self.n}")
        if not (0 < self.delta < 0.5):
            raise ConfigError("delta must be in (0, 0.5)")
        if self.inperm < 1 or self.permnum < 1 or self.draws < 1 or self.workers < 1:
            raise ConfigError("inperm, permnum, draws and workers must be >= 1")
        names = self.estimators if self.experiment == "estimators" else self.bounds
        valid = ESTIMATOR_NAMES if self.experiment == "estimators" else BOUND_NAMES
        kind = "estimator" if self.experiment == "estimators" else "bound method"
        for name in names:
            if name not in valid:
                raise ConfigError(f"unknown {kind} {name!r}; valid names: {', '.join(valid)}")
        if not names:
            raise ConfigError(f"no {kind}s configured")
        for name in names:
            if name == "wsr" and any(g != self.n for g in self.g):
                raise ConfigError("'wsr' applies to the total weight only; use g = n")
            if name == "ws-sc-exact" and max(self.k) > est.EXACT_SUBSET_LIMIT:
                raise ConfigError(f"'ws-sc-exact' needs k <= {est.EXACT_SUBSET_LIMIT}")
        return self


def _ints(text, n=None):
    out = []
    for part in str(text).replace(";", ",").split(","):
        part = part.strip()
        if not part:
            continue
        if part == "n" and n is not None:
            out.append(n)
        else:
            out.append(int(part))
    return tuple(out)


def _names(text):
    return tuple(p.strip() for p in str(text).replace(";", ",").split(",") if p.strip())


def parse_config(text: str, full_scale: bool = False) -> ExperimentConfig:
    """Parse ``key = value`` lines ('#' comments) into a validated config."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        parser.read_string("[experiment]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}") from None
    sec = parser["experiment"]
    known = set(ExperimentConfig.__dataclass_fields__)
    for key in sec:
        if key not in known:
            raise ConfigError(f"unknown config key {key!r}; valid keys: {', '.join(sorted(known))}")
    base = ExperimentConfig()
    try:
        n = sec.getint("n", fallback=20000 if full_scale else base.n)
        cfg = ExperimentConfig(
            experiment=sec.get("experiment", base.experiment).strip(),
            distribution=sec.get("distribution", base.distribution).strip(),
            alpha=sec.getfloat("alpha", fallback=base.alpha),
            n=n,
            k=_ints(sec["k"], n) if "k" in sec else base.k,
            g=_ints(sec["g"], n) if "g" in sec else (n,),
            reps=sec.getint("reps", fallback=1000 if full_scale else base.reps),
            estimators=_names(sec["estimators"]) if "estimators" in sec else base.estimators,
            bounds=_names(sec["bounds"]) if "bounds" in sec else base.bounds,
            delta=sec.getfloat("delta", fallback=base.delta),
            inperm=sec.getint("inperm", fallback=base.inperm),
            permnum=sec.getint("permnum", fallback=base.permnum),
            draws=sec.getint("draws", fallback=base.draws),
            seed=sec.getint("seed", fallback=base.seed),
            workers=sec.getint("workers", fallback=base.workers),
            per_group_max=sec.getint("per_group_max", fallback=base.per_group_max),
        )
    except ValueError as exc:
        raise ConfigError(f"bad config value: {exc}") from None
    return cfg.validate()


# ---------------------------------------------------------------- data

def gen_weights(distribution: str, n: int, rng, alpha: float = 1.2) -> np.ndarray:
    """Pareto (x_min = 1, via u^(-1/alpha)) or uniform (0, 1] weights."""
    if n < 1:
        raise InputError("n must be >= 1")
    u = open_uniform(rng, n)
    if distribution == "pareto":
        if not alpha > 0:
            raise InputError("alpha must be positive")
        return u ** (-1.0 / alpha)
    if distribution == "uniform":
        return 1.0 - u + np.finfo(float).tiny  # (0, 1]
    raise InputError(f"unknown distribution {distribution!r}")


def group_index(weights, g: int) -> np.ndarray:
    """Group of each item when items are sorted by weight and chunked by g."""
    w = np.asarray(weights, dtype=float)
    n = w.size
    if g < 1 or n % g:
        raise InputError(f"group size g={g} must divide n={n}")
    order = np.lexsort((np.arange(n), w))
    out = np.empty(n, dtype=np.int64)
    out[order] = np.arange(n) // g
    return out


def gen_weighted_set(distribution: str, n: int, rng, alpha: float = 1.2,
                     group_sizes: Sequence[int] = ()) -> list[WeightedItem]:
    """Items '0'..'n-1' with attribute 'g<size>' holding the group index."""
    w = gen_weights(distribution, n, rng, alpha)
    groups = {g: group_index(w, g) for g in group_sizes}
    return [WeightedItem(str(i), float(w[i]), {f"g{g}": str(int(gi[i])) for g, gi in groups.items()})
            for i in range(n)]


def group_partition(items: Sequence[WeightedItem], g: int) -> list[Predicate]:
    """Membership predicates of the weight-sorted chunks of size g."""
    gi = group_index([it.weight for it in items], g)
    members = [[] for _ in range(len(items) // g)]
    for it, j in zip(items, gi):
        members[j].append(it.id)
    return [Predicate.members(m, f"g{g}={j}") for j, m in enumerate(members)]


# ---------------------------------------------------------------- repetitions

def _sorted_sketch(w, ids, family, rng, kmax, W):
    """Bottom-kmax sketch (entries carry the item index as id) plus order."""
    n = w.size
    ranks = np.asarray(rank_from_uniform(open_uniform(rng, n), w, family), dtype=float)
    m = min(kmax + 1, n)
    part = np.argpartition(ranks, m - 1)[:m] if m < n else np.arange(n)
    order = part[np.lexsort((part, ranks[part]))]
    entries = tuple(SketchEntry(ids[i], float(w[i]), float(ranks[i])) for i in order[:kmax])
    r_next = float(ranks[order[kmax]]) if n > kmax else None
    return BottomKSketch(k=kmax, entries=entries, family=RankFamily.parse(family),
                         r_k_plus_1=r_next, total_weight=W, ground_set_size=n)


def _kmins(w, ids, k, rng, W):
    cum = np.cumsum(w)
    idx = np.minimum(np.searchsorted(cum, open_uniform(rng, k) * cum[-1], side="right"), w.size - 1)
    r = rng.standard_exponential(k) / W
    return KMinsSketch(k=k, mins=tuple(KMinsEntry(float(r[j]), ids[i], float(w[i]))
                                       for j, i in enumerate(idx)), total_weight=W)


def _entry_index(sketch):
    return np.array([int(e.id) for e in sketch.entries], dtype=np.int64)


def _estimate_groups(name, sketch_by_family, kmins, k, W, gidx, ngroups, cfg, rng):
    """Per-group estimates for one estimator at one k."""
    if name in ("wsr", "wsr-ht", "wsr-ratio"):
        km = kmins[k]
        if name == "wsr":
            return np.array([est.wsr_total_weight(km, "unbiased" if k >= 2 else "ml")])
        idx = np.array([int(m.id) for m in km.mins])
        out = np.zeros(ngroups)
        if name == "wsr-ratio":
            np.add.at(out, gidx[idx], W / k)
            return out
        uniq = np.unique(idx)
        wts = {int(m.id): m.weight for m in km.mins}
        wu = np.array([wts[i] for i in uniq])
        p = -np.expm1(k * np.log1p(-np.minimum(wu / W, 1.0)))
        np.add.at(out, gidx[uniq], wu / p)
        return out
    family = RankFamily.PRI if name == "pri-rc" else RankFamily.EXP
    sk = truncate_sketch(sketch_by_family[family], k)
    idx = _entry_index(sk)
    if name in ("ws-ml", "ws-ml-w"):
        out = np.zeros(ngroups)
        for j in range(ngroups):
            members = set(np.flatnonzero(gidx == j).tolist())
            pred = lambda e, m=members: int(e.id) in m  # noqa: E731
            if name == "ws-ml":
                out[j] = est.ml_subpop(sk, pred)
            else:
                out[j] = est.ml_subpop_with_total(sk, pred, W)
        return out
    if name in ("ws-rc", "pri-rc"):
        a = est.rc_adjusted_weights(sk).as_array()
    elif name == "ws-sc":
        a = est.sc_adjusted_weights_markov(sk, W, est.ScParams(cfg.inperm, cfg.permnum), rng).as_array()
    elif name == "ws-sc-exact":
        a = est.sc_adjusted_weights_exact(sk, W).as_array()
    elif name == "ws-prefix":
        a = est.prefix_adjusted_weights(sk, W).as_array()
    else:  # pragma: no cover - validated earlier
        raise ConfigError(name)
    return np.bincount(gidx[idx], weights=a, minlength=ngroups)


def _bounds_groups(name, sketch_by_family, kmins, k, W, gidx, ngroups, g, n, cfg, rng):
    """Per-group (lower, upper) arrays for one bound method at one k."""
    lo = np.empty(ngroups)
    hi = np.empty(ngroups)
    if name == "wsr":
        ci = conf.wsr_bounds_total(kmins[k], cfg.delta)
        return np.array([ci.lower]), np.array([ci.upper])
    family = RankFamily.PRI if name == "pri" else RankFamily.EXP
    sk = truncate_sketch(sketch_by_family[family], k)
    for j in range(ngroups):
        if g == n:
            pred = None
        else:
            members = set(np.flatnonzero(gidx == j).tolist())
            pred = lambda e, m=members: int(e.id) in m  # noqa: E731
        if name == "pri":
            ci = conf.pri_bounds_subpop(sk, pred, cfg.delta)
        elif name in ("ws-normal", "ws-quantile"):
            method = name.split("-")[1]
            if g == n:
                ci = conf.ws_bounds_total(sk, cfg.delta, method, cfg.draws, rng)
            else:
                ci = conf.ws_bounds_subpop(sk, pred, cfg.delta, method, cfg.draws, rng)
        elif name == "ws-w":
            ci = conf.ws_bounds_subpop_with_total(sk, pred, W, cfg.delta, cfg.draws, rng)
        else:  # pragma: no cover
            raise ConfigError(name)
        lo[j], hi[j] = ci.lower, ci.upper
    return lo, hi


def _families_needed(cfg):
    names = cfg.estimators if cfg.experiment == "estimators" else cfg.bounds
    fams = set()
    for name in names:
        if name.startswith("pri"):
            fams.add(RankFamily.PRI)
        elif name.startswith("ws-"):
            fams.add(RankFamily.EXP)
    need_kmins = any(name.startswith("wsr") for name in names)
    return sorted(fams, key=lambda f: f.value), need_kmins


def _one_rep(args):
    cfg, w, groups, seed_seq = args
    rng = np.random.Generator(np.random.Philox(seed_seq))
    n = w.size
    W = float(math.fsum(w))
    ids = [str(i) for i in range(n)]
    kmax = max(cfg.k)
    fams, need_kmins = _families_needed(cfg)
    sketches = {f: _sorted_sketch(w, ids, f, rng, kmax, W) for f in fams}
    kmins = {k: _kmins(w, ids, k, rng, W) for k in cfg.k} if need_kmins else {}
    out = {}
    names = cfg.estimators if cfg.experiment == "estimators" else cfg.bounds
    for name in names:
        for k in cfg.k:
            for g in cfg.g:
                gidx = groups[g]
                ngroups = n // g
                if cfg.experiment == "estimators":
                    out[(name, k, g)] = _estimate_groups(name, sketches, kmins, k, W, gidx,
                                                         ngroups, cfg, rng)
                else:
                    out[(name, k, g)] = _bounds_groups(name, sketches, kmins, k, W, gidx,
                                                       ngroups, g, n, cfg, rng)
    return out


# ---------------------------------------------------------------- aggregation

@dataclass
class MetricsTable:
    """Rows (method, k, g, group, metric, value, reps); group 'all' is the
    cross-group aggregate."""

    config: ExperimentConfig
    rows: list = field(default_factory=list)

    def add(self, method, k, g, group, metric, value, reps):
        self.rows.append((method, int(k), int(g), str(group), metric, float(value), int(reps)))

    def get(self, method, k, g, metric, group="all") -> float:
        for row in self.rows:
            if row[:5] == (method, k, g, str(group), metric):
                return row[5]
        raise KeyError((method, k, g, group, metric))

    def to_csv(self) -> str:
        buf = io.StringIO()
        c = self.config
        buf.write(f"# experiment={c.experiment} distribution={c.distribution} alpha={c.alpha!r} "
                  f"n={c.n} reps={c.reps} delta={c.delta!r} inperm={c.inperm} "
                  f"permnum={c.permnum} draws={c.draws} seed={c.seed}\n")
        buf.write("# columns: method = estimator or bound method; k = sketch size; "
                  "g = group size; group = group index (0 = lightest) or 'all' for the "
                  "cross-group aggregate; metric = see below; value; reps = repetitions\n")
        if c.experiment == "estimators":
            buf.write("# metrics: sse = sum over groups of squared error, averaged over reps; "
                      "sse_normalized = sse / w(I)^2; mean_abs_rel_err = mean of "
                      "|estimate - w(G)| / w(G); mse = mean squared error of one group\n")
        else:
            buf.write("# metrics: lower_norm, upper_norm = bound / w(G); width_norm = "
                      "(upper - lower) / w(G); in_bounds_rate; below_rate = P(w(G) < lower); "
                      "above_rate = P(w(G) > upper)\n")
        buf.write("method,k,g,group,metric,value,reps\n")
        for method, k, g, group, metric, value, reps in self.rows:
            buf.write(f"{method},{k},{g},{group},{metric},{value!r},{reps}\n")
        return buf.getvalue()


def _run(cfg: ExperimentConfig) -> tuple:
    cfg.validate()
    root = np.random.SeedSequence(cfg.seed)
    data_seq, rep_seq = root.spawn(2)
    w = gen_weights(cfg.distribution, cfg.n, np.random.Generator(np.random.Philox(data_seq)),
                    cfg.alpha)
    groups = {g: group_index(w, g) for g in cfg.g}
    jobs = [(cfg, w, groups, s) for s in rep_seq.spawn(cfg.reps)]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_one_rep, jobs, chunksize=max(1, cfg.reps // (4 * cfg.workers))))
    else:
        results = [_one_rep(j) for j in jobs]
    return w, groups, results


def _truth(w, gidx, ngroups):
    return np.bincount(gidx, weights=w, minlength=ngroups)


def run_estimator_experiment(cfg: ExperimentConfig) -> MetricsTable:
    if cfg.experiment != "estimators":
        cfg = replace(cfg, experiment="estimators")
    w, groups, results = _run(cfg)
    W = float(math.fsum(w))
    table = MetricsTable(cfg)
    R = len(results)
    for name in cfg.estimators:
        for k in cfg.k:
            for g in cfg.g:
                ngroups = cfg.n // g
                truth = _truth(w, groups[g], ngroups)
                if name == "wsr":
                    truth = np.array([W])
                E = np.array([r[(name, k, g)] for r in results])
                err = E - truth
                sse = float(np.mean(np.sum(err ** 2, axis=1)))
                table.add(name, k, g, "all", "sse", sse, R)
                table.add(name, k, g, "all", "sse_normalized", sse / W ** 2, R)
                table.add(name, k, g, "all", "mean_abs_rel_err",
                          float(np.mean(np.abs(err) / truth)), R)
                if truth.size <= cfg.per_group_max and truth.size > 1:
                    for j in range(truth.size):
                        table.add(name, k, g, j, "mean_abs_rel_err",
                                  float(np.mean(np.abs(err[:, j]) / truth[j])), R)
                        table.add(name, k, g, j, "mse", float(np.mean(err[:, j] ** 2)), R)
    return table


def run_bounds_experiment(cfg: ExperimentConfig) -> MetricsTable:
    if cfg.experiment != "bounds":
        cfg = replace(cfg, experiment="bounds")
    w, groups, results = _run(cfg)
    W = float(math.fsum(w))
    table = MetricsTable(cfg)
    R = len(results)
    for name in cfg.bounds:
        for k in cfg.k:
            for g in cfg.g:
                ngroups = cfg.n // g
                truth = _truth(w, groups[g], ngroups) if name != "wsr" else np.array([W])
                lo = np.array([r[(name, k, g)][0] for r in results])
                hi = np.array([r[(name, k, g)][1] for r in results])
                below = truth < lo
                above = truth > hi
                per = {
                    "lower_norm": lo / truth, "upper_norm": hi / truth,
                    "width_norm": (hi - lo) / truth,
                    "in_bounds_rate": (~below & ~above).astype(float),
                    "below_rate": below.astype(float), "above_rate": above.astype(float),
                }
                for metric, vals in per.items():
                    table.add(name, k, g, "all", metric, float(np.mean(vals)), R)
                if 1 < truth.size <= cfg.per_group_max:
                    for j in range(truth.size):
                        for metric, vals in per.items():
                            table.add(name, k, g, j, metric, float(np.mean(vals[:, j])), R)
    return table


def run_experiment(cfg: ExperimentConfig) -> MetricsTable:
    if cfg.experiment == "bounds":
        return run_bounds_experiment(cfg)
    return run_estimator_experiment(cfg)
