"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

All randomness comes from fixed seeds derived from SEED; the seeds were
fixed before the first run and are not tuned.
"""

import itertools
import math
import time
from collections import Counter

import mpmath as mp
import numpy as np
import pytest
from scipy import stats
from scipy.integrate import quad

import oracles
from bottomk import estimators as est
from bottomk.ranks import RankFamily, make_rng
from bottomk.simulation import ExperimentConfig, gen_weights, run_bounds_experiment, run_estimator_experiment
from bottomk.sketch import (BottomKSketch, SketchEntry, WeightedItem, build_bottom_k,
                            build_bottom_k_stream, build_k_mins, merge_sketches,
                            sample_bottom_k_batch, sketch_from_ranks)

SEED = 20240601
SIX = np.array([1.0, 1.5, 2.0, 3.0, 5.0, 8.0])
Z99 = 2.576


def items_of(weights, tag="i"):
    return [WeightedItem(f"{tag}{j}", float(x)) for j, x in enumerate(weights)]


def place(idx, a, n):
    """Scatter per-entry adjusted weights into a (trials, n) per-item matrix."""
    out = np.zeros((idx.shape[0], n))
    np.put_along_axis(out, idx, a, axis=1)
    return out


def next_rank_density(prefix_weights, W):
    """Density of r_{k+1} given an ordered prefix: a sum of k+1 exponentials
    with rates W - s_j.  Partial fractions cancel badly near zero, so there
    the power series prod(rates) sum_m (-1)^m h_m x^(k+m) / (k+m)! is used,
    with h_m the complete homogeneous symmetric polynomials of the rates."""
    rates = W - np.concatenate([[0.0], np.cumsum(prefix_weights)])
    k = rates.size - 1
    c = np.array([float(x) for x in oracles.hypoexp_coeffs([mp.mpf(r) for r in rates])])
    cl = c * rates
    h = np.zeros(80)
    h[0] = 1.0
    for lam in rates:
        for m in range(1, h.size):
            h[m] += lam * h[m - 1]
    m = np.arange(h.size)
    coef = float(np.prod(rates)) * (-1.0) ** m * h / np.array([math.factorial(k + j) for j in m],
                                                             dtype=float)
    cut = 1.0 / rates.max()

    def density(x):
        if x <= cut:
            return float(x ** k * np.polynomial.polynomial.polyval(x, coef))
        return float(np.dot(cl, np.exp(-rates * x)))
    return density


def expect_over_next_rank(fun, density):
    g = lambda r: fun(r) * density(r)  # noqa: E731
    head, _ = quad(g, 0, 1, epsabs=0, epsrel=1e-12, limit=400)
    tail, _ = quad(g, 1, np.inf, epsabs=0, epsrel=1e-12, limit=400)
    return head + tail


def ws_rc_exact_moments(weights, k, second=True):
    """Exact E[a(i)], E[a(i)^2] and E[a(i) a(j)] for the package's WS-RC weights,
    enumerating ordered k-prefixes and integrating over r_{k+1}.  Second
    moments are infinite for k=1 and skipped unless ``second``."""
    n = len(weights)
    W = float(sum(weights))
    m1, m2, cross = np.zeros(n), np.zeros(n), np.zeros((n, n))
    for perm, p in oracles.ordered_prefixes(list(weights), k):
        p = float(p)
        seq = np.array([weights[i] for i in perm])
        dens = next_rank_density(seq, W)
        for a, i in enumerate(perm):
            wi = seq[a]
            m1[i] += p * expect_over_next_rank(lambda r: float(est.rc_weights(wi, r, "ws")), dens)
            if not second:
                continue
            m2[i] += p * expect_over_next_rank(lambda r: float(est.rc_weights(wi, r, "ws")) ** 2,
                                               dens)
            for b in range(a + 1, len(perm)):
                wj, j = seq[b], perm[b]
                v = p * expect_over_next_rank(
                    lambda r: float(est.rc_weights(wi, r, "ws") * est.rc_weights(wj, r, "ws")), dens)
                cross[i, j] += v
                cross[j, i] += v
    return m1, m2, cross


def batch_exact_moments(weights, k, batch_fn):
    """Exact moments for SC or prefix weights computed by the package's batch
    kernels over every ordered k-prefix."""
    n = len(weights)
    W = float(sum(weights))
    perms, probs = zip(*oracles.ordered_prefixes(list(weights), k))
    perms = np.array(perms)
    probs = np.array([float(p) for p in probs])
    A = place(perms, batch_fn(np.asarray(weights)[perms], W), n)
    m1 = probs @ A
    cross = (A * probs[:, None]).T @ A
    return m1, np.diag(cross).copy(), cross


# ---------------------------------------------------------------- 1

def test_c1_wsr_error_law(criterion):
    w = gen_weights("pareto", 1000, make_rng(SEED), alpha=1.2)
    items = items_of(w)
    W = math.fsum(w)
    rng = make_rng(SEED + 1)
    t0 = time.time()
    errs = np.array([abs(est.wsr_total_weight(build_k_mins(items, 100, rng)) / W - 1)
                     for _ in range(10_000)])
    elapsed = time.time() - t0
    target = math.sqrt(2 / (math.pi * 98))
    ok = abs(errs.mean() / target - 1) <= 0.10 and elapsed < 30
    criterion(1, ok, f"WSR mean |rel err| {errs.mean():.5f} vs {target:.5f} "
                     f"(ratio {errs.mean() / target:.3f}), {elapsed:.1f}s")
    assert ok


# ---------------------------------------------------------------- 2 and 6

@pytest.fixture(scope="module")
def ten_item_runs():
    w = gen_weights("pareto", 10, make_rng(SEED + 2), alpha=1.2)
    W = float(math.fsum(w))
    k, T = 4, 100_000
    t0 = time.time()
    idx, r = sample_bottom_k_batch(w, k, "ws", T, make_rng(SEED + 3))
    rows = w[idx]
    mats = {
        "WS-RC": place(idx, est.rc_weights(rows, r[:, [k]], "ws"), w.size),
        "SC-exact": place(idx, est.sc_exact_weights_batch(rows, W), w.size),
        "SC-markov(1,1)": place(idx, est.sc_markov_weights_batch(rows, W, est.ScParams(1, 1),
                                                                  make_rng(SEED + 4)), w.size),
        "prefix": place(idx, est.prefix_weights_batch(rows, W), w.size),
    }
    pidx, pr = sample_bottom_k_batch(w, k, "pri", T, make_rng(SEED + 5))
    mats["PRI-RC"] = place(pidx, est.rc_weights(w[pidx], pr[:, [k]], "pri"), w.size)
    return w, mats, time.time() - t0


def test_c2_unbiasedness_suite(criterion, ten_item_runs):
    w, mats, elapsed = ten_item_runs
    worst = {}
    for name, A in mats.items():
        se = A.std(axis=0, ddof=1) / math.sqrt(A.shape[0])
        worst[name] = float(np.max(np.abs(A.mean(axis=0) - w) / se))
    ok = max(worst.values()) <= 3.0 and elapsed < 120
    detail = ", ".join(f"{k} {v:.2f}" for k, v in worst.items())
    criterion(2, ok, f"max |mean - w|/SE per estimator: {detail}; {elapsed:.1f}s")
    assert ok


# ---------------------------------------------------------------- 3

EXACT_CASES = [(SIX, 1), (SIX, 3), (SIX, 5)] + [
    (np.random.default_rng(SEED + n).pareto(1.2, n) + 1, k) for n in (3, 4, 5) for k in range(1, n)]


def test_c3_exact_oracle(criterion):
    worst_rc = worst_sc = 0.0
    for w, k in EXACT_CASES:
        m1, _, _ = ws_rc_exact_moments(w, k, second=False)
        worst_rc = max(worst_rc, float(np.max(np.abs(m1 - w) / w)))
        s1, _, _ = batch_exact_moments(w, k, est.sc_exact_weights_batch)
        worst_sc = max(worst_sc, float(np.max(np.abs(s1 - w) / w)))
    ok = worst_rc <= 1e-9 and worst_sc <= 1e-9
    criterion(3, ok, f"{len(EXACT_CASES)} instances, max rel |E[a]-w|: RC {worst_rc:.2e}, "
                     f"SC {worst_sc:.2e}")
    assert ok


# ---------------------------------------------------------------- 4

def test_c4_sc_total_zero_variance(criterion):
    rng = make_rng(SEED + 6)
    worst = 0.0
    for _ in range(1000):
        n = int(rng.integers(2, 80))
        k = int(rng.integers(1, min(20, n - 1) + 1))
        w = rng.pareto(rng.uniform(0.8, 2.5), n) + 1
        sk = build_bottom_k(items_of(w), k, "ws", rng)
        W = math.fsum(w)
        worst = max(worst, abs(est.sc_adjusted_weights_exact(sk, W).estimate() - W) / W)
    ok = worst <= 1e-9
    criterion(4, ok, f"1000 instances, max |sum SC - W|/W = {worst:.2e}")
    assert ok


# ---------------------------------------------------------------- 5 and 6

@pytest.fixture(scope="module")
def six_item_runs():
    W = float(SIX.sum())
    k, T = 3, 1_000_000
    idx, r = sample_bottom_k_batch(SIX, k, "ws", T, make_rng(SEED + 7))
    rows = SIX[idx]
    return {"RC": place(idx, est.rc_weights(rows, r[:, [k]], "ws"), SIX.size),
            "SC": place(idx, est.sc_exact_weights_batch(rows, W), SIX.size)}


def pair_covariances(A):
    Ac = A - A.mean(axis=0)
    out = {}
    for i, j in itertools.combinations(range(A.shape[1]), 2):
        prod = Ac[:, i] * Ac[:, j]
        out[(i, j)] = (prod.mean(), prod.std(ddof=1) / math.sqrt(prod.size))
    return out


def test_c5_covariance_signs(criterion, six_item_runs):
    rc = pair_covariances(six_item_runs["RC"])
    sc = pair_covariances(six_item_runs["SC"])
    rc_ok = [abs(c) <= Z99 * se for c, se in rc.values()]
    sc_ok = [c + Z99 * se < 0 for c, se in sc.values()]
    # exact covariances by enumeration, as a noise-free companion check
    m1, _, cross = ws_rc_exact_moments(SIX, 3)
    exact_rc = cross - np.outer(m1, m1)
    s1, _, scross = batch_exact_moments(SIX, 3, est.sc_exact_weights_batch)
    exact_sc = scross - np.outer(s1, s1)
    iu = np.triu_indices(SIX.size, 1)
    exact_ok = (np.max(np.abs(exact_rc[iu]) / np.outer(SIX, SIX)[iu]) <= 1e-9
                and np.all(exact_sc[iu] < 0))
    ok = all(rc_ok) and all(sc_ok) and exact_ok
    worst_rc = max(abs(c) / se for c, se in rc.values())
    worst_sc = max((c + Z99 * se) for c, se in sc.values())
    criterion(5, ok, f"RC bands containing 0: {sum(rc_ok)}/15 (max |cov|/SE {worst_rc:.2f}); "
                     f"SC negative at 99%: {sum(sc_ok)}/15 (max upper end {worst_sc:.3g}); "
                     f"exact RC max |cov| {np.max(np.abs(exact_rc[iu])):.1e}, "
                     f"exact SC max cov {np.max(exact_sc[iu]):.3g}")
    assert ok


def test_c6_variance_ordering(criterion, ten_item_runs, six_item_runs):
    _, mats, _ = ten_item_runs
    v = {name: mats[name].var(axis=0, ddof=1) for name in ("SC-exact", "prefix", "WS-RC")}
    per_item = bool(np.all(v["SC-exact"] <= v["prefix"]) and np.all(v["prefix"] <= v["WS-RC"]))
    # exact per-item variances on the 6-item instance
    _, rc2, _ = ws_rc_exact_moments(SIX, 3)
    _, sc2, _ = batch_exact_moments(SIX, 3, est.sc_exact_weights_batch)
    _, px2, _ = batch_exact_moments(SIX, 3, est.prefix_weights_batch)
    exact = bool(np.all(sc2 <= px2 * (1 + 1e-12)) and np.all(px2 <= rc2 * (1 + 1e-12)))
    rc, sc = six_item_runs["RC"], six_item_runs["SC"]
    bad = []
    for size in range(1, SIX.size + 1):
        for subset in itertools.combinations(range(SIX.size), size):
            cols = list(subset)
            if sc[:, cols].sum(axis=1).var() > rc[:, cols].sum(axis=1).var():
                bad.append(subset)
    ok = per_item and exact and not bad
    criterion(6, ok, f"per-item SC<=prefix<=RC on 10 items: {per_item}; exact on 6 items: "
                     f"{exact}; subsets with SC var > RC var: {len(bad)}/63 {bad}")
    assert ok


# ---------------------------------------------------------------- 7

def test_c7_group_sweep_shape(criterion):
    gs = (1, 20, 200, 2000)
    cfg = ExperimentConfig(alpha=1.2, n=2000, k=(40,), g=gs, reps=500,
                           estimators=("ws-rc", "pri-rc", "ws-sc"), inperm=20, permnum=20,
                           seed=SEED).validate()
    t0 = time.time()
    t = run_estimator_experiment(cfg)
    elapsed = time.time() - t0
    sse = {m: [t.get(m, 40, g, "sse") for g in gs] for m in cfg.estimators}
    spread = {m: max(sse[m]) / min(sse[m]) for m in ("ws-rc", "pri-rc")}
    sc = sse["ws-sc"]
    decreasing = all(a > b for a, b in zip(sc, sc[1:]))
    ok = (max(spread.values()) <= 1.15 and decreasing and sc[-1] < 0.2 * sse["ws-rc"][-1]
          and elapsed < 600)
    criterion(7, ok, f"RC max/min over g: ws {spread['ws-rc']:.3f}, pri {spread['pri-rc']:.3f}; "
                     f"ws-sc sse {[f'{x:.4g}' for x in sc]} vs ws-rc at g=n "
                     f"{sse['ws-rc'][-1]:.4g}; {elapsed:.0f}s")
    assert ok


# ---------------------------------------------------------------- 8

def test_c8_bound_coverage(criterion):
    ks = (4, 16, 40, 100, 500)
    cfg = ExperimentConfig(experiment="bounds", alpha=2.0, n=1000, k=ks, g=(1000,), reps=1000,
                           bounds=("ws-normal", "wsr", "pri"), delta=0.05, seed=SEED).validate()
    t = run_bounds_experiment(cfg)
    rate = {m: float(np.mean([t.get(m, k, 1000, "in_bounds_rate") for k in ks]))
            for m in cfg.bounds}
    ok = (abs(rate["ws-normal"] - 0.90) <= 0.02 and abs(rate["wsr"] - 0.90) <= 0.02
          and abs(rate["pri"] - 0.99) <= 0.01)
    per_k = {m: [round(t.get(m, k, 1000, "in_bounds_rate"), 3) for k in ks] for m in cfg.bounds}
    criterion(8, ok, f"in-bounds averaged over k={ks}: WS {rate['ws-normal']:.3f}, "
                     f"WSR {rate['wsr']:.3f}, PRI {rate['pri']:.3f}; per k {per_k}")
    assert ok


# ---------------------------------------------------------------- 9

def test_c9_bound_tightness(criterion):
    ks = (40, 100)
    cfg = ExperimentConfig(experiment="bounds", alpha=1.0, n=1000, k=ks, g=(200,), reps=500,
                           bounds=("ws-w", "ws-normal", "ws-quantile", "pri"), delta=0.05,
                           seed=SEED).validate()
    t = run_bounds_experiment(cfg)
    width = {(m, k): t.get(m, k, 200, "width_norm") for m in cfg.bounds for k in ks}
    ok = all(width["ws-w", k] <= width[m, k] < width["pri", k]
             for k in ks for m in ("ws-normal", "ws-quantile"))
    detail = "; ".join(f"k={k}: " + ", ".join(f"{m} {width[m, k]:.3f}" for m in cfg.bounds)
                       for k in ks)
    criterion(9, ok, f"mean normalized widths {detail}")
    assert ok


# ---------------------------------------------------------------- 10

def test_c10_solver_regression(criterion):
    sk = BottomKSketch(1, (SketchEntry("a", 1.0, 0.5),), RankFamily.EXP, r_k_plus_1=1.0)
    ml_err = abs(est.ml_total_weight(sk) - (3 + math.sqrt(5)) / 2)
    rng = make_rng(SEED + 8)
    rec_err = 0.0
    for _ in range(10_000):
        w = list(rng.pareto(1.2, int(rng.integers(1, 13))) + 0.05)
        ell = float(rng.uniform(0.01, 3.0) * sum(w))
        i = int(rng.integers(len(w)))
        rest = w[:i] + w[i + 1:]
        lhs = est.f_subset_prob(w, ell)
        rhs = est.f_subset_prob(rest, ell) - est.f_subset_prob(rest, ell + w[i]) * ell / (ell + w[i])
        rec_err = max(rec_err, abs(lhs - rhs))
    path_err = 0.0
    for _ in range(600):
        w = rng.pareto(1.2, int(rng.integers(1, 13))) + 0.05
        ell = float(rng.uniform(0.01, 3.0) * w.sum())
        path_err = max(path_err, abs(est.f_subset_prob(w, ell, "inclusion_exclusion")
                                     - est.f_subset_prob(w, ell, "quadrature")))
    ok = ml_err <= 1e-6 and rec_err <= 1e-10 and path_err <= 1e-8
    criterion(10, ok, f"k=1 ML error {ml_err:.1e}; recurrence max error {rec_err:.1e} on 10^4; "
                      f"inclusion-exclusion vs quadrature {path_err:.1e} on 600 (k<=12)")
    assert ok


# ---------------------------------------------------------------- 11

def test_c11_stream_naive_equivalence(criterion):
    w = gen_weights("pareto", 10, make_rng(SEED + 9), alpha=1.2)
    items = items_of(w)
    trials = 100_000
    rng_a, rng_b = make_rng(SEED + 10), make_rng(SEED + 11)
    naive = Counter(frozenset(e.id for e in build_bottom_k(items, 3, "ws", rng_a).entries)
                    for _ in range(trials))
    stream = Counter(frozenset(e.id for e in build_bottom_k_stream(iter(items), 3, "ws",
                                                                  rng_b).entries)
                     for _ in range(trials))
    # chi-square homogeneity on sketched-set frequencies; sparse cells pooled
    keys = sorted(set(naive) | set(stream), key=lambda s: -(naive[s] + stream[s]))
    table, pooled = [], [0, 0]
    for s in keys:
        if naive[s] + stream[s] >= 10:
            table.append([naive[s], stream[s]])
        else:
            pooled[0] += naive[s]
            pooled[1] += stream[s]
    if sum(pooled):
        table.append(pooled)
    _, p, dof, _ = stats.chi2_contingency(np.array(table).T)
    incl_n = np.array([sum(c for s, c in naive.items() if it.id in s) for it in items])
    incl_s = np.array([sum(c for s, c in stream.items() if it.id in s) for it in items])

    rng = make_rng(SEED + 12)
    mismatches = 0
    for case in range(1000):
        fam = ("ws", "pri")[case % 2]
        k = int(rng.integers(1, 9))
        shards = [items_of(rng.pareto(1.2, int(rng.integers(1, 15))) + 0.01, f"s{j}_")
                  for j in range(int(rng.integers(2, 5)))]
        union = [it for sh in shards for it in sh]
        wu = np.array([it.weight for it in union])
        u = rng.standard_exponential(len(union)) if fam == "ws" else rng.random(len(union))
        ranks = u / wu
        direct = sketch_from_ranks(union, ranks, k, fam)
        merged, start = None, 0
        for sh in shards:
            part = sketch_from_ranks(sh, ranks[start:start + len(sh)], k, fam)
            start += len(sh)
            merged = part if merged is None else merge_sketches(merged, part, k)
        if (merged.entries != direct.entries or merged.r_k_plus_1 != direct.r_k_plus_1
                or merged.ground_set_size != direct.ground_set_size
                or not math.isclose(merged.total_weight, direct.total_weight, rel_tol=1e-12)):
            mismatches += 1
    ok = p > 0.01 and mismatches == 0
    criterion(11, ok, f"sketched-set chi-square p={p:.3f} (dof {dof}); inclusion counts naive "
                      f"{incl_n.tolist()} stream {incl_s.tolist()}; merge mismatches {mismatches}/1000")
    assert ok
