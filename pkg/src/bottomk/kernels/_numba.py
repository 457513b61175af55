"""Compiled kernels.  Same signatures and results as the numpy module."""

from __future__ import annotations

import math

import numpy as np
from numba import njit

RTOL = 1e-12
MAXITER = 200


@njit(cache=True)
def _sumexp_value(s, e, x, tau):
    acc = 0.0
    for j in range(s.shape[0]):
        acc += e[j] / (x - s[j])
    return acc - tau


@njit(cache=True)
def sumexp_roots(s, E, tau):
    m = E.shape[0]
    top = s[s.shape[0] - 1]
    out = np.empty(m)
    for r in range(m):
        e = E[r]
        lo = top
        hi = top + e.sum() / tau
        for _ in range(MAXITER):
            if not (hi - lo) > RTOL * max(abs(hi), 1e-300):
                break
            mid = 0.5 * (lo + hi)
            if _sumexp_value(s, e, mid, tau) > 0:
                lo = mid
            else:
                hi = mid
        out[r] = 0.5 * (lo + hi)
    return out


@njit(cache=True)
def _rj(e, sJ, x, n):
    acc = 0.0
    for h in range(n):
        acc += e[h] / (x - sJ[h])
    return acc


@njit(cache=True)
def _ro(e, sO, W, x, n):
    acc = 0.0
    for h in range(n):
        acc += e[h] / ((W - x) - sO[h])
    return acc


@njit(cache=True)
def _lex_fun(kind, eJ, eO, sJ, sO, W, x, i, ip, delta):
    if kind == 0:
        return _rj(eJ, sJ, x, i) - _ro(eO, sO, W, x, ip + 1)
    elif kind == 1:
        return _rj(eJ, sJ, x, i + 1) - _ro(eO, sO, W, x, ip)
    return _ro(eO, sO, W, x, ip) - _rj(eJ, sJ, x, i) - delta


@njit(cache=True)
def _lex_bisect(kind, eJ, eO, sJ, sO, W, lo, hi, i, ip, delta, decreasing):
    for _ in range(MAXITER):
        if not (hi - lo) > RTOL * max(abs(hi), 1e-300):
            break
        mid = 0.5 * (lo + hi)
        f = _lex_fun(kind, eJ, eO, sJ, sO, W, mid, i, ip, delta)
        right = f > 0 if decreasing else f < 0
        if right:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@njit(cache=True)
def lex_roots(sJ, sO, EJ, EO, W, delta):
    i = sJ.shape[0] - 1
    ip = sO.shape[0] - 1
    m = EJ.shape[0]
    out = np.empty(m)
    for r in range(m):
        eJ = EJ[r]
        eO = EO[r]
        if i == 0:
            L = 0.0
        else:
            L = _lex_bisect(0, eJ, eO, sJ, sO, W, sJ[i - 1], W - sO[ip], i, ip, 0.0, True)
        if ip == 0:
            U = W
        else:
            U = _lex_bisect(1, eJ, eO, sJ, sO, W, sJ[i], W - sO[ip - 1], i, ip, 0.0, True)
        dL = _lex_fun(2, eJ, eO, sJ, sO, W, L, i, ip, 0.0)
        dU = _lex_fun(2, eJ, eO, sJ, sO, W, U, i, ip, 0.0)
        M = _lex_bisect(2, eJ, eO, sJ, sO, W, L, U, i, ip, delta, False)
        if dL >= delta:
            M = L
        elif dU <= delta:
            M = U
        out[r] = min(max(M, sJ[i]), W - sO[ip])
    return out


@njit(cache=True)
def sc_markov(w, W, Er, U):
    k = w.shape[0]
    permnum = Er.shape[0]
    inperm = Er.shape[1]
    perm = np.arange(k)
    acc = np.zeros(k)
    inv_rate = np.empty(k + 1)
    new_rank = np.empty(k)
    for p in range(permnum):
        s = 0.0
        inv_rate[0] = 1.0 / W
        for j in range(k):
            s += w[perm[j]]
            inv_rate[j + 1] = 1.0 / (W - s)
        r = 0.0
        for q in range(inperm):
            r = 0.0
            for j in range(k + 1):
                r += Er[p, q, j] * inv_rate[j]
            for j in range(k):
                acc[j] += w[j] / -math.expm1(-r * w[j])
        for j in range(k):
            new_rank[j] = -math.log1p(U[p, j] * math.expm1(-w[j] * r)) / w[j]
        perm = np.argsort(new_rank, kind="mergesort")
    return acc / (permnum * inperm)


@njit(cache=True)
def subset_f_table(w, ell):
    k = w.shape[0]
    n = 1 << k
    f = np.zeros(n)
    f[0] = 1.0
    for mask in range(1, n):
        wt = 0.0
        acc = 0.0
        for b in range(k):
            if (mask >> b) & 1:
                wt += w[b]
                acc += w[b] * f[mask ^ (1 << b)]
        f[mask] = acc / (ell + wt)
    return f


@njit(cache=True)
def sc_exact(w, W):
    k = w.shape[0]
    ell = W - w.sum()
    if ell <= 0:
        return w.copy()
    f = subset_f_table(w, ell)
    full = (1 << k) - 1
    out = np.empty(k)
    for b in range(k):
        out[b] = w[b] * f[full ^ (1 << b)] / f[full]
    return out


@njit(cache=True)
def sc_exact_rows(wrows, W):
    out = np.empty_like(wrows)
    for r in range(wrows.shape[0]):
        out[r] = sc_exact(wrows[r], W)
    return out


@njit(cache=True)
def prefix_adjusted(w, W):
    k = w.shape[0]
    out = np.empty(k)
    S = np.empty(k)
    loge = np.empty(k)
    for t in range(k):
        wi = w[t]
        S[0] = 0.0
        m = 0
        for j in range(k):
            if j != t:
                S[m + 1] = S[m] + w[j]
                m += 1
        noshow = (W - wi - S[k - 1]) / (W - S[k - 1])
        if noshow <= 0:
            out[t] = wi
            continue
        tail = 0.0
        for j in range(k - 1, -1, -1):
            if j < k - 1:
                tail += math.log(W - S[j]) - math.log(W - S[j] - wi)
            loge[j] = math.log(wi) - math.log(W - S[j]) + tail
        mx = loge.max()
        se = 0.0
        for j in range(k):
            se += math.exp(loge[j] - mx)
        out[t] = wi * (1.0 + noshow / (math.exp(mx) * se))
    return out


@njit(cache=True)
def prefix_rows(wrows, W):
    out = np.empty_like(wrows)
    for r in range(wrows.shape[0]):
        out[r] = prefix_adjusted(wrows[r], W)
    return out
