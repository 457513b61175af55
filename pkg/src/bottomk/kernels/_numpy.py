"""Pure-numpy kernels.  Vectorized across Monte Carlo draws where possible.

Every kernel takes its random variates pre-drawn so that this module and
the compiled one produce the same numbers for the same inputs.
"""

from __future__ import annotations

import numpy as np

RTOL = 1e-12
MAXITER = 200


def _vbisect(fun, lo, hi, decreasing=True):
    """Vectorized bisection for fun(x) = 0 on each (lo[j], hi[j]).

    Converged entries are frozen so each entry sees the same sequence of
    midpoints as a scalar bisection would.
    """
    lo = np.array(lo, dtype=float)
    hi = np.array(hi, dtype=float)
    active = np.ones(lo.shape, dtype=bool)
    for _ in range(MAXITER):
        active &= (hi - lo) > RTOL * np.maximum(np.abs(hi), 1e-300)
        if not active.any():
            break
        mid = 0.5 * (lo + hi)
        f = fun(mid)
        go_right = (f > 0) if decreasing else (f < 0)
        lo = np.where(active & go_right, mid, lo)
        hi = np.where(active & ~go_right, mid, hi)
    return 0.5 * (lo + hi)


def sumexp_roots(s, E, tau):
    """Root x > s[-1] of sum_j E[m, j] / (x - s[j]) = tau for each row m."""
    s = np.asarray(s, dtype=float)
    E = np.atleast_2d(np.asarray(E, dtype=float))
    top = s[-1]
    lo = np.full(E.shape[0], top)
    hi = top + E.sum(axis=1) / tau

    def fun(x):
        return (E / (x[:, None] - s)).sum(axis=1) - tau

    return _vbisect(fun, lo, hi)


def _chain(E, base, n):
    """Partial sums of the first n rank differences E[:, h] / base[:, h]."""
    if n == 0:
        return np.zeros(E.shape[0])
    return (E[:, :n] / base[:, :n]).sum(axis=1)


def lex_roots(sJ, sO, EJ, EO, W, delta):
    """Per-draw solution of the lexicographic rank equation.

    sJ: matched prefix sums s_0..s_i; sO: unmatched prefix sums s'_0..s'_i'.
    EJ (m, i+1) and EO (m, i'+1) are standard exponential variates.
    Returns the candidate w(J) per draw, truncated to [s_i, W - s'_i'].
    """
    sJ = np.asarray(sJ, dtype=float)
    sO = np.asarray(sO, dtype=float)
    EJ = np.atleast_2d(np.asarray(EJ, dtype=float))
    EO = np.atleast_2d(np.asarray(EO, dtype=float))
    i = sJ.size - 1
    ip = sO.size - 1
    m = EJ.shape[0]

    def RJ(x, n):
        return _chain(EJ, x[:, None] - sJ[None, :], n)

    def RO(x, n):
        return _chain(EO, (W - x)[:, None] - sO[None, :], n)

    if i == 0:
        L = np.zeros(m)
    else:
        L = _vbisect(lambda x: RJ(x, i) - RO(x, ip + 1),
                     np.full(m, sJ[i - 1]), np.full(m, W - sO[ip]))
    if ip == 0:
        U = np.full(m, float(W))
    else:
        U = _vbisect(lambda x: RJ(x, i + 1) - RO(x, ip),
                     np.full(m, sJ[i]), np.full(m, W - sO[ip - 1]))

    def d(x):
        return RO(x, ip) - RJ(x, i)

    dL = d(L)
    dU = d(U)
    M = _vbisect(lambda x: d(x) - delta, L, U, decreasing=False)
    M = np.where(dL >= delta, L, np.where(dU <= delta, U, M))
    return np.clip(M, sJ[i], W - sO[ip])


def sc_markov(w, W, Er, U):
    """Markov-chain approximation of subset-conditioning adjusted weights.

    w: entry weights in observed rank order.  Er (permnum, inperm, k+1)
    standard exponentials for the (k+1)-st rank draws, U (permnum, k)
    uniforms for the rank redraws.  Returns the averaged RC weights.
    """
    w = np.asarray(w, dtype=float)
    k = w.size
    permnum, inperm = Er.shape[0], Er.shape[1]
    perm = np.arange(k)
    acc = np.zeros(k)
    for p in range(permnum):
        s = np.concatenate(([0.0], np.cumsum(w[perm])))
        inv_rate = 1.0 / (W - s)
        r = Er[p] @ inv_rate
        acc += (w[None, :] / -np.expm1(-np.outer(r, w))).sum(axis=0)
        r_last = r[-1]
        new_rank = -np.log1p(U[p] * np.expm1(-w * r_last)) / w
        perm = np.argsort(new_rank, kind="stable")
    return acc / (permnum * inperm)


def subset_f_table(w, ell):
    """f(T, ell) for every subset T of w, indexed by bitmask.

    Uses f(T) = sum_{i in T} w_i / (ell + w(T)) * f(T \\ i), f(empty) = 1,
    which only adds positive terms.
    """
    w = np.asarray(w, dtype=float)
    k = w.size
    n = 1 << k
    masks = np.arange(n)
    bits = (masks[:, None] >> np.arange(k)) & 1
    wsum = bits @ w
    pop = bits.sum(axis=1)
    f = np.zeros(n)
    f[0] = 1.0
    for c in range(1, k + 1):
        layer = masks[pop == c]
        acc = np.zeros(layer.size)
        for b in range(k):
            has = (layer >> b) & 1 == 1
            acc[has] += w[b] * f[layer[has] ^ (1 << b)]
        f[layer] = acc / (ell + wsum[layer])
    return f


def sc_exact(w, W):
    """Subset-conditioning adjusted weights w_i f(s \\ i) / f(s)."""
    w = np.asarray(w, dtype=float)
    k = w.size
    ell = W - w.sum()
    if ell <= 0:
        return w.copy()
    f = subset_f_table(w, ell)
    full = (1 << k) - 1
    return np.array([w[b] * f[full ^ (1 << b)] / f[full] for b in range(k)])


def sc_exact_rows(wrows, W):
    wrows = np.atleast_2d(np.asarray(wrows, dtype=float))
    return np.array([sc_exact(row, W) for row in wrows])


def prefix_adjusted(w, W):
    """Prefix-conditioning adjusted weights for entries in rank order."""
    w = np.asarray(w, dtype=float)
    k = w.size
    out = np.empty(k)
    for t in range(k):
        others = np.delete(w, t)
        S = np.concatenate(([0.0], np.cumsum(others)))  # S[m] = first m others
        wi = w[t]
        noshow = (W - wi - S[k - 1]) / (W - S[k - 1])
        if noshow <= 0:
            out[t] = wi
            continue
        # log of e_j relative to the no-conflict product over all k-1 others
        lr = np.log(W - S[:k - 1]) - np.log(W - S[:k - 1] - wi)
        tail = np.concatenate((np.cumsum(lr[::-1])[::-1], [0.0]))
        loge = np.log(wi) - np.log(W - S[:k]) + tail
        mx = loge.max()
        se = np.exp(mx) * np.exp(loge - mx).sum()
        out[t] = wi * (1.0 + noshow / se)
    return out


def prefix_rows(wrows, W):
    wrows = np.atleast_2d(np.asarray(wrows, dtype=float))
    return np.array([prefix_adjusted(row, W) for row in wrows])
