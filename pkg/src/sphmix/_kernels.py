"""Compiled inner loops for Scheffe games.

A game needs, for every point, whether candidate ``p`` has strictly larger
density than ``q``. The mixture log-density lies within ``log k`` of its
largest component term, so a pass over those maxima decides most points
without exponentials. The undecided ("ambiguous") points are gathered into
an exponent buffer that numpy exponentiates in one vectorised call, after
which the sums are compared.

Points are stored transposed, ``(m, n)`` per game, so inner loops run over
contiguous memory. Games in a batch either share one point set (data) or
carry their own (Monte Carlo draws).
"""

import math

import numba as nb
import numpy as np

_LOG_2PI = math.log(2.0 * math.pi)
# exponent floor relative to the common top term: both sums are >= 1/k, so
# smaller terms cannot change them, and dropping them avoids subnormals
_FLOOR = -50.0


@nb.njit(cache=True)
def _prep(lw, var, d):
    k = var.shape[0]
    a = np.empty(k)
    iv = np.empty(k)
    for i in range(k):
        a[i] = lw[i] - 0.5 * d * (_LOG_2PI + math.log(var[i]))
        iv[i] = 0.5 / var[i]
    return a, iv


@nb.njit(cache=True)
def _max_terms(a, iv, coords, zt, r2, out, sq):
    k, m = coords.shape
    n = r2.shape[0]
    out[:] = -np.inf
    for i in range(k):
        ai = a[i]
        if ai == -np.inf:
            continue
        vi = iv[i]
        if m == 1:
            c = coords[i, 0]
            zr = zt[0]
            for j in range(n):
                diff = zr[j] - c
                out[j] = max(out[j], ai - vi * (r2[j] + diff * diff))
        else:
            sq[:] = r2
            for t in range(m):
                c = coords[i, t]
                zr = zt[t]
                for j in range(n):
                    diff = zr[j] - c
                    sq[j] += diff * diff
            for j in range(n):
                out[j] = max(out[j], ai - vi * sq[j])


@nb.njit(cache=True)
def classify(lwp, cp, vp, lwq, cq, vq, zt, r2, d, amb, n_amb):
    """First pass over games ``b`` of a batch.

    ``zt`` is (G, m, n) and ``r2`` (G, n) with ``G`` either 1 (shared points)
    or the number of games. Returns the count of points decided in favour of
    ``p``; ambiguous point indices go to ``amb[b, :n_amb[b]]``.
    """
    B = cp.shape[0]
    n = r2.shape[1]
    shared = zt.shape[0] == 1
    logk_p = math.log(cp.shape[1])
    logk_q = math.log(cq.shape[1])
    counts = np.zeros(B, dtype=np.int64)
    pm = np.empty(n)
    qm = np.empty(n)
    sq = np.empty(n)
    for b in range(B):
        g = 0 if shared else b
        ap, ivp = _prep(lwp[b], vp[b], d)
        aq, ivq = _prep(lwq[b], vq[b], d)
        _max_terms(ap, ivp, cp[b], zt[g], r2[g], pm, sq)
        _max_terms(aq, ivq, cq[b], zt[g], r2[g], qm, sq)
        # branch-free compaction of the ambiguous points: the decided /
        # ambiguous split is data dependent and would mispredict often
        c = 0
        na = 0
        ab = amb[b]
        for j in range(n):
            g = pm[j] - qm[j]
            win = np.int64(g > logk_q)
            c += win
            ab[na] = j
            na += np.int64(g > -logk_p) - win
        counts[b] = c
        n_amb[b] = na
    return counts


@nb.njit(cache=True)
def exponents(lwp, cp, vp, lwq, cq, vq, zt, r2, d, amb, n_amb, offsets, out):
    """Fill ``out[offsets[b] + s]`` with the p terms then the q terms of
    ambiguous point ``amb[b, s]``, shifted by their common maximum."""
    B, kp, m = cp.shape
    kq = cq.shape[1]
    K = kp + kq
    shared = zt.shape[0] == 1
    for b in range(B):
        g = 0 if shared else b
        ap, ivp = _prep(lwp[b], vp[b], d)
        aq, ivq = _prep(lwq[b], vq[b], d)
        z = zt[g]
        rr = r2[g]
        base = offsets[b]
        for s in range(n_amb[b]):
            j = amb[b, s]
            row = base + s
            top = -np.inf
            for i in range(kp):
                acc = rr[j]
                for t in range(m):
                    diff = z[t, j] - cp[b, i, t]
                    acc += diff * diff
                e = ap[i] - ivp[i] * acc
                out[row, i] = e
                top = max(top, e)
            for i in range(kq):
                acc = rr[j]
                for t in range(m):
                    diff = z[t, j] - cq[b, i, t]
                    acc += diff * diff
                e = aq[i] - ivq[i] * acc
                out[row, kp + i] = e
                top = max(top, e)
            for i in range(K):
                e = out[row, i] - top
                out[row, i] = e if e > _FLOOR else -np.inf


@nb.njit(cache=True)
def resolve(expd, kp, offsets, n_amb, counts):
    """Add to ``counts`` the ambiguous points where the p sum exceeds the q sum."""
    K = expd.shape[1]
    for b in range(counts.shape[0]):
        base = offsets[b]
        c = 0
        for s in range(n_amb[b]):
            sp = 0.0
            for i in range(kp):
                sp += expd[base + s, i]
            sq = 0.0
            for i in range(kp, K):
                sq += expd[base + s, i]
            if sp > sq:
                c += 1
        counts[b] += c


@nb.njit(cache=True)
def draw(lw, coords, var, u, et, x, yt, rr):
    """Push standard variates through each game's sampling candidate.

    Draw ``j`` of game ``b`` is component ``i`` (inverting the weight CDF at
    ``u[j]``) with coordinates ``coords[b, i] + sqrt(var[b, i]) * et[:, j]``
    and squared residual ``var[b, i] * x[j]``.
    """
    B, k, m = coords.shape
    n = u.shape[0]
    cdf = np.empty(k)
    sd = np.empty(k)
    lab = np.empty(n, dtype=np.int64)
    for b in range(B):
        acc = 0.0
        for i in range(k):
            acc += math.exp(lw[b, i])
            cdf[i] = acc
            sd[i] = math.sqrt(var[b, i])
        # label = number of cdf steps at or below the target (branch-free);
        # zero-weight components repeat a cdf value and are never chosen
        lab[:] = 0
        for i in range(k - 1):
            ci = cdf[i] / acc
            for j in range(n):
                lab[j] += np.int64(u[j] >= ci)
        for j in range(n):
            rr[b, j] = var[b, lab[j]] * x[j]
        for t in range(m):
            for j in range(n):
                yt[b, t, j] = coords[b, lab[j], t] + sd[lab[j]] * et[t, j]


def count_greater(P, Q, zt, r2, d):
    """Per game, the number of points where ``p(x) > q(x)``.

    ``P`` and ``Q`` are ``(log_weights, coords, variances)`` for a batch of
    games; ``zt``/``r2`` are shaped (G, m, n) and (G, n) with ``G`` equal to
    1 or the batch size.
    """
    B = P[1].shape[0]
    n = r2.shape[1]
    amb = np.empty((B, n), dtype=np.int32)
    n_amb = np.empty(B, dtype=np.int64)
    counts = classify(*P, *Q, zt, r2, d, amb, n_amb)
    total = int(n_amb.sum())
    if total:
        offsets = np.zeros(B, dtype=np.int64)
        np.cumsum(n_amb[:-1], out=offsets[1:])
        kp = P[1].shape[1]
        buf = np.empty((total, kp + Q[1].shape[1]))
        exponents(*P, *Q, zt, r2, d, amb, n_amb, offsets, buf)
        np.exp(buf, out=buf)
        resolve(buf, kp, offsets, n_amb, counts)
    return counts
