"""Reference implementations used only by the tests.

Each one is deliberately naive and shares no code with the package, so an
agreement between the two is evidence rather than tautology.
"""

import math
from itertools import combinations

import mpmath
import numpy as np
from scipy.stats import norm


def jacobi_eigh(A, tol=1e-14, max_sweeps=100):
    """Cyclic Jacobi eigendecomposition of a symmetric matrix.

    Returns eigenvalues in descending order and the matching eigenvectors
    as columns.
    """
    A = np.array(A, dtype=float)
    n = A.shape[0]
    V = np.eye(n)
    for _ in range(max_sweeps):
        off = math.sqrt(sum(A[i, j] ** 2 for i in range(n) for j in range(n) if i != j))
        if off <= tol * max(1.0, np.abs(A).max()):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if A[p, q] == 0.0:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * A[p, q])
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                J = np.eye(n)
                J[p, p] = J[q, q] = c
                J[p, q] = s
                J[q, p] = -s
                A = J.T @ A @ J
                V = V @ J
    vals = np.diag(A).copy()
    order = np.argsort(-vals, kind="stable")
    return vals[order], V[:, order]


def principal_angles(U, V):
    """Principal angles (radians) between the column spans of ``U`` and ``V``."""
    qu, _ = np.linalg.qr(U)
    qv, _ = np.linalg.qr(V)
    s = np.linalg.svd(qu.T @ qv, compute_uv=False)
    return np.arccos(np.clip(s, -1.0, 1.0))


def naive_scatter(points):
    """Mean and scatter by explicit loops."""
    x = [list(map(float, row)) for row in np.atleast_2d(points)]
    n, d = len(x), len(x[0])
    mean = [math.fsum(r[j] for r in x) / n for j in range(d)]
    S = np.zeros((d, d))
    for a in range(d):
        for b in range(d):
            S[a, b] = math.fsum((r[a] - mean[a]) * (r[b] - mean[b]) for r in x)
    return np.array(mean), S


def naive_components(points, threshold):
    """Single-linkage clusters at cut ``threshold`` (squared distance) by
    repeated merging of the closest pair of clusters."""
    x = np.atleast_2d(np.asarray(points, dtype=float))
    if x.shape[0] == 1 and x.shape[1] > 1 and np.ndim(points) == 1:
        x = x.T
    n = x.shape[0]
    D = ((x[:, None, :] - x[None, :, :]) ** 2).sum(-1)
    clusters = [{i} for i in range(n)]
    while True:
        best = None
        for a, b in combinations(range(len(clusters)), 2):
            dist = min(D[i, j] for i in clusters[a] for j in clusters[b])
            if best is None or dist < best[0]:
                best = (dist, a, b)
        if best is None or best[0] > threshold:
            break
        _, a, b = best
        clusters[a] |= clusters.pop(b)
    return sorted(sorted(c) for c in clusters)


def naive_single_linkage_1d(values, link):
    """Quadratic 1-D single-linkage: grow each cluster by any value within ``link``."""
    v = list(map(float, values))
    unseen = set(range(len(v)))
    out = []
    while unseen:
        seed = min(unseen)
        group, frontier = {seed}, [seed]
        unseen.discard(seed)
        while frontier:
            i = frontier.pop()
            near = [j for j in unseen if abs(v[i] - v[j]) <= link]
            for j in near:
                unseen.discard(j)
                group.add(j)
                frontier.append(j)
        out.append(sorted(group))
    return sorted(out)


def log_pdf_mp(weights, means, variances, x, dps=50):
    """Mixture log-density by direct summation in ``dps``-digit arithmetic."""
    mpmath.mp.dps = dps
    x = [mpmath.mpf(float(t)) for t in np.atleast_1d(x)]
    d = len(x)
    total = mpmath.mpf(0)
    for w, mu, v in zip(weights, means, variances):
        mu = np.atleast_1d(mu)
        v = mpmath.mpf(float(v))
        sq = mpmath.fsum((x[j] - mpmath.mpf(float(mu[j]))) ** 2 for j in range(d))
        total += mpmath.mpf(float(w)) * (2 * mpmath.pi * v) ** (-mpmath.mpf(d) / 2) * mpmath.exp(-sq / (2 * v))
    return float(mpmath.log(total))


def l1_two_gaussians(m1, s1, m2, s2):
    """Closed-form ``||N(m1, s1^2) - N(m2, s2^2)||_1`` from the density crossings."""
    if abs(s1 - s2) < 1e-15:
        return 2.0 * (2.0 * norm.cdf(abs(m1 - m2) / (2.0 * s1)) - 1.0)
    a = 1.0 / (2 * s2**2) - 1.0 / (2 * s1**2)
    b = m1 / s1**2 - m2 / s2**2
    c = m2**2 / (2 * s2**2) - m1**2 / (2 * s1**2) - math.log(s1 / s2)
    disc = math.sqrt(max(b * b - 4 * a * c, 0.0))
    lo, hi = sorted([(-b - disc) / (2 * a), (-b + disc) / (2 * a)])
    mid = (norm.cdf(hi, m1, s1) - norm.cdf(lo, m1, s1)) - (norm.cdf(hi, m2, s2) - norm.cdf(lo, m2, s2))
    return 2.0 * abs(mid)


def scheffe_counts(p_logpdf, q_logpdf, data, p_draws, q_draws):
    """Scheffe-set frequencies of ``data``, ``p_draws`` and ``q_draws``."""
    def mu(x):
        return float(np.mean(p_logpdf(x) > q_logpdf(x)))
    return mu(data), mu(p_draws), mu(q_draws)


def classic_scheffe_winner(logpdfs, data, draws):
    """Round-robin Scheffe over every pair; most wins, lowest index on ties.

    ``logpdfs[i]`` evaluates candidate ``i``; ``draws[i]`` are its own samples.
    """
    N = len(logpdfs)
    wins = np.zeros(N, dtype=int)
    for i, j in combinations(range(N), 2):
        mf, mp, mq = scheffe_counts(logpdfs[i], logpdfs[j], data, draws[i], draws[j])
        wins[i if abs(mp - mf) <= abs(mq - mf) else j] += 1
    return int(np.argmax(wins))
