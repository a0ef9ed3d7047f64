"""Clustering stages: variance estimate, coarse single-linkage, spectral splits.

All thresholds use natural logarithms. A :class:`Clustering` partitions the
sample indices that were not set aside for eigenvector estimation.
"""

import json
import logging
import math
from collections import deque
from dataclasses import dataclass, field

import numba as nb
import numpy as np

from ._rng import stream
from .linalg import ScatterStats, accumulate, centered_covariance, spectral_norm, top_eigs
from .model import Dataset

log = logging.getLogger(__name__)

# rows of the pairwise-distance block computed at once
_BLOCK = 128


@dataclass(frozen=True)
class Thresholds:
    """Data-dependent cut-offs of the clustering stages.

    Attributes
    ----------
    sigma2_hat : float
        Variance estimate.
    coarse_merge_threshold : float
        Squared distance at or below which coarse clusters merge.
    spectral_norm_gate : float
        A cluster is split only if ``||S(C)||`` reaches this value.
    projected_link_threshold : float
        One-dimensional link length after projection.
    min_cluster_fraction : float
        A cluster is split only if it holds at least this fraction of ``n``.
    reserve_size : int
        Members set aside to estimate each splitting direction.
    """

    sigma2_hat: float
    coarse_merge_threshold: float
    spectral_norm_gate: float
    projected_link_threshold: float
    min_cluster_fraction: float
    reserve_size: int

    def __post_init__(self):
        for name in ("sigma2_hat", "coarse_merge_threshold", "spectral_norm_gate",
                     "projected_link_threshold", "min_cluster_fraction"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"threshold {name} must be positive, got {v}")

    def to_dict(self):
        return {
            "sigma2_hat": self.sigma2_hat,
            "coarse_merge_threshold": self.coarse_merge_threshold,
            "spectral_norm_gate": self.spectral_norm_gate,
            "projected_link_threshold": self.projected_link_threshold,
            "min_cluster_fraction": self.min_cluster_fraction,
            "reserve_size": self.reserve_size,
        }


def make_thresholds(sigma2_hat, n, d, k, eps, delta, coarse_const=23.0, gate_const=12.0, link_const=3.0):
    """Thresholds for ``n`` samples in ``d`` dimensions and ``k`` components.

    With the default constants::

        coarse  2 d s2 + 23 s2 sqrt(d log(n^2 / delta))
        gate    12 k^2 s2 log(n^3 / delta)
        link    3 sqrt(s2) sqrt(log(n^2 k / delta))
        size    eps / (5 k)          (fraction of n)
        reserve ceil(n eps / (8 k^2))
    """
    s2 = float(sigma2_hat)
    return Thresholds(
        sigma2_hat=s2,
        coarse_merge_threshold=2 * d * s2 + coarse_const * s2 * math.sqrt(d * math.log(n**2 / delta)),
        spectral_norm_gate=gate_const * k**2 * s2 * math.log(n**3 / delta),
        projected_link_threshold=link_const * math.sqrt(s2) * math.sqrt(math.log(n**2 * k / delta)),
        min_cluster_fraction=eps / (5 * k),
        reserve_size=math.ceil(n * eps / (8 * k**2)),
    )


@dataclass(frozen=True, eq=False)
class Cluster:
    members: np.ndarray
    stats: ScatterStats

    @property
    def size(self):
        return len(self.members)


@dataclass(eq=False)
class Clustering:
    """Partition of the non-discarded sample indices.

    Clusters are ordered by their smallest member; ``assignments[i]`` is the
    cluster of sample ``i`` or ``-1`` for a discarded sample.
    """

    n: int
    clusters: list
    discarded: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    events: list = field(default_factory=list)

    def __post_init__(self):
        self.clusters = sorted(self.clusters, key=lambda c: int(c.members.min()))
        self.discarded = np.sort(np.asarray(self.discarded, dtype=np.int64))

    @property
    def assignments(self):
        out = np.full(self.n, -1, dtype=np.int64)
        for i, c in enumerate(self.clusters):
            out[c.members] = i
        return out

    @property
    def sizes(self):
        return [c.size for c in self.clusters]

    def __len__(self):
        return len(self.clusters)

    def to_dict(self):
        return {"assignments": self.assignments.tolist(), "discarded": self.discarded.tolist()}

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_labels(cls, points, labels, discarded=()):
        """Build a clustering from an ``n``-vector of labels (``-1`` = discarded)."""
        x = _points(points)
        labels = np.asarray(labels, dtype=np.int64)
        clusters = [_make_cluster(x, np.flatnonzero(labels == v)) for v in np.unique(labels[labels >= 0])]
        disc = np.union1d(np.flatnonzero(labels < 0), np.asarray(discarded, dtype=np.int64))
        return cls(len(labels), clusters, disc)


def _points(data):
    x = data.samples if isinstance(data, Dataset) else np.asarray(data, dtype=float)
    return x[:, None] if x.ndim == 1 else x


def _make_cluster(x, members):
    members = np.sort(np.asarray(members, dtype=np.int64))
    return Cluster(members, accumulate(x[members]))


# -- step 1 ----------------------------------------------------------------


def estimate_variance(data, k):
    """``min ||x_a - x_b||^2 / (2 d)`` over pairs among the first ``k + 1`` samples."""
    x = _points(data)
    n, d = x.shape
    if n <= k:
        raise ValueError(f"need more than k={k} samples, got {n}")
    head = x[: k + 1]
    diff = head[:, None, :] - head[None, :, :]
    sq = np.einsum("abd,abd->ab", diff, diff)
    iu = np.triu_indices(k + 1, 1)
    return float(sq[iu].min() / (2.0 * d))


# -- step 2 ----------------------------------------------------------------


@nb.njit(cache=True)
def _find(parent, i):
    root = i
    while parent[root] != root:
        root = parent[root]
    while parent[i] != root:
        nxt = parent[i]
        parent[i] = root
        i = nxt
    return root


@nb.njit(cache=True)
def _union_block(parent, sq, lo, thr):
    # sq[a, c] holds the squared distance between samples lo + a and lo + c
    rows, cols = sq.shape
    for a in range(rows):
        i = lo + a
        ri = _find(parent, i)
        for c in range(a + 1, cols):
            if sq[a, c] <= thr:
                rj = _find(parent, lo + c)
                if rj != ri:
                    # smaller root wins so labels do not depend on visit order
                    if ri < rj:
                        parent[rj] = ri
                    else:
                        parent[ri] = rj
                        ri = rj


@nb.njit(cache=True)
def _roots(parent):
    out = np.empty_like(parent)
    for i in range(parent.shape[0]):
        out[i] = _find(parent, i)
    return out


def linkage_components(points, threshold, block=_BLOCK):
    """Connected components of the graph ``||x_i - x_j||^2 <= threshold``.

    These are exactly the single-linkage clusters at that cut. Distances are
    computed one row block at a time, so memory stays ``O(block * n)``.
    Returns an ``n``-vector of labels numbered by first appearance.
    """
    x = _points(points)
    x = x - x.mean(axis=0)
    n = x.shape[0]
    parent = np.arange(n, dtype=np.int64)
    sqn = np.einsum("ij,ij->i", x, x)
    for lo in range(0, n, block):
        xb = x[lo:lo + block]
        sq = sqn[lo:lo + block, None] + sqn[None, lo:] - 2.0 * (xb @ x[lo:].T)
        _union_block(parent, sq, lo, float(threshold))
    roots = _roots(parent)
    _, labels = np.unique(roots, return_inverse=True)
    return labels.astype(np.int64)


def coarse_single_linkage(data, thresholds: Thresholds) -> Clustering:
    """Merge while two clusters have a member pair within the coarse threshold."""
    x = _points(data)
    labels = linkage_components(x, thresholds.coarse_merge_threshold)
    return Clustering.from_labels(x, labels)


# -- step 3 ----------------------------------------------------------------


def single_linkage_1d(values, link_threshold):
    """Single-linkage of scalars: sort and cut at gaps above ``link_threshold``.

    Returns a list of index arrays into ``values`` ordered by position.
    """
    v = np.asarray(values, dtype=float).ravel()
    if v.size == 0:
        raise ValueError("single_linkage_1d needs at least one value")
    order = np.argsort(v, kind="stable")
    cuts = np.flatnonzero(np.diff(v[order]) > link_threshold) + 1
    return [np.sort(part) for part in np.split(order, cuts)]


def _gate_norm(S, gate, tol, seed):
    # ||S||_2 <= ||S||_F, so a Frobenius norm under the gate settles it
    # without iterating on a possibly flat spectrum
    fro = float(np.linalg.norm(S))
    if fro < gate:
        return fro, False
    return spectral_norm(S, tol=tol, seed=seed), True


def recursive_spectral_cluster(data, clustering: Clustering, thresholds: Thresholds, seed=0, tol=1e-8,
                               max_iter=None) -> Clustering:
    """Split clusters along the top eigenvector of ``S(C)`` while the gate holds.

    A cluster qualifies when it holds at least ``min_cluster_fraction * n``
    samples and ``||S(C)||`` reaches the gate. For a qualifying cluster,
    ``reserve_size`` members (a seeded uniform subset) are discarded after
    estimating the top eigenvector of their ``S``; the other members are
    projected onto it and split by one-dimensional single-linkage. Every
    resulting cluster is new and re-enters the queue. A cluster too small to
    give up the reserve is left alone and noted in ``events``.
    """
    x = _points(data)
    n = x.shape[0]
    s2 = thresholds.sigma2_hat
    min_size = thresholds.min_cluster_fraction * n
    reserve = thresholds.reserve_size
    discarded = [clustering.discarded]
    events = list(clustering.events)
    done = []
    queue = deque(clustering.clusters)
    it = 0
    while queue:
        c = queue.popleft()
        if c.size < min_size or c.size < 2:
            done.append(c)
            continue
        norm, exact = _gate_norm(centered_covariance(c.stats, s2), thresholds.spectral_norm_gate, tol, seed)
        if norm < thresholds.spectral_norm_gate:
            done.append(c)
            continue
        if it >= n:
            log.warning("recursive_spectral_cluster: iteration cap %d reached", n)
            events.append({"event": "iteration_cap", "cluster_min": int(c.members[0])})
            done.append(c)
            done.extend(queue)
            break
        if reserve >= c.size or reserve < 2:
            events.append({"event": "unsplittable", "size": c.size, "reserve": reserve,
                           "cluster_min": int(c.members[0])})
            done.append(c)
            continue
        rng = stream(seed, "reserve", it)
        pick = np.zeros(c.size, dtype=bool)
        pick[rng.choice(c.size, size=reserve, replace=False)] = True
        held, rest = c.members[pick], c.members[~pick]
        S = centered_covariance(accumulate(x[held]), s2)
        _, v = top_eigs(S, 1, tol=tol, max_iter=max_iter, seed=seed, which="algebraic")
        proj = x[rest] @ v[:, 0]
        parts = single_linkage_1d(proj, thresholds.projected_link_threshold)
        events.append({"event": "split", "size": c.size, "norm": norm, "parts": [len(p) for p in parts]})
        discarded.append(held)
        for part in parts:
            queue.append(_make_cluster(x, rest[part]))
        it += 1
    return Clustering(n, done, np.concatenate(discarded), events)
