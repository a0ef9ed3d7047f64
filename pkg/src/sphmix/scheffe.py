"""Hypothesis selection by Scheffe games.

A Scheffe* game between candidates ``p`` and ``q`` compares how often the data
land in the Scheffe set ``{x : p(x) > q(x)}`` against how often fresh samples
from ``p`` and from ``q`` do; the candidate whose own frequency is closer to
the data's wins. :func:`modified_scheffe` runs a knockout over a family,
sampling a small pool each round and keeping its round-robin leader, then
plays a final round-robin among the kept leaders.

Candidates are evaluated in a :class:`Frame`: an affine subspace that contains
every candidate mean. A point ``x`` is summarised by its coordinates ``z`` in
the subspace and its squared residual ``r2``; for isotropic components that
pair determines the density exactly, and sampling ``r2`` from a scaled
chi-square keeps Monte Carlo draws exact as well.
"""

import json
import logging
import math
from dataclasses import dataclass

import numpy as np

from ._rng import stream
from . import _kernels
from .model import Dataset, Mixture

log = logging.getLogger(__name__)

# points processed per kernel batch; keeps the working set cache-sized
_BATCH_POINTS = 1 << 17

@dataclass(frozen=True, eq=False)
class Frame:
    """Affine subspace ``origin + span(basis)`` of R^dim with orthonormal ``basis``."""

    origin: np.ndarray
    basis: np.ndarray

    @property
    def dim(self):
        return self.origin.shape[0]

    @property
    def rank(self):
        return self.basis.shape[1]

    @classmethod
    def identity(cls, d):
        return cls(np.zeros(d), np.eye(d))

    @property
    def is_identity(self):
        return self.rank == self.dim and not np.any(self.origin) and np.array_equal(self.basis, np.eye(self.dim))

    def embed(self, x):
        """Return ``(z, r2)`` for the rows of ``x``."""
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[:, None] if self.dim == 1 else x[None, :]
        if self.is_identity:
            return x.copy(), np.zeros(x.shape[0])
        c = x - self.origin
        z = c @ self.basis
        r2 = np.einsum("ij,ij->i", c, c) - np.einsum("ij,ij->i", z, z)
        return z, np.maximum(r2, 0.0)

    def lift(self, coords):
        return self.origin + np.asarray(coords) @ self.basis.T


class CandidateFamily:
    """A finite list of candidate mixtures sharing one dimension.

    Subclasses may generate candidates lazily; the tournament only touches
    ``len(F)``, ``F.frame`` and ``F.params(indices)``.
    """

    def __init__(self, candidates):
        cands = list(candidates)
        if not cands:
            raise ValueError("a candidate family needs at least one member")
        d = cands[0].dim
        if any(c.dim != d for c in cands):
            raise ValueError("all candidates must share one dimension")
        self._cands = cands
        self.frame = Frame.identity(d)
        kmax = max(c.k for c in cands)
        n = len(cands)
        self._logw = np.full((n, kmax), -np.inf)
        self._means = np.zeros((n, kmax, d))
        self._vars = np.ones((n, kmax))
        with np.errstate(divide="ignore"):
            for i, c in enumerate(cands):
                self._logw[i, : c.k] = np.log(c.weights)
                self._means[i, : c.k] = c.means
                self._vars[i, : c.k] = c.variances

    @property
    def candidates(self):
        return list(self._cands)

    @property
    def size(self):
        return len(self)

    @property
    def dim(self):
        return self.frame.dim

    def __len__(self):
        return len(self._cands)

    def __getitem__(self, i) -> Mixture:
        return self._cands[int(i)]

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    def params(self, idx):
        """``(log_weights, coords, variances)`` of shapes (B, k), (B, k, m), (B, k)."""
        idx = np.asarray(idx, dtype=np.int64)
        return self._logw[idx], self._means[idx], self._vars[idx]


class GridFamily(CandidateFamily):
    """Lazily enumerated product family of k-component candidates.

    Every candidate picks ``k`` component slots and one weight tuple. With
    ``shared_variance=True`` a slot is a point from ``points`` and the whole
    candidate shares one value from ``variances`` (index layout
    ``(slots, weight, variance)``). Otherwise ``points[j]`` and
    ``variances[j]`` form one component and the layout is
    ``(slots, weight)``.

    ``slots`` ranges over all ordered k-tuples of points by default. With
    ``unordered=True`` it ranges over multisets (nondecreasing tuples)
    instead; paired with every weight tuple this still reaches each distinct
    mixture of the ordered family, once instead of up to ``k!`` times.
    """

    def __init__(self, frame, points, variances, weight_tuples, shared_variance, unordered=False):
        self.frame = frame
        self.points = np.asarray(points, dtype=float).reshape(len(points), frame.rank)
        self.variances = np.asarray(variances, dtype=float)
        self.weight_tuples = np.asarray(weight_tuples, dtype=float)
        self.shared_variance = bool(shared_variance)
        self.unordered = bool(unordered)
        self.k = self.weight_tuples.shape[1]
        if not self.shared_variance and len(self.variances) != len(self.points):
            raise ValueError("paired layout needs one variance per point")
        P = len(self.points)
        n_slots = math.comb(P + self.k - 1, self.k) if self.unordered else P**self.k
        shape = (n_slots, len(self.weight_tuples))
        if self.shared_variance:
            shape += (len(self.variances),)
        self.shape = shape
        self._size = math.prod(shape)
        if self._size == 0:
            raise ValueError("empty candidate family")
        if self._size >= 2**62:
            raise OverflowError(f"family of {self._size} candidates cannot be indexed")
        if self.unordered:
            # binom[c, i] = C(c, i) for the combinatorial number system
            top = P + self.k
            self._binom = np.array(
                [[math.comb(c, i) for i in range(self.k + 1)] for c in range(top)], dtype=np.int64
            )
        with np.errstate(divide="ignore"):
            self._logw_tab = np.log(self.weight_tuples)

    @classmethod
    def count(cls, n_points, n_weights, n_variances, k, unordered=False):
        """Family size without building it (exact Python integer)."""
        slots = math.comb(n_points + k - 1, k) if unordered else n_points**k
        return slots * n_weights * n_variances

    def __len__(self):
        return self._size

    @property
    def candidates(self):
        return [self[i] for i in range(len(self))]

    def slots(self, slot_index):
        """Point indices ``(B, k)`` of slot numbers ``slot_index``."""
        r = np.asarray(slot_index, dtype=np.int64).copy()
        P = len(self.points)
        if not self.unordered:
            return np.stack(np.unravel_index(r, (P,) * self.k), axis=-1)
        # colex unranking of a k-combination of P + k - 1 items, then
        # subtracting i from the i-th smallest element gives the multiset
        out = np.empty(r.shape + (self.k,), dtype=np.int64)
        for i in range(self.k, 0, -1):
            c = np.searchsorted(self._binom[:, i], r, side="right") - 1
            r -= self._binom[c, i]
            out[..., i - 1] = c - (i - 1)
        return out

    def decode(self, idx):
        return np.unravel_index(np.asarray(idx, dtype=np.int64), self.shape)

    def params(self, idx):
        parts = self.decode(idx)
        slots = self.slots(parts[0])
        logw = self._logw_tab[parts[1]]
        coords = self.points[slots]
        if self.shared_variance:
            var = np.repeat(self.variances[parts[2]][..., None], self.k, axis=-1)
        else:
            var = self.variances[slots]
        return logw, coords, var

    def __getitem__(self, i) -> Mixture:
        i = int(i)
        if not 0 <= i < len(self):
            raise IndexError(i)
        logw, coords, var = self.params(np.array([i]))
        return Mixture(np.exp(logw[0]), self.frame.lift(coords[0]), var[0])


# -- game kernel -----------------------------------------------------------


class _BaseDraws:
    """Standard variates shared by every candidate in one batch of games.

    A draw from candidate ``s`` is obtained by inverting its weight CDF at
    ``u``, shifting and scaling ``e`` by the chosen component, and scaling
    the chi-square residual ``x`` by its variance.
    """

    def __init__(self, n, m, d, rng):
        self.u = rng.random(n)
        self.et = rng.standard_normal((m, n))
        self.x = rng.chisquare(d - m, size=n) if d > m else np.zeros(n)


def _play(family, pidx, qidx, data, n_mc, rng):
    """Play games ``pidx[i]`` vs ``qidx[i]``; returns (mu_f, mu_p, mu_q, winners).

    Monte Carlo draws come from standard variates generated once per call
    (one set for the p side, one for the q side) and pushed through each
    candidate's parameters, so every game sees samples with exactly the
    candidate's distribution while generation cost is shared.
    """
    zt, r2 = data
    d, m = family.frame.dim, family.frame.rank
    G = len(pidx)
    if G == 0:
        e = np.empty(0)
        return e, e, e, np.empty(0, dtype=np.int64)
    n = r2.shape[0]
    bp = _BaseDraws(n_mc, m, d, rng)
    bq = _BaseDraws(n_mc, m, d, rng)
    hits = np.empty((3, G), dtype=np.int64)
    step = max(1, _BATCH_POINTS // max(n, n_mc))
    zs, rs = zt[None], r2[None]
    for lo in range(0, G, step):
        sl = slice(lo, min(G, lo + step))
        P = tuple(np.ascontiguousarray(a, dtype=float) for a in family.params(pidx[sl]))
        Q = tuple(np.ascontiguousarray(a, dtype=float) for a in family.params(qidx[sl]))
        B = sl.stop - sl.start
        hits[0, sl] = _kernels.count_greater(P, Q, zs, rs, float(d))
        yt = np.empty((B, m, n_mc))
        yr = np.empty((B, n_mc))
        for row, (base, src) in ((1, (bp, P)), (2, (bq, Q))):
            _kernels.draw(*src, base.u, base.et, base.x, yt, yr)
            hits[row, sl] = _kernels.count_greater(P, Q, yt, yr, float(d))
    mu_f = hits[0] / n
    mu_p = hits[1] / n_mc
    mu_q = hits[2] / n_mc
    dp = np.abs(mu_p - mu_f)
    dq = np.abs(mu_q - mu_f)
    winners = np.where(dp < dq, pidx, np.where(dq < dp, qidx, np.minimum(pidx, qidx)))
    return mu_f, mu_p, mu_q, winners


# -- records ---------------------------------------------------------------


@dataclass(frozen=True)
class GameRecord:
    index_p: int
    index_q: int
    mu_f: float
    mu_p: float
    mu_q: float
    winner: int
    stage: str = "pair"
    round: int = 0

    def to_dict(self):
        return {
            "index_p": self.index_p,
            "index_q": self.index_q,
            "mu_f": self.mu_f,
            "mu_p": self.mu_p,
            "mu_q": self.mu_q,
            "winner": self.winner,
            "stage": self.stage,
            "round": self.round,
        }


class TournamentAudit:
    """Column store of every game played; iterates as :class:`GameRecord`."""

    _STAGES = ("knockout", "pool", "final")

    def __init__(self):
        self._blocks = []

    def add(self, stage, rnd, pidx, qidx, mu_f, mu_p, mu_q, winners):
        if len(pidx):
            self._blocks.append((self._STAGES.index(stage), rnd, pidx, qidx, mu_f, mu_p, mu_q, winners))

    def __len__(self):
        return sum(len(b[2]) for b in self._blocks)

    def count(self, stage=None):
        if stage is None:
            return len(self)
        s = self._STAGES.index(stage)
        return sum(len(b[2]) for b in self._blocks if b[0] == s)

    def __iter__(self):
        for s, rnd, pi, qi, mf, mp, mq, w in self._blocks:
            for j in range(len(pi)):
                yield GameRecord(int(pi[j]), int(qi[j]), float(mf[j]), float(mp[j]), float(mq[j]),
                                 int(w[j]), self._STAGES[s], int(rnd))

    def __eq__(self, other):
        if not isinstance(other, TournamentAudit) or len(self._blocks) != len(other._blocks):
            return False
        for a, b in zip(self._blocks, other._blocks):
            if a[:2] != b[:2] or not all(np.array_equal(x, y) for x, y in zip(a[2:], b[2:])):
                return False
        return True

    def write_jsonl(self, fh):
        for rec in self:
            fh.write(json.dumps(rec.to_dict()) + "\n")


# -- public API ------------------------------------------------------------


def _as_points(family, data):
    x = data.samples if isinstance(data, Dataset) else np.asarray(data, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[1] != family.dim:
        raise ValueError(f"data dimension {x.shape[1]} does not match family dim {family.dim}")
    if x.shape[0] < 1:
        raise ValueError("no data")
    z, r2 = family.frame.embed(x)
    return np.ascontiguousarray(z.T), np.ascontiguousarray(r2)


def scheffe_pair(p: Mixture, q: Mixture, data, n_mc=None, seed=0, index_p=0, index_q=1) -> GameRecord:
    """One Scheffe* game between ``p`` and ``q``.

    ``p`` wins when its own Scheffe-set frequency is strictly closer to the
    data frequency; exact ties go to the lower index.
    """
    fam = CandidateFamily([p, q])
    pts = _as_points(fam, data)
    n_mc = pts[1].shape[0] if n_mc is None else int(n_mc)
    if n_mc < 1:
        raise ValueError("n_mc must be positive")
    mf, mp, mq, _ = _play(fam, np.array([0]), np.array([1]), pts, n_mc, stream(seed, "pair"))
    dp, dq = abs(mp[0] - mf[0]), abs(mq[0] - mf[0])
    winner = index_p if dp < dq else index_q if dq < dp else min(index_p, index_q)
    return GameRecord(index_p, index_q, float(mf[0]), float(mp[0]), float(mq[0]), winner)


def round_robin(family, members, data_pts, n_mc, rng, audit=None, stage="final", rnd=0):
    """Every pair of ``members`` plays once; return the member with most wins.

    Ties go to the lowest candidate index.
    """
    members = np.unique(np.asarray(members, dtype=np.int64))
    if len(members) == 1:
        return int(members[0])
    ii, jj = np.triu_indices(len(members), 1)
    p, q = members[ii], members[jj]
    mf, mp, mq, w = _play(family, p, q, data_pts, n_mc, rng)
    if audit is not None:
        audit.add(stage, rnd, p, q, mf, mp, mq, w)
    wins = (w[:, None] == members[None, :]).sum(axis=0)
    return int(members[np.argmax(wins)])


def game_budget(size):
    """Upper bound ``|F| (2 log2 |F| + 1)`` on the games of one tournament."""
    return size * (2 * math.log2(size) + 1) if size > 1 else 0


def modified_scheffe(F, data, eps=None, delta=None, seed=0, n_mc=None):
    """Near-linear-time knockout selection over a candidate family.

    Parameters
    ----------
    F : CandidateFamily
    data : Dataset or array_like
        Samples from the unknown distribution.
    eps, delta : float, optional
        Target accuracy and failure probability; only used to warn when the
        sample is smaller than ``log(|F| / delta) / eps**2``.
    seed : int
        Drives pairings, byes, pool draws and Monte Carlo samples.
    n_mc : int, optional
        Samples drawn from each candidate per game; defaults to the number of
        data points.

    Returns
    -------
    winner : Mixture
    winner_index : int
    audit : TournamentAudit
    """
    N = len(F)
    if N < 1:
        raise ValueError("empty family")
    pts = _as_points(F, data)
    n = pts[1].shape[0]
    n_mc = n if n_mc is None else int(n_mc)
    if eps is not None and delta is not None and N > 1:
        need = math.log(N / delta) / eps**2
        if n < need:
            log.warning("modified_scheffe: %d samples for %d candidates; log(|F|/delta)/eps^2 = %.0f", n, N, need)
    audit = TournamentAudit()
    pool_size = math.ceil(round(N ** (1.0 / 3.0), 9))
    G = np.arange(N, dtype=np.int64)
    kept = []
    rnd = 0
    while len(G) > 1:
        rng = stream(seed, "round", rnd)
        perm = rng.permutation(G)
        bye = None
        if len(perm) % 2:
            j = int(rng.integers(len(perm)))
            bye = perm[j]
            perm = np.delete(perm, j)
        p, q = perm[0::2], perm[1::2]
        mf, mp, mq, w = _play(F, p, q, pts, n_mc, rng)
        audit.add("knockout", rnd, p, q, mf, mp, mq, w)
        G = np.sort(w if bye is None else np.append(w, bye))
        prng = stream(seed, "pool", rnd)
        A = prng.choice(G, size=min(len(G), pool_size), replace=False)
        kept.append(round_robin(F, A, pts, n_mc, prng, audit, "pool", rnd))
        rnd += 1
    C = kept if kept else [int(G[0])]
    best = round_robin(F, C, pts, n_mc, stream(seed, "final"), audit, "final", rnd)
    return F[best], best, audit


def modified_scheffe_amplified(F, data, eps=None, delta=0.1, seed=0, n_mc=None, repeats=None):
    """Boost the success probability of :func:`modified_scheffe`.

    Splits the data into ``repeats + 1`` folds, runs one tournament per fold
    (``repeats = ceil(ln(1/delta) / ln 3)`` by default, each run treated as
    failing with probability at most 1/3), and plays a round-robin among the
    run winners on the held-out fold.

    Returns
    -------
    winner : Mixture
    winner_index : int
    runs : list of (winner_index, TournamentAudit)
    """
    if repeats is None:
        repeats = max(1, math.ceil(math.log(1.0 / delta) / math.log(3.0)))
    x = data.samples if isinstance(data, Dataset) else np.asarray(data, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] < repeats + 1:
        raise ValueError(f"need at least {repeats + 1} samples for {repeats} repeats")
    folds = np.array_split(x, repeats + 1)
    runs = []
    for r in range(repeats):
        _, idx, aud = modified_scheffe(F, folds[r], eps, delta, stream(seed, "amp", r).integers(2**62), n_mc)
        runs.append((idx, aud))
    pts = _as_points(F, folds[-1])
    nm = pts[1].shape[0] if n_mc is None else int(n_mc)
    best = round_robin(F, [i for i, _ in runs], pts, nm, stream(seed, "amp-final"))
    return F[best], best, runs
