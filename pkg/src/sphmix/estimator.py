"""End-to-end estimators.

:func:`learn_k_sphere` learns a mixture of ``k`` spherical Gaussians with a
shared variance in ``d >= 2`` dimensions::

    variance estimate -> coarse single-linkage -> recursive spectral splits
    -> span grids per cluster -> candidate family -> modified Scheffe

:func:`learn_1d` learns a ``k``-component one-dimensional mixture from a
family whose components are centred at samples with variances given by
squared sample gaps.

Every grid constant has a config knob. Defaults reproduce the textbook grids,
which are astronomically large for anything but toy problems; the
``max_candidates`` guard turns that into an explicit error.
"""

import itertools
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from ._rng import derive_seed, stream
from .cluster import (
    Clustering,
    coarse_single_linkage,
    estimate_variance,
    make_thresholds,
    recursive_spectral_cluster,
)
from .linalg import ScatterStats, centered_covariance, top_eigs
from .model import Dataset, Mixture
from .scheffe import Frame, GridFamily, modified_scheffe, modified_scheffe_amplified

log = logging.getLogger(__name__)


class CandidateOverflowError(OverflowError):
    """The candidate family would exceed ``max_candidates``.

    Attributes
    ----------
    count : int
        Exact size the family would have had.
    limit : int
    """

    def __init__(self, count, limit):
        super().__init__(
            f"candidate family has {count} members, above max_candidates={limit}; "
            "coarsen the grids (grid_scale, weight_scale, span_radius, sigma_grid_size)"
        )
        self.count = count
        self.limit = limit


@dataclass(frozen=True)
class EstimatorConfig:
    """Settings of both estimators.

    Parameters
    ----------
    k : int
        Number of components.
    eps, delta : float
        Target accuracy and failure probability, both in (0, 1).
    seed : int
        Root seed of every random choice.
    grid_scale : float
        Multiplier (>= 1) on the span grid step ``eps / (16 k^1.5)`` and on the
        weight grid step.
    max_candidates : int, optional
        Refuse to build larger families.
    sigma_grid_size : int, optional
        Evenly spaced subset of the ``2d`` variance grid values.
    weight_scale : float, optional
        Separate multiplier on the weight step; defaults to ``grid_scale``.
    span_radius : float, optional
        Half-width of the span grid in units of ``sigma_hat``; defaults to
        ``span_const * sqrt(k^4 / eps * log(n^2 / delta))``.
    span_const, coarse_const, gate_const, link_const : float
        Constants of the span half-width, coarse merge threshold, spectral
        gate and projected link length.
    unordered : bool
        Enumerate each set of component slots once (see :class:`GridFamily`).
    tournament_samples : int, optional
        Play the tournament on a seeded subset of this many samples.
    n_mc : int, optional
        Monte Carlo draws per candidate per game; defaults to the number of
        tournament samples.
    candidate_samples : int, optional
        One-dimensional estimator only: samples used to build the family,
        defaulting to ``ceil(120 k log(4k / delta) / eps)``.
    amplify : bool
        Use :func:`modified_scheffe_amplified` for the selection.
    eig_tol : float
        Residual tolerance of the power iterations.
    eig_max_iter : int, optional
        Iteration cap of the power iterations.
    """

    k: int
    eps: float
    delta: float = 0.1
    seed: int = 0
    grid_scale: float = 1.0
    max_candidates: Optional[int] = None
    sigma_grid_size: Optional[int] = None
    weight_scale: Optional[float] = None
    span_radius: Optional[float] = None
    span_const: float = 200.0
    coarse_const: float = 23.0
    gate_const: float = 12.0
    link_const: float = 3.0
    unordered: bool = False
    tournament_samples: Optional[int] = None
    n_mc: Optional[int] = None
    candidate_samples: Optional[int] = None
    amplify: bool = False
    eig_tol: float = 1e-8
    eig_max_iter: Optional[int] = None

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be at least 1")
        if not 0 < self.eps < 1 or not 0 < self.delta < 1:
            raise ValueError("eps and delta must lie in (0, 1)")
        if self.grid_scale < 1:
            raise ValueError("grid_scale must be >= 1")
        if self.weight_scale is not None and self.weight_scale <= 0:
            raise ValueError("weight_scale must be positive")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        for name in ("max_candidates", "sigma_grid_size", "tournament_samples", "n_mc", "candidate_samples"):
            v = getattr(self, name)
            if v is not None and v < 1:
                raise ValueError(f"{name} must be positive")

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True, eq=False)
class SpanBasis:
    """``origin + span(basis)`` with grid steps measured in units of ``scale``."""

    cluster_id: int
    origin: np.ndarray
    basis: np.ndarray
    scale: float

    @property
    def rank(self):
        return self.basis.shape[1]


@dataclass
class Report:
    """Intermediate quantities of one estimator run."""

    sigma2_hat: Optional[float] = None
    thresholds: Optional[dict] = None
    cluster_sizes: list = field(default_factory=list)
    n_discarded: int = 0
    events: list = field(default_factory=list)
    grids: dict = field(default_factory=dict)
    n_candidates: int = 0
    n_tournament: int = 0
    winner_index: Optional[int] = None
    games: int = 0
    l1_estimate: Optional[float] = None
    clustering: Optional[Clustering] = field(default=None, repr=False)
    audit: object = field(default=None, repr=False)

    def to_dict(self):
        out = {
            "sigma2_hat": self.sigma2_hat,
            "thresholds": self.thresholds,
            "cluster_sizes": self.cluster_sizes,
            "n_discarded": self.n_discarded,
            "events": self.events,
            "grids": self.grids,
            "n_candidates": self.n_candidates,
            "n_tournament": self.n_tournament,
            "winner_index": self.winner_index,
            "games": self.games,
        }
        if self.l1_estimate is not None:
            out["l1_estimate"] = self.l1_estimate
        return out


# -- grids -----------------------------------------------------------------


def weight_grid(step):
    """``{0, step, 2 step, ...}`` up to 1."""
    m = int(math.floor(1.0 / step + 1e-9))
    return np.arange(m + 1) * step


def weight_tuples(k, step):
    """All ``(w_1, ..., w_k)`` with ``w_1..w_{k-1}`` on the grid and ``w_k = 1 - sum``.

    Tuples whose remainder is negative are dropped.
    """
    W = weight_grid(step)
    if k == 1:
        return np.ones((1, 1))
    rows = []
    for head in itertools.product(range(len(W)), repeat=k - 1):
        w = W[list(head)]
        rest = 1.0 - w.sum()
        if rest < -1e-12:
            continue
        rows.append(np.append(w, max(rest, 0.0)))
    return np.array(rows)


def variance_grid(sigma2_hat, d, size=None):
    """``sigma2_hat (1 + i / d)`` for ``-d < i <= d``, optionally thinned evenly."""
    i = np.arange(-d + 1, d + 1)
    vals = sigma2_hat * (1.0 + i / d)
    if size is not None and size < len(vals):
        pick = np.unique(np.round(np.linspace(0, len(vals) - 1, size)).astype(int))
        vals = vals[pick]
    return vals


def span_grid_1d(eps, k, n, delta, grid_scale=1.0, span_radius=None, span_const=200.0):
    """Return ``(step, half_count)``: the grid is ``step * {-half_count..half_count}``."""
    step = grid_scale * eps / (16.0 * k**1.5)
    L = span_radius if span_radius is not None else span_const * math.sqrt(k**4 / eps * math.log(n**2 / delta))
    return step, int(math.floor(L / step + 1e-9))


# -- spans -----------------------------------------------------------------


def cluster_span(stats: ScatterStats, k, sigma2_hat, tol=1e-8, max_iter=None, seed=0, cluster_id=0) -> SpanBasis:
    """Top ``k - 1`` eigenvectors of ``S(C)`` anchored at the cluster mean."""
    if stats.count < 2:
        raise ValueError("cluster_span needs at least two points")
    d = stats.dim
    r = min(k - 1, d)
    if r == 0:
        basis = np.zeros((d, 0))
    else:
        S = centered_covariance(stats, sigma2_hat)
        _, basis = top_eigs(S, r, tol=tol, max_iter=max_iter, seed=seed, which="algebraic")
    return SpanBasis(cluster_id, stats.mean.copy(), basis, math.sqrt(sigma2_hat))


def _joint_frame(spans):
    """Orthonormal frame containing every span's origin and directions."""
    o0 = spans[0].origin
    cols = [s.basis for s in spans] + [(s.origin - o0)[:, None] for s in spans[1:]]
    A = np.hstack(cols) if cols else np.zeros((len(o0), 0))
    if len(spans) == 1:
        return Frame(o0, spans[0].basis)
    if A.shape[1] == 0:
        return Frame(o0, A)
    U, sv, _ = np.linalg.svd(A, full_matrices=False)
    rank = int(np.sum(sv > 1e-10 * max(1.0, sv.max())))
    return Frame(o0, U[:, :rank])


def span_points(spans, step, half):
    """Frame and frame coordinates of every grid point of every span.

    Span ``C`` contributes ``origin_C + scale * sum_i g_i u_i`` for ``g`` on
    the grid ``step * {-half..half}`` in every direction.
    """
    frame = _joint_frame(spans)
    g = step * np.arange(-half, half + 1)
    blocks = []
    for s in spans:
        if s.rank == 0:
            local = np.zeros((1, 0))
        else:
            mesh = np.meshgrid(*([g] * s.rank), indexing="ij")
            local = np.stack([m.ravel() for m in mesh], axis=-1)
        if len(spans) == 1:
            blocks.append(s.scale * local)
        else:
            shift = frame.basis.T @ (s.origin - frame.origin)
            blocks.append(shift + s.scale * local @ (s.basis.T @ frame.basis))
    return frame, np.vstack(blocks)


def build_candidates(spans, sigma2_hat, cfg: EstimatorConfig, n) -> GridFamily:
    """Family of shared-variance candidates over the span grids.

    Raises
    ------
    ValueError
        If ``spans`` is empty.
    CandidateOverflowError
        If the family would exceed ``cfg.max_candidates``.
    """
    if not spans:
        raise ValueError("no qualifying clusters to build candidates from")
    k = cfg.k
    d = spans[0].origin.shape[0]
    step, half = span_grid_1d(cfg.eps, k, n, cfg.delta, cfg.grid_scale, cfg.span_radius, cfg.span_const)
    n_points = sum((2 * half + 1) ** s.rank for s in spans)
    wscale = cfg.grid_scale if cfg.weight_scale is None else cfg.weight_scale
    W = weight_tuples(k, wscale * cfg.eps / (4 * k))
    V = variance_grid(sigma2_hat, d, cfg.sigma_grid_size)
    count = GridFamily.count(n_points, len(W), len(V), k, cfg.unordered)
    if cfg.max_candidates is not None and count > cfg.max_candidates:
        raise CandidateOverflowError(count, cfg.max_candidates)
    if count >= 2**62:
        raise CandidateOverflowError(count, 2**62 - 1)
    frame, pts = span_points(spans, step, half)
    return GridFamily(frame, pts, V, W, shared_variance=True, unordered=cfg.unordered)


# -- selection -------------------------------------------------------------


def _select(F, x, cfg, report):
    n = x.shape[0]
    if cfg.tournament_samples is not None and cfg.tournament_samples < n:
        pick = np.sort(stream(cfg.seed, "tournament").choice(n, size=cfg.tournament_samples, replace=False))
        x = x[pick]
    report.n_tournament = int(x.shape[0])
    seed = derive_seed(cfg.seed, "scheffe")
    if cfg.amplify:
        winner, idx, runs = modified_scheffe_amplified(F, x, cfg.eps, cfg.delta, seed, cfg.n_mc)
        report.games = sum(len(a) for _, a in runs)
        report.audit = runs
    else:
        winner, idx, audit = modified_scheffe(F, x, cfg.eps, cfg.delta, seed, cfg.n_mc)
        report.games = len(audit)
        report.audit = audit
    report.winner_index = int(idx)
    return winner


def learn_k_sphere(data, cfg: EstimatorConfig):
    """Learn a mixture of ``cfg.k`` spherical Gaussians with a shared variance.

    Returns
    -------
    mixture : Mixture
    report : Report
    """
    x = data.samples if isinstance(data, Dataset) else np.asarray(data, dtype=float)
    if x.ndim != 2:
        raise ValueError("data must be an (n, d) array")
    n, d = x.shape
    if d < 2:
        raise ValueError("learn_k_sphere needs d >= 2; use learn_1d")
    k = cfg.k
    report = Report()
    s2 = estimate_variance(x, k)
    if s2 <= 0:
        raise ValueError("variance estimate is zero: leading samples coincide")
    report.sigma2_hat = s2
    th = make_thresholds(s2, n, d, k, cfg.eps, cfg.delta, cfg.coarse_const, cfg.gate_const, cfg.link_const)
    report.thresholds = th.to_dict()
    cl = coarse_single_linkage(x, th)
    cl = recursive_spectral_cluster(x, cl, th, seed=derive_seed(cfg.seed, "spectral"), tol=cfg.eig_tol,
                                    max_iter=cfg.eig_max_iter)
    report.clustering = cl
    report.cluster_sizes = cl.sizes
    report.n_discarded = len(cl.discarded)
    report.events = cl.events
    big = [(i, c) for i, c in enumerate(cl.clusters) if c.size >= th.min_cluster_fraction * n and c.size >= 2]
    if not big:
        raise ValueError("no cluster holds the minimum fraction of samples")
    spans = [
        cluster_span(c.stats, k, s2, cfg.eig_tol, cfg.eig_max_iter, derive_seed(cfg.seed, "span", i), i)
        for i, c in big
    ]
    F = build_candidates(spans, s2, cfg, n)
    step, half = span_grid_1d(cfg.eps, k, n, cfg.delta, cfg.grid_scale, cfg.span_radius, cfg.span_const)
    report.grids = {
        "span_step": step,
        "span_points_per_axis": 2 * half + 1,
        "span_ranks": [s.rank for s in spans],
        "n_weight_tuples": len(F.weight_tuples),
        "n_variances": len(F.variances),
        "frame_rank": F.frame.rank,
    }
    report.n_candidates = len(F)
    winner = _select(F, x, cfg, report)
    return winner, report


# -- one dimension ---------------------------------------------------------


def default_candidate_samples(k, eps, delta):
    return math.ceil(120 * k * math.log(4 * k / delta) / eps)


def build_candidates_1d(samples, k, eps, delta=None, weight_step=None, unordered=False, max_candidates=None):
    """Family of ``k``-mixtures of ``N(x_j, (x_j - x_l)^2)`` over ordered pairs ``j != l``.

    Components with equal ``(mean, variance)`` are kept once; pairs with
    ``x_j == x_l`` are skipped. Weights lie on ``{0, eps/2k, ..., 1}`` (or
    ``weight_step``) with the last weight taking the remainder.
    """
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < 2:
        raise ValueError("need at least two samples")
    j, l = np.nonzero(~np.eye(x.size, dtype=bool))
    var = (x[j] - x[l]) ** 2
    ok = var > 0
    if not ok.any():
        raise ValueError("all samples are identical; no positive variance available")
    comps = np.unique(np.column_stack([x[j][ok], var[ok]]), axis=0)
    W = weight_tuples(k, eps / (2 * k) if weight_step is None else weight_step)
    count = GridFamily.count(len(comps), len(W), 1, k, unordered)
    if max_candidates is not None and count > max_candidates:
        raise CandidateOverflowError(count, max_candidates)
    return GridFamily(Frame.identity(1), comps[:, :1], comps[:, 1], W, shared_variance=False, unordered=unordered)


def learn_1d(samples, cfg: EstimatorConfig):
    """Learn a ``k``-component one-dimensional Gaussian mixture.

    The first ``cfg.candidate_samples`` samples (default
    ``ceil(120 k log(4k / delta) / eps)``) build the family; the tournament
    sees the rest.
    """
    x = samples.samples if isinstance(samples, Dataset) else np.asarray(samples, dtype=float)
    x = x.reshape(-1)
    n1 = cfg.candidate_samples or default_candidate_samples(cfg.k, cfg.eps, cfg.delta)
    if x.size <= n1:
        raise ValueError(f"need more than {n1} samples ({n1} build the family), got {x.size}")
    report = Report()
    wscale = cfg.grid_scale if cfg.weight_scale is None else cfg.weight_scale
    F = build_candidates_1d(x[:n1], cfg.k, cfg.eps, weight_step=wscale * cfg.eps / (2 * cfg.k),
                            unordered=cfg.unordered, max_candidates=cfg.max_candidates)
    report.grids = {"candidate_samples": n1, "n_components": len(F.points), "n_weight_tuples": len(F.weight_tuples)}
    report.n_candidates = len(F)
    winner = _select(F, x[n1:, None], cfg, report)
    return winner, report
