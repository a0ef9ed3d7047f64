"""L1 distances between mixtures.

Three routes with different cost/accuracy trade-offs:

* :func:`l1_mc` -- Monte Carlo under the first argument, any dimension.
* :func:`l1_quadrature_1d` -- deterministic adaptive quadrature, d = 1 only.
* :func:`l1_upper_bound_product` -- closed-form Bhattacharyya bound for
  product Gaussians, used to argue grid resolution.
"""

from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize

from ._rng import stream
from .model import Component, Mixture, log_pdf, sample

_WINDOW = 12.0


@dataclass(frozen=True)
class L1Estimate:
    value: float
    std_error: float
    n_mc: int
    seed: int

    def __float__(self):
        return self.value

    def to_dict(self):
        return {"value": self.value, "std_error": self.std_error, "n_mc": self.n_mc, "seed": self.seed}


def l1_mc(f: Mixture, g: Mixture, n_mc: int = 100_000, seed: int = 0, chunk: int = 50_000) -> L1Estimate:
    """Estimate ``||f - g||_1 = E_{x~f} |1 - g(x)/f(x)|`` by sampling from ``f``.

    The standard error is the jackknife error of the sample mean. The point
    estimate is clamped to ``[0, 2]``.
    """
    if f.dim != g.dim:
        raise ValueError(f"dimension mismatch: {f.dim} vs {g.dim}")
    if n_mc < 1000:
        raise ValueError("n_mc must be at least 1000")
    x = sample(f, n_mc, int(stream(seed, "l1_mc").integers(2**62))).samples
    vals = np.empty(n_mc)
    for lo in range(0, n_mc, chunk):
        xs = x[lo:lo + chunk]
        vals[lo:lo + chunk] = np.abs(-np.expm1(log_pdf(g, xs) - log_pdf(f, xs)))
    mean = vals.mean()
    # jackknife standard error of a mean reduces to s / sqrt(n)
    se = float(vals.std(ddof=1) / np.sqrt(n_mc))
    return L1Estimate(float(min(max(mean, 0.0), 2.0)), se, int(n_mc), int(seed))


def _windows(*mixtures):
    spans = []
    for m in mixtures:
        sd = np.sqrt(m.variances)
        mu = m.means[:, 0]
        spans.extend(zip(mu - _WINDOW * sd, mu + _WINDOW * sd))
    spans.sort()
    merged = [list(spans[0])]
    for a, b in spans[1:]:
        if a <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], b)
        else:
            merged.append([a, b])
    return merged


def l1_quadrature_1d(f: Mixture, g: Mixture, abs_tol: float = 1e-8, limit: int = 200) -> float:
    """``integral |f - g|`` for one-dimensional mixtures by adaptive quadrature.

    The integration range is the union of ``mean +- 12 sd`` windows of every
    component. Sign changes of ``f - g`` are located first and used as
    breakpoints so each panel integrates a smooth function.

    Raises
    ------
    RuntimeError
        If the accumulated error estimate exceeds ``abs_tol``.
    """
    if f.dim != 1 or g.dim != 1:
        raise ValueError("l1_quadrature_1d needs one-dimensional mixtures")

    def h(t):
        t = np.asarray(t, dtype=float)
        return np.exp(log_pdf(f, t.reshape(-1, 1))) - np.exp(log_pdf(g, t.reshape(-1, 1)))

    # probe grid resolving every component on its own scale
    probes = []
    for m in (f, g):
        for mu, v in zip(m.means[:, 0], m.variances):
            sd = np.sqrt(v)
            probes.append(mu + sd * np.linspace(-_WINDOW, _WINDOW, 481))
    probes = np.unique(np.concatenate(probes))

    pieces = []
    for a, b in _windows(f, g):
        grid = np.concatenate([[a], probes[(probes > a) & (probes < b)], [b]])
        hv = h(grid)
        cuts = [a]
        for i in np.nonzero(np.sign(hv[:-1]) * np.sign(hv[1:]) < 0)[0]:
            cuts.append(optimize.brentq(lambda t: float(h(t)[0]), grid[i], grid[i + 1], xtol=1e-14))
        cuts.append(b)
        # subdivide further at the probe nodes so no panel hides a narrow component
        nodes = np.unique(np.concatenate([cuts, grid[:: 40]]))
        pieces.extend(zip(nodes[:-1], nodes[1:]))

    total, err = 0.0, 0.0
    per_piece = abs_tol / max(1, len(pieces))
    for a, b in pieces:
        if b <= a:
            continue
        val, e = integrate.quad(lambda t: abs(float(h(t)[0])), a, b, epsabs=per_piece, epsrel=0.0, limit=limit)
        total += val
        err += e
    if err > abs_tol:
        raise RuntimeError(f"quadrature error estimate {err:.3e} exceeds abs_tol {abs_tol:.3e}")
    return float(min(max(total, 0.0), 2.0))


def bhattacharyya_1d(p: Component, q: Component) -> float:
    """Bhattacharyya coefficient ``integral sqrt(p q)`` of two 1-D Gaussians."""
    mp, mq = float(np.ravel(p.mean)[0]), float(np.ravel(q.mean)[0])
    s1, s2 = np.sqrt(p.variance), np.sqrt(q.variance)
    tot = p.variance + q.variance
    y = np.sqrt(2.0 * s1 * s2 / tot)
    x = (mp - mq) ** 2 / (4.0 * tot)
    return float(y * np.exp(-x))


def l1_upper_bound_product(p, q) -> float:
    """Bound ``||P - Q||_1 <= sqrt(8 * sum_i (1 - B(p_i, q_i)))`` for product Gaussians.

    ``p`` and ``q`` are equal-length sequences of one-dimensional
    :class:`Component` (one per coordinate).
    """
    p, q = list(p), list(q)
    if len(p) != len(q):
        raise ValueError("product distributions must have equal dimension")
    s = sum(1.0 - bhattacharyya_1d(a, b) for a, b in zip(p, q))
    return float(min(np.sqrt(8.0 * max(s, 0.0)), 2.0))


def spherical_product(mean, variance):
    """Coordinates of ``N(mean, variance * I)`` as 1-D components."""
    return [Component(np.array([m]), variance) for m in np.atleast_1d(mean)]
