"""Small dense linear algebra used by the clustering and span stages.

Only symmetric matrices appear in the estimator (sample covariances with the
noise floor subtracted), so eigenpairs are found by power iteration with
orthogonal deflation. Nothing here is tuned for large or sparse problems.
"""

from dataclasses import dataclass

import numpy as np

from ._rng import stream


class NonConvergenceError(RuntimeError):
    """Power iteration did not meet its residual tolerance.

    Attributes
    ----------
    best : tuple
        ``(eigenvalue, eigenvector, residual)`` of the last iterate.
    """

    def __init__(self, msg, best=None):
        super().__init__(msg)
        self.best = best


@dataclass(frozen=True, eq=False)
class ScatterStats:
    """Count, mean and scatter matrix ``sum (x - mean)(x - mean)^T`` of a point set."""

    count: int
    mean: np.ndarray
    scatter: np.ndarray

    @property
    def dim(self):
        return self.mean.shape[0]

    def merge(self, other: "ScatterStats") -> "ScatterStats":
        """Combine two disjoint sets' statistics (pairwise update)."""
        if other.dim != self.dim:
            raise ValueError("dimension mismatch")
        if self.count == 0:
            return other
        if other.count == 0:
            return self
        n = self.count + other.count
        delta = other.mean - self.mean
        mean = self.mean + delta * (other.count / n)
        scatter = self.scatter + other.scatter + np.outer(delta, delta) * (self.count * other.count / n)
        return ScatterStats(n, mean, 0.5 * (scatter + scatter.T))


def accumulate(points) -> ScatterStats:
    """Two-pass mean and scatter of the rows of ``points``."""
    x = np.asarray(points, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError("accumulate needs a nonempty (n, d) array")
    mean = x.mean(axis=0)
    c = x - mean
    scatter = c.T @ c
    return ScatterStats(x.shape[0], mean, 0.5 * (scatter + scatter.T))


def centered_covariance(stats: ScatterStats, sigma2: float) -> np.ndarray:
    """Sample covariance with ``sigma2`` removed from the diagonal."""
    if stats.count < 2:
        raise ValueError("need at least two points for a covariance")
    out = stats.scatter / stats.count
    out[np.diag_indices_from(out)] -= sigma2
    return out


def default_max_iter(d):
    return int(50 * d * np.log(d + 1) + 2000)


def _fix_sign(v):
    i = int(np.argmax(np.abs(v)))
    return -v if v[i] < 0 else v


def _power(which, M, basis, v, tol, max_iter):
    """Power iteration with a two-vector Rayleigh-Ritz step, off ``basis``.

    Each step works in ``span{v, Mv}``, which contains the plain power
    iterate, so it never does worse than power iteration. For
    ``which="algebraic"`` the next ``v`` is the Ritz vector of ``M`` with the
    largest value. For ``"magnitude"`` it is the leading Ritz vector of
    ``M^2``; a pair ``+lambda, -lambda`` of nearly equal magnitude then forms
    one invariant subspace that the Ritz pairs of ``M`` split exactly.
    Convergence is judged on the best Ritz pair of ``M`` within the complement
    of ``basis``: ``|P (Mz - theta z)| <= tol * max(1, |theta|)``. Earlier
    vectors are only accurate to ``tol``, so the part of the residual inside
    their span is left to the final Rayleigh-Ritz step.
    """
    def project(u):
        if basis:
            q = np.asarray(basis).T
            u = u - q @ (q.T @ u)
            u = u - q @ (q.T @ u)
        return u

    v = project(v)
    nv = np.linalg.norm(v)
    if nv == 0.0:
        raise NonConvergenceError("start vector lies in the deflated subspace")
    v = v / nv
    lam, res, z = 0.0, np.inf, v
    for _ in range(max_iter):
        mv = M @ v
        lam = float(v @ mv)
        rv = project(mv - lam * v)
        res = float(np.linalg.norm(rv))
        if res <= tol * max(1.0, abs(lam)):
            return lam, v
        u = rv - v * (v @ rv)
        u = u / np.linalg.norm(u)
        mu = M @ u
        b = 0.5 * (float(u @ mv) + float(v @ mu))
        theta, Y = np.linalg.eigh(np.array([[lam, b], [b, float(u @ mu)]]))
        j = int(np.argmax(np.abs(theta))) if which == "magnitude" else 1
        y = Y[:, j]
        z = y[0] * v + y[1] * u
        rz = float(np.linalg.norm(project(y[0] * mv + y[1] * mu - theta[j] * z)))
        if rz <= tol * max(1.0, abs(theta[j])):
            z = project(z)
            return float(theta[j]), z / np.linalg.norm(z)
        if which == "magnitude":
            G = np.column_stack([project(mv), project(mu)])
            _, Y2 = np.linalg.eigh(G.T @ G)
            z = Y2[0, 1] * v + Y2[1, 1] * u
        w = project(z)
        v = w / np.linalg.norm(w)
    raise NonConvergenceError(
        f"power iteration stalled at residual {res:.3e} after {max_iter} iterations",
        best=(lam, _fix_sign(v), res),
    )


def top_eigs(M, r, tol=1e-8, max_iter=None, seed=0, which="magnitude"):
    """Leading ``r`` eigenpairs of a symmetric matrix.

    Parameters
    ----------
    M : array_like, shape (d, d)
        Symmetric matrix.
    r : int
        Number of eigenpairs, ``1 <= r <= d``.
    which : {"magnitude", "algebraic"}
        ``"magnitude"`` returns pairs by decreasing ``|lambda|``. ``"algebraic"``
        returns the largest signed eigenvalues first, which is what the
        covariance-like matrices of the clustering stages need.

    Returns
    -------
    eigenvalues : ndarray, shape (r,)
    eigenvectors : ndarray, shape (d, r)
        Orthonormal columns, each with its largest-magnitude entry positive.

    Raises
    ------
    NonConvergenceError
        If any pair misses the residual tolerance within ``max_iter`` steps.
    """
    M = np.asarray(M, dtype=float)
    d = M.shape[0]
    if M.shape != (d, d):
        raise ValueError("M must be square")
    if not 1 <= r <= d:
        raise ValueError(f"r must lie in [1, {d}], got {r}")
    if not np.allclose(M, M.T, rtol=1e-9, atol=1e-12 * max(1.0, np.abs(M).max())):
        raise ValueError("M must be symmetric")
    M = 0.5 * (M + M.T)
    if max_iter is None:
        max_iter = default_max_iter(d)

    if which not in ("magnitude", "algebraic"):
        raise ValueError(f"unknown ordering {which!r}")

    vals, vecs = [], []
    for i in range(r):
        v0 = stream(seed, "top_eigs", i).standard_normal(d)
        lam, v = _power(which, M, vecs, v0, tol, max_iter)
        vals.append(lam)
        vecs.append(v)
    # Rayleigh-Ritz on the found subspace removes the mixing between
    # vectors that deflation against inexact predecessors leaves behind
    V, _ = np.linalg.qr(np.array(vecs).T)
    H = V.T @ M @ V
    vals, Y = np.linalg.eigh(0.5 * (H + H.T))
    V = V @ Y
    key = -np.abs(vals) if which == "magnitude" else -vals
    order = np.argsort(key, kind="stable")
    vals, V = vals[order], V[:, order]
    V = np.column_stack([_fix_sign(V[:, j]) for j in range(r)])
    res = np.linalg.norm(M @ V - V * vals, axis=0)
    bad = np.flatnonzero(res > tol * np.maximum(1.0, np.abs(vals)))
    if len(bad):
        j = int(bad[0])
        raise NonConvergenceError(
            f"eigenpair {j} has residual {res[j]:.3e} after Rayleigh-Ritz", best=(float(vals[j]), V[:, j], float(res[j]))
        )
    return vals, V


def spectral_norm(M, tol=1e-8, max_iter=None, seed=0):
    """Largest ``|lambda|`` of symmetric ``M``, via the two algebraic extremes.

    The smaller extreme is skipped when ``||M||_F^2 - lambda_max^2 < lambda_max^2``:
    every other eigenvalue then has smaller magnitude. This avoids iterating
    on the flat noise end of covariance-like spectra.
    """
    M = np.asarray(M, dtype=float)
    if not np.any(M):
        return 0.0
    fro2 = float(np.sum(M * M))
    hi, _ = top_eigs(M, 1, tol, max_iter, seed, which="algebraic")
    h = float(hi[0])
    if h > 0 and fro2 - h * h < h * h:
        return h
    lo, _ = top_eigs(-M, 1, tol, max_iter, seed, which="algebraic")
    return float(max(abs(h), abs(lo[0])))
