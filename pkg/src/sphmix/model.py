"""Spherical Gaussian mixtures: representation, log-density and sampling.

A :class:`Mixture` holds ``k`` isotropic components ``N(mean_i, variance_i * I_d)``.
The d-dimensional estimator emits a shared variance, the one-dimensional
estimator one variance per component; the same type covers both.
"""

import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Optional

import numpy as np

from ._rng import GENERATOR_VERSION, stream

LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class Component:
    """One isotropic Gaussian ``N(mean, variance * I)``."""

    mean: np.ndarray
    variance: float

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        if mean.ndim != 1 or not np.all(np.isfinite(mean)):
            raise ValueError("component mean must be a finite vector")
        if not (np.isfinite(self.variance) and self.variance > 0):
            raise ValueError(f"component variance must be positive, got {self.variance}")
        mean.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "variance", float(self.variance))

    @property
    def dim(self):
        return self.mean.shape[0]


@dataclass(frozen=True, eq=False)
class Mixture:
    """Weighted mixture of isotropic Gaussians.

    Parameters
    ----------
    weights : array_like, shape (k,)
        Nonnegative mixing weights summing to one (within 1e-12).
    means : array_like, shape (k, d)
        Component means. A 1-D array is read as ``k`` scalar means (d = 1).
    variances : array_like, shape (k,)
        Positive per-component variances.
    """

    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        w = np.atleast_1d(np.asarray(self.weights, dtype=float))
        mu = np.asarray(self.means, dtype=float)
        if mu.ndim == 1:
            mu = mu[:, None]
        v = np.atleast_1d(np.asarray(self.variances, dtype=float))
        k = w.shape[0]
        if k < 1 or w.ndim != 1:
            raise ValueError("a mixture needs at least one component")
        if mu.ndim != 2 or mu.shape[0] != k or v.shape != (k,):
            raise ValueError(
                f"shape mismatch: weights {w.shape}, means {mu.shape}, variances {v.shape}"
            )
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights must be nonnegative and sum to 1, got {w}")
        if not np.all(np.isfinite(mu)):
            raise ValueError("means must be finite")
        if not np.all(np.isfinite(v)) or np.any(v <= 0):
            raise ValueError("variances must be positive")
        for a in (w, mu, v):
            a.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", mu)
        object.__setattr__(self, "variances", v)

    @classmethod
    def from_components(cls, weights, components):
        comps = list(components)
        return cls(
            weights,
            np.stack([c.mean for c in comps]),
            [c.variance for c in comps],
        )

    @classmethod
    def single(cls, mean, variance):
        return cls([1.0], np.atleast_1d(np.asarray(mean, dtype=float))[None, :], [variance])

    @property
    def k(self):
        return self.weights.shape[0]

    @property
    def dim(self):
        return self.means.shape[1]

    @property
    def components(self):
        return [Component(m, v) for m, v in zip(self.means, self.variances)]

    @cached_property
    def _order(self):
        # lexicographic on means, then variance, then weight
        keys = [self.weights, self.variances] + [self.means[:, j] for j in range(self.dim - 1, -1, -1)]
        return np.lexsort(keys)

    def to_dict(self):
        return {
            "weights": self.weights.tolist(),
            "means": self.means.tolist(),
            "variances": self.variances.tolist(),
        }

    @classmethod
    def from_dict(cls, obj):
        return cls(obj["weights"], obj["means"], obj["variances"])

    def __eq__(self, other):
        if not isinstance(other, Mixture):
            return NotImplemented
        return (
            self.weights.shape == other.weights.shape
            and self.means.shape == other.means.shape
            and np.array_equal(self.weights, other.weights)
            and np.array_equal(self.means, other.means)
            and np.array_equal(self.variances, other.variances)
        )

    def __hash__(self):
        return hash((self.weights.tobytes(), self.means.tobytes(), self.variances.tobytes()))

    def __repr__(self):
        return f"Mixture(k={self.k}, dim={self.dim}, weights={np.round(self.weights, 4).tolist()})"


def log_pdf(m: Mixture, x) -> np.ndarray:
    """Log-density of ``m`` at ``x``.

    ``x`` may be a single point of length ``m.dim`` (a scalar is accepted when
    ``m.dim == 1``) or an ``(n, m.dim)`` array; the result is a float or an
    ``(n,)`` array accordingly. Terms are combined by max-shifted log-sum-exp
    in a canonical component order, so permuting components does not change
    a single bit of the output.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim <= 1
    if x.ndim == 0:
        x = x.reshape(1, 1)
    elif x.ndim == 1:
        if m.dim == 1 and x.shape[0] != 1:
            x = x[:, None]
            single = False
        else:
            x = x[None, :]
    if x.ndim != 2 or x.shape[1] != m.dim:
        raise ValueError(f"point dimension {x.shape[-1]} does not match mixture dim {m.dim}")
    order = m._order
    means = m.means[order]
    var = m.variances[order]
    with np.errstate(divide="ignore"):
        logw = np.log(m.weights[order])
    diff = x[:, None, :] - means[None, :, :]
    sq = np.einsum("nkd,nkd->nk", diff, diff)
    terms = logw[None, :] - 0.5 * sq / var[None, :] - 0.5 * m.dim * (LOG_2PI + np.log(var))[None, :]
    top = terms.max(axis=1)
    out = top + np.log(np.exp(terms - top[:, None]).sum(axis=1))
    return float(out[0]) if single else out


def pdf(m: Mixture, x):
    return np.exp(log_pdf(m, x))


@dataclass(frozen=True, eq=False)
class Dataset:
    """Samples ``(n, d)`` with their generating seed and optional true labels."""

    samples: np.ndarray
    seed: int = 0
    labels: Optional[np.ndarray] = None
    mixture: Optional[Mixture] = field(default=None, repr=False)

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] < 1:
            raise ValueError(f"samples must be a nonempty (n, d) array, got shape {x.shape}")
        x.setflags(write=False)
        object.__setattr__(self, "samples", x)
        if self.labels is not None:
            lab = np.asarray(self.labels, dtype=np.int64)
            if lab.shape != (x.shape[0],) or np.any(lab < 0):
                raise ValueError("labels must be a nonnegative n-vector")
            if self.mixture is not None and np.any(lab >= self.mixture.k):
                raise ValueError("labels out of range for the mixture")
            lab.setflags(write=False)
            object.__setattr__(self, "labels", lab)

    @property
    def n(self):
        return self.samples.shape[0]

    @property
    def dim(self):
        return self.samples.shape[1]

    def subset(self, idx):
        idx = np.asarray(idx)
        labels = None if self.labels is None else self.labels[idx]
        return Dataset(self.samples[idx], self.seed, labels, self.mixture)

    def __len__(self):
        return self.n


def sample(m: Mixture, n: int, seed: int) -> Dataset:
    """Draw ``n`` i.i.d. samples from ``m``; bit-identical for equal ``(m, n, seed)``."""
    if n < 1:
        raise ValueError("n must be at least 1")
    rng = stream(seed, "sample")
    u = rng.random(n)
    cdf = np.cumsum(m.weights)
    labels = np.minimum(np.searchsorted(cdf, u * cdf[-1], side="right"), m.k - 1)
    z = rng.standard_normal((n, m.dim))
    x = m.means[labels] + np.sqrt(m.variances[labels])[:, None] * z
    return Dataset(x, seed=int(seed), labels=labels, mixture=m)


# -- files -----------------------------------------------------------------


def save_mixture(m: Mixture, path):
    Path(path).write_text(json.dumps(m.to_dict()) + "\n")


def load_mixture(path) -> Mixture:
    return Mixture.from_dict(json.loads(Path(path).read_text()))


def sidecar_path(csv_path):
    p = Path(csv_path)
    return p.with_name(p.name + ".json")


def save_dataset(ds: Dataset, path):
    """Write samples as headerless CSV plus a ``<path>.json`` sidecar."""
    path = Path(path)
    np.savetxt(path, ds.samples, delimiter=",", fmt="%.17g")
    meta = {
        "n": ds.n,
        "d": ds.dim,
        "seed": int(ds.seed),
        "generator_version": GENERATOR_VERSION,
    }
    if ds.mixture is not None:
        meta["mixture"] = ds.mixture.to_dict()
    if ds.labels is not None:
        meta["labels"] = ds.labels.tolist()
    sidecar_path(path).write_text(json.dumps(meta) + "\n")


def load_dataset(path) -> Dataset:
    path = Path(path)
    x = np.loadtxt(path, delimiter=",", ndmin=2)
    meta = {}
    side = sidecar_path(path)
    if side.exists():
        meta = json.loads(side.read_text())
        if meta.get("n", x.shape[0]) != x.shape[0] or meta.get("d", x.shape[1]) != x.shape[1]:
            raise ValueError(f"{side}: shape {meta.get('n')}x{meta.get('d')} disagrees with CSV {x.shape}")
    mix = Mixture.from_dict(meta["mixture"]) if "mixture" in meta else None
    return Dataset(x, seed=int(meta.get("seed", 0)), labels=meta.get("labels"), mixture=mix)
