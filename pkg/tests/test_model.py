import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate
from scipy.stats import binom

from oracles import log_pdf_mp
from sphmix.model import (
    Component,
    Dataset,
    Mixture,
    load_dataset,
    load_mixture,
    log_pdf,
    pdf,
    sample,
    save_dataset,
    save_mixture,
    sidecar_path,
)


def test_component_invariants():
    Component(np.zeros(2), 1.0)
    with pytest.raises(ValueError):
        Component(np.zeros(2), 0.0)
    with pytest.raises(ValueError):
        Component(np.array([np.nan]), 1.0)


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(weights=[0.5, 0.6], means=[[0.0], [1.0]], variances=[1, 1]),
        dict(weights=[-0.1, 1.1], means=[[0.0], [1.0]], variances=[1, 1]),
        dict(weights=[1.0], means=[[0.0]], variances=[-1.0]),
        dict(weights=[], means=np.zeros((0, 1)), variances=[]),
        dict(weights=[0.5, 0.5], means=[[0.0], [1.0]], variances=[1.0]),
    ],
)
def test_mixture_rejects_invalid(kwargs):
    with pytest.raises(ValueError):
        Mixture(**kwargs)


def test_log_pdf_standard_normal_mode():
    m = Mixture.single([0.0], 1.0)
    assert log_pdf(m, 0.0) == pytest.approx(-0.5 * math.log(2 * math.pi), abs=1e-15)


def test_duplicate_components_collapse():
    one = Mixture.single([0.0], 1.0)
    two = Mixture([0.5, 0.5], [[0.0], [0.0]], [1.0, 1.0])
    x = np.linspace(-5, 5, 41)
    np.testing.assert_allclose(log_pdf(two, x), log_pdf(one, x), rtol=0, atol=1e-14)


def test_log_pdf_matches_high_precision_sum():
    m = Mixture([0.3, 0.7], [[-2.0], [1.0]], [1.0, 4.0])
    assert log_pdf(m, 0.0) == pytest.approx(log_pdf_mp([0.3, 0.7], [[-2.0], [1.0]], [1.0, 4.0], [0.0]), abs=1e-14)


def test_log_pdf_far_tail_is_finite():
    # raw densities underflow here; the log stays finite and accurate
    m = Mixture([0.5, 0.5], np.zeros((2, 200)) + [[0.0], [3.0]], [1.0, 2.0])
    x = np.full(200, 40.0)
    v = log_pdf(m, x)
    assert np.isfinite(v)
    assert v == pytest.approx(log_pdf_mp(m.weights, m.means, m.variances, x), rel=1e-12)


def test_log_pdf_dimension_mismatch():
    m = Mixture.single([0.0, 0.0], 1.0)
    with pytest.raises(ValueError):
        log_pdf(m, np.zeros(3))


@given(
    k=st.integers(1, 5),
    d=st.integers(1, 4),
    seed=st.integers(0, 2**32 - 1),
)
def test_log_pdf_property_against_oracle(k, d, seed):
    rng = np.random.default_rng(seed)
    w = rng.dirichlet(np.ones(k))
    mu = rng.normal(0, 3, (k, d))
    var = rng.uniform(0.2, 3.0, k)
    m = Mixture(w, mu, var)
    x = rng.normal(0, 4, d)
    assert log_pdf(m, x) == pytest.approx(log_pdf_mp(w, mu, var, x), rel=1e-12, abs=1e-12)


@given(k=st.integers(2, 6), seed=st.integers(0, 2**32 - 1))
def test_log_pdf_permutation_invariant_to_the_bit(k, seed):
    rng = np.random.default_rng(seed)
    w = rng.dirichlet(np.ones(k))
    mu = rng.normal(0, 3, (k, 3))
    var = rng.uniform(0.2, 3.0, k)
    perm = rng.permutation(k)
    a = Mixture(w, mu, var)
    b = Mixture(w[perm], mu[perm], var[perm])
    x = rng.normal(0, 4, (50, 3))
    assert np.array_equal(log_pdf(a, x), log_pdf(b, x))


@pytest.mark.parametrize(
    "w,mu,var",
    [([1.0], [0.0], [1.0]), ([0.3, 0.7], [-2.0, 1.0], [1.0, 4.0]), ([0.2, 0.5, 0.3], [-6.0, 0.0, 9.0], [0.1, 2.0, 0.5])],
)
def test_density_integrates_to_one(w, mu, var):
    m = Mixture(w, np.array(mu)[:, None], var)
    sd = np.sqrt(var)
    lo = min(np.array(mu) - 12 * sd)
    hi = max(np.array(mu) + 12 * sd)
    pts = sorted(set(mu))
    total, _ = integrate.quad(lambda t: float(pdf(m, t)), lo, hi, points=pts, epsabs=1e-12, epsrel=1e-12, limit=500)
    assert abs(total - 1.0) <= 1e-6


def test_sample_vanishing_variance():
    mu = np.array([1.0, -2.0, 3.5])
    ds = sample(Mixture.single(mu, 1e-30), 3, seed=5)
    assert np.all(np.abs(ds.samples - mu) <= 1e-10)


def test_sample_label_histogram_binomial():
    m = Mixture([0.3, 0.7], [[0.0], [5.0]], [1.0, 1.0])
    ds = sample(m, 1000, seed=11)
    c0 = int(np.sum(ds.labels == 0))
    sd = math.sqrt(1000 * 0.3 * 0.7)
    assert abs(c0 - 300) <= 4 * sd
    # the same 4-sigma band expressed as exact binomial quantiles
    lo, hi = binom.interval(1 - 2 * 3.17e-5, 1000, 0.3)
    assert lo <= c0 <= hi


def test_sample_is_deterministic():
    m = Mixture([0.4, 0.6], [[0.0, 0.0], [3.0, 1.0]], [1.0, 2.0])
    a, b = sample(m, 500, 3), sample(m, 500, 3)
    assert a.samples.tobytes() == b.samples.tobytes()
    assert np.array_equal(a.labels, b.labels)
    assert sample(m, 500, 4).samples.tobytes() != a.samples.tobytes()


@pytest.mark.parametrize("d", [1, 4, 8])
def test_sample_mean_consistency(d):
    mu = np.arange(d, dtype=float) - 2.0
    var = 2.5
    n = 100_000
    ds = sample(Mixture.single(mu, var), n, seed=d)
    assert np.all(np.abs(ds.samples.mean(axis=0) - mu) <= 5 * math.sqrt(var) / math.sqrt(n))


def test_sample_rejects_nonpositive_n():
    with pytest.raises(ValueError):
        sample(Mixture.single([0.0], 1.0), 0, 0)


def test_dataset_validation():
    with pytest.raises(ValueError):
        Dataset(np.zeros((0, 2)))
    with pytest.raises(ValueError):
        Dataset(np.zeros((3, 2)), labels=[0, 1])
    m = Mixture.single([0.0], 1.0)
    with pytest.raises(ValueError):
        Dataset(np.zeros((2, 1)), labels=[0, 1], mixture=m)


def test_dataset_is_read_only():
    ds = sample(Mixture.single([0.0], 1.0), 4, 0)
    with pytest.raises(ValueError):
        ds.samples[0, 0] = 1.0


def test_mixture_json_roundtrip(tmp_path):
    m = Mixture([0.25, 0.75], [[0.1, -3.0], [1e-17, 2.0 / 3.0]], [0.3, 1.7])
    p = tmp_path / "m.json"
    save_mixture(m, p)
    assert set(json.loads(p.read_text())) == {"weights", "means", "variances"}
    assert load_mixture(p) == m


def test_dataset_roundtrip_is_exact(tmp_path):
    m = Mixture([0.5, 0.5], [[0.0, 0.0], [2.0, 1.0]], [1.0, 0.5])
    ds = sample(m, 64, 9)
    p = tmp_path / "d.csv"
    save_dataset(ds, p)
    meta = json.loads(sidecar_path(p).read_text())
    assert meta["n"] == 64 and meta["d"] == 2 and meta["seed"] == 9
    assert "generator_version" in meta
    back = load_dataset(p)
    assert back.samples.tobytes() == ds.samples.tobytes()
    assert back.mixture == m
    assert np.array_equal(back.labels, ds.labels)


def test_dataset_without_sidecar(tmp_path):
    p = tmp_path / "x.csv"
    np.savetxt(p, np.arange(6.0).reshape(3, 2), delimiter=",")
    ds = load_dataset(p)
    assert ds.seed == 0 and ds.labels is None and ds.samples.shape == (3, 2)


def test_dataset_sidecar_shape_mismatch(tmp_path):
    ds = sample(Mixture.single([0.0], 1.0), 5, 0)
    p = tmp_path / "d.csv"
    save_dataset(ds, p)
    meta = json.loads(sidecar_path(p).read_text())
    meta["n"] = 6
    sidecar_path(p).write_text(json.dumps(meta))
    with pytest.raises(ValueError):
        load_dataset(p)
