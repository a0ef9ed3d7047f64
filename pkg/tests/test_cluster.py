import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import naive_components, naive_single_linkage_1d
from sphmix.cluster import (
    Clustering,
    Thresholds,
    coarse_single_linkage,
    estimate_variance,
    linkage_components,
    make_thresholds,
    recursive_spectral_cluster,
    single_linkage_1d,
)
from sphmix.model import Mixture, sample


def as_groups(labels):
    labels = np.asarray(labels)
    return sorted(sorted(np.flatnonzero(labels == v).tolist()) for v in np.unique(labels))


def test_estimate_variance_hand_example():
    x = np.array([[0.0, 0.0], [2.0, 0.0], [10.0, 10.0], [0.0, 0.1]])
    # only the first k + 1 = 3 rows count; closest pair has squared distance 4
    assert estimate_variance(x, 2) == pytest.approx(4.0 / 4.0)


def test_estimate_variance_needs_k_plus_one():
    with pytest.raises(ValueError):
        estimate_variance(np.zeros((2, 3)), 2)


def test_estimate_variance_concentrates_in_high_dimension():
    d = 400
    x = sample(Mixture.single(np.zeros(d), 2.0), 4, 0).samples
    assert estimate_variance(x, 3) == pytest.approx(2.0, rel=0.25)


def test_make_thresholds_formulas():
    t = make_thresholds(1.5, n=1000, d=20, k=3, eps=0.2, delta=0.05)
    assert t.coarse_merge_threshold == pytest.approx(2 * 20 * 1.5 + 23 * 1.5 * math.sqrt(20 * math.log(1000**2 / 0.05)))
    assert t.spectral_norm_gate == pytest.approx(12 * 9 * 1.5 * math.log(1000**3 / 0.05))
    assert t.projected_link_threshold == pytest.approx(3 * math.sqrt(1.5) * math.sqrt(math.log(1000**2 * 3 / 0.05)))
    assert t.min_cluster_fraction == pytest.approx(0.2 / 15)
    assert t.reserve_size == math.ceil(1000 * 0.2 / 72)
    assert set(t.to_dict()) == {"sigma2_hat", "coarse_merge_threshold", "spectral_norm_gate",
                                "projected_link_threshold", "min_cluster_fraction", "reserve_size"}


def test_thresholds_reject_nonpositive():
    with pytest.raises(ValueError):
        Thresholds(0.0, 1.0, 1.0, 1.0, 0.1, 3)


@settings(max_examples=40)
@given(n=st.integers(1, 40), d=st.integers(1, 3), seed=st.integers(0, 2**32 - 1), block=st.integers(1, 9))
def test_linkage_components_match_naive(n, d, seed, block):
    rng = np.random.default_rng(seed)
    x = rng.normal(0, 3, (n, d))
    sq = ((x[:, None] - x[None]) ** 2).sum(-1)
    # put the cut away from any pair distance so rounding cannot matter
    vals = np.unique(sq[np.triu_indices(n, 1)]) if n > 1 else np.array([1.0])
    thr = float(vals[len(vals) // 2]) * (1 + 1e-6) if n > 1 else 1.0
    gaps = np.abs(vals - thr) / max(thr, 1e-12)
    if n > 1 and gaps.min() < 1e-9:
        thr *= 1.001
    got = linkage_components(x, thr, block=block)
    assert as_groups(got) == naive_components(x, thr)
    # labels are numbered by smallest member
    firsts = [int(np.flatnonzero(got == v)[0]) for v in range(got.max() + 1)]
    assert firsts == sorted(firsts)


def test_linkage_labels_independent_of_block():
    x = np.random.default_rng(1).normal(size=(300, 4))
    a = linkage_components(x, 2.0, block=7)
    b = linkage_components(x, 2.0, block=128)
    assert np.array_equal(a, b)


def test_coarse_linkage_separates_far_components():
    d = 30
    means = np.zeros((3, d))
    means[1, 0] = 60.0
    means[2, 1] = 60.0
    ds = sample(Mixture(np.ones(3) / 3, means, np.ones(3)), 300, 4)
    th = make_thresholds(estimate_variance(ds, 3), 300, d, 3, 0.3, 0.1)
    cl = coarse_single_linkage(ds, th)
    assert len(cl) == 3
    for c in cl.clusters:
        assert len(np.unique(ds.labels[c.members])) == 1


@given(vals=st.lists(st.floats(-100, 100, allow_nan=False), min_size=1, max_size=60), link=st.floats(0.01, 20))
def test_single_linkage_1d_matches_naive(vals, link):
    got = single_linkage_1d(vals, link)
    assert sorted(p.tolist() for p in got) == naive_single_linkage_1d(vals, link)
    assert sum(len(p) for p in got) == len(vals)


def test_single_linkage_1d_examples():
    parts = single_linkage_1d([0.0, 10.0, 0.5, 10.2, 30.0], 1.0)
    assert [p.tolist() for p in parts] == [[0, 2], [1, 3], [4]]
    with pytest.raises(ValueError):
        single_linkage_1d([], 1.0)


def test_clustering_assignments_and_json():
    x = np.arange(12.0).reshape(6, 2)
    cl = Clustering.from_labels(x, [1, 1, -1, 0, 0, 1])
    assert cl.assignments.tolist() == [0, 0, -1, 1, 1, 0]
    assert cl.sizes == [3, 2]
    assert cl.discarded.tolist() == [2]
    obj = json.loads(cl.to_json())
    assert obj == {"assignments": [0, 0, -1, 1, 1, 0], "discarded": [2]}
    np.testing.assert_allclose(cl.clusters[1].stats.mean, x[[3, 4]].mean(0))


def planted(n, d, gap, seed):
    mu = np.zeros((2, d))
    mu[1, 0] = gap
    return sample(Mixture([0.5, 0.5], mu, np.ones(2)), n, seed)


def spectral_thresholds(n, d, k=2, eps=0.3, delta=0.1):
    # gate and link use the true variance so the test isolates the split logic
    return make_thresholds(1.0, n, d, k, eps, delta)


def test_recursive_split_is_pure_and_partitions():
    n, d = 4000, 50
    ds = planted(n, d, 80.0, 0)
    th = spectral_thresholds(n, d)
    start = Clustering.from_labels(ds.samples, np.zeros(n, dtype=int))
    cl = recursive_spectral_cluster(ds, start, th, seed=3)
    assert len(cl) == 2
    for c in cl.clusters:
        assert len(np.unique(ds.labels[c.members])) == 1
    seen = np.concatenate([c.members for c in cl.clusters] + [cl.discarded])
    assert np.array_equal(np.sort(seen), np.arange(n))
    assert len(cl.discarded) == th.reserve_size
    assert cl.events[0]["event"] == "split"


def test_recursive_leaves_single_component_alone():
    n, d = 2000, 20
    ds = sample(Mixture.single(np.zeros(d), 1.0), n, 1)
    th = spectral_thresholds(n, d)
    start = Clustering.from_labels(ds.samples, np.zeros(n, dtype=int))
    cl = recursive_spectral_cluster(ds, start, th)
    assert len(cl) == 1 and len(cl.discarded) == 0 and cl.events == []


def test_recursive_is_deterministic():
    ds = planted(1500, 10, 60.0, 5)
    th = spectral_thresholds(1500, 10)
    start = Clustering.from_labels(ds.samples, np.zeros(1500, dtype=int))
    a = recursive_spectral_cluster(ds, start, th, seed=9)
    b = recursive_spectral_cluster(ds, start, th, seed=9)
    assert np.array_equal(a.assignments, b.assignments)
    assert np.array_equal(a.discarded, b.discarded)


def test_recursive_reports_unsplittable():
    ds = planted(400, 5, 100.0, 2)
    base = spectral_thresholds(400, 5)
    th = Thresholds(base.sigma2_hat, base.coarse_merge_threshold, base.spectral_norm_gate,
                    base.projected_link_threshold, base.min_cluster_fraction, 400)
    start = Clustering.from_labels(ds.samples, np.zeros(400, dtype=int))
    cl = recursive_spectral_cluster(ds, start, th)
    assert len(cl) == 1
    assert cl.events[-1]["event"] == "unsplittable"
