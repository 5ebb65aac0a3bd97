import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from routedmlp.cluster import (
    KMeans,
    Standardizer,
    knee,
    select_k_elbow,
    silhouette,
    silhouette_curve,
    wcss_curve,
)
from routedmlp.rng import derive_rng


def brute_force_kmeans(X, k):
    """Optimal WCSS by enumerating all label assignments (tiny n only)."""
    n = len(X)
    best = np.inf
    for labels in itertools.product(range(k), repeat=n):
        labels = np.array(labels)
        if len(np.unique(labels)) < k:
            continue
        cost = 0.0
        for j in range(k):
            members = X[labels == j]
            cost += ((members - members.mean(axis=0)) ** 2).sum()
        best = min(best, cost)
    return best


def blobs(centers, per, spread, seed):
    rng = derive_rng(seed, "blobs")
    rows = [c + rng.normal(0.0, spread, (per, len(c))) for c in np.atleast_2d(centers)]
    return np.vstack(rows)


class TestStandardizer:
    def test_known_values(self):
        s = Standardizer().fit(np.array([[1.0], [2.0], [3.0]]))
        assert s.mean_[0] == pytest.approx(2.0)
        assert s.std_[0] == pytest.approx(np.sqrt(2.0 / 3.0))  # population std
        out = s.transform(np.array([[3.0]]))
        assert out[0, 0] == pytest.approx(1.0 / np.sqrt(2.0 / 3.0))

    def test_degenerate_column(self):
        s = Standardizer().fit(np.array([[5.0, 1.0], [5.0, 3.0]]))
        assert s.degenerate_.tolist() == [True, False]
        out = s.transform(np.array([[5.0, 2.0], [5.0, 4.0]]))
        np.testing.assert_array_equal(out[:, 0], 0.0)

    def test_transformed_train_stats(self, rng):
        X = rng.normal(3.0, 2.5, (40, 6))
        Z = Standardizer().fit(X).transform(X)
        np.testing.assert_allclose(Z.mean(axis=0), 0.0, atol=1e-12)
        np.testing.assert_allclose(Z.std(axis=0), 1.0, atol=1e-12)

    def test_feature_count_checked(self):
        s = Standardizer().fit(np.ones((3, 2)) * [[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]])
        with pytest.raises(ValueError, match="expected 2"):
            s.transform(np.ones((1, 3)))

    def test_round_trip(self, rng):
        X = rng.normal(size=(10, 4))
        s = Standardizer().fit(X)
        s2 = Standardizer.from_jsonable(s.to_jsonable())
        np.testing.assert_array_equal(s.transform(X), s2.transform(X))


class TestKMeans:
    def test_one_dimensional_example(self):
        X = np.array([0.1, 0.2, 0.9, 1.0])
        model = KMeans(2, n_restarts=10, seed=0).fit(X)
        centers = sorted(model.cluster_centers_[:, 0])
        assert centers[0] == pytest.approx(0.15)
        assert centers[1] == pytest.approx(0.95)
        assert model.inertia_ == pytest.approx(0.01)

    def test_matches_brute_force(self):
        for trial in range(20):
            rng = derive_rng(trial, "bf")
            n = int(rng.integers(4, 9))
            X = rng.normal(size=(n, 2))
            model = KMeans(2, n_restarts=50, seed=trial).fit(X)
            assert model.inertia_ == pytest.approx(brute_force_kmeans(X, 2), abs=1e-9)

    def test_deterministic(self, rng):
        X = rng.normal(size=(30, 3))
        a = KMeans(3, n_restarts=5, seed=7).fit(X)
        b = KMeans(3, n_restarts=5, seed=7).fit(X)
        np.testing.assert_array_equal(a.cluster_centers_, b.cluster_centers_)
        np.testing.assert_array_equal(a.labels_, b.labels_)

    def test_k_exceeding_distinct_points(self):
        X = np.array([[1.0], [1.0], [2.0]])
        with pytest.raises(ValueError, match="distinct"):
            KMeans(3).fit(X)

    def test_duplicate_points_ok_when_k_fits(self):
        X = np.array([[0.0], [0.0], [0.0], [9.0]])
        model = KMeans(2, seed=1).fit(X)
        assert model.inertia_ == pytest.approx(0.0)

    def test_predict_nearest_centroid(self):
        model = KMeans(2, seed=0).fit(np.array([0.0, 0.1, 10.0, 10.1]))
        pred = model.predict(np.array([0.3, 9.0]))
        assert pred[0] != pred[1]
        with pytest.raises(ValueError, match="dimensional"):
            model.predict(np.ones((1, 2)))

    def test_round_trip(self, rng):
        X = rng.normal(size=(15, 2))
        model = KMeans(3, seed=4).fit(X)
        again = KMeans.from_jsonable(model.to_jsonable())
        np.testing.assert_array_equal(model.predict(X), again.predict(X))


class TestSilhouette:
    def test_perfectly_separated(self):
        X = np.array([[0.0], [0.1], [10.0], [10.1]])
        score = silhouette(X, [0, 0, 1, 1])
        assert score > 0.95

    def test_worst_case_assignment(self):
        X = np.array([[0.0], [0.1], [10.0], [10.1]])
        good = silhouette(X, [0, 0, 1, 1])
        bad = silhouette(X, [0, 1, 0, 1])
        assert bad < 0 < good

    def test_singleton_scores_zero(self):
        X = np.array([[0.0], [5.0], [5.1]])
        score = silhouette(X, [0, 1, 1])
        # hand computation: singleton scores 0, the pair scores
        # (5 - 0.1)/5 and (5.1 - 0.1)/5.1
        expected = (0.0 + 4.9 / 5.0 + 5.0 / 5.1) / 3.0
        assert score == pytest.approx(expected, abs=1e-12)

    def test_needs_two_clusters(self):
        with pytest.raises(ValueError, match="2 clusters"):
            silhouette(np.array([[0.0], [1.0]]), [0, 0])

    @given(st.integers(0, 10_000))
    @settings(max_examples=20, deadline=None)
    def test_label_permutation_invariance(self, seed):
        rng = derive_rng(seed, "silh")
        X = rng.normal(size=(12, 2))
        labels = rng.integers(0, 3, 12)
        if len(np.unique(labels)) < 2:
            labels[0], labels[1] = 0, 1
        remap = {0: 2, 1: 0, 2: 1}
        permuted = np.array([remap[c] for c in labels])
        assert silhouette(X, labels) == pytest.approx(silhouette(X, permuted), abs=1e-12)


class TestKneeAndSelection:
    def test_spec_example(self):
        assert knee([100.0, 30.0, 25.0, 24.0, 23.0]).index == 1

    def test_linear_curve_not_found(self):
        result = knee([10.0, 8.0, 6.0, 4.0])
        assert not result.found

    def test_affine_invariance(self):
        base = [50.0, 20.0, 12.0, 10.0, 9.5]
        scaled = [3.0 * v + 7.0 for v in base]
        assert knee(base).index == knee(scaled).index

    def test_too_short(self):
        with pytest.raises(ValueError, match="3 values"):
            knee([1.0, 0.0])

    def test_silhouette_selector_two_blobs(self):
        X = blobs([[0.0, 0.0], [8.0, 8.0]], per=12, spread=0.5, seed=1)
        sel = silhouette_curve(X, 2, 5, seed=1)
        assert sel.chosen_k == 2
        assert sel.chosen_by == "silhouette"

    def test_elbow_selector_three_blobs(self):
        X = blobs([[0.0, 0.0], [8.0, 0.0], [4.0, 7.0]], per=12, spread=0.5, seed=2)
        sel = select_k_elbow(X, 1, 6, seed=2)
        assert sel.chosen_k == 3
        assert sel.chosen_by == "elbow"

    def test_wcss_monotone_nonincreasing(self, rng):
        X = rng.normal(size=(25, 2))
        sel = wcss_curve(X, 1, 5, n_restarts=20, seed=3)
        assert all(a >= b - 1e-9 for a, b in zip(sel.wcss, sel.wcss[1:]))

    def test_invalid_range(self):
        with pytest.raises(ValueError, match="invalid k range"):
            wcss_curve(np.ones((4, 1)) * [[1], [2], [3], [4]], 3, 2)
