import numpy as np
import pytest

from bmim.data import (DataError, Dataset, IndexSpec, quantile_score,
                       quantile_score_matrix, standardize, validate_index_spec)
from oracles import rank_quantile_scores


class TestStandardize:
    def test_hand_case(self):
        X = np.array([[1.0], [2.0], [3.0]])
        X_std, record = standardize(X)
        np.testing.assert_allclose(X_std[:, 0], [-1.0, 0.0, 1.0], atol=1e-15)
        assert record.mean[0] == 2.0
        assert record.sd[0] == 1.0

    def test_columns_hit_mean_zero_sd_one(self, rng):
        X = rng.normal(3.0, 2.5, size=(60, 5))
        X_std, _ = standardize(X)
        np.testing.assert_allclose(X_std.mean(axis=0), 0.0, atol=1e-12)
        np.testing.assert_allclose(X_std.std(axis=0, ddof=1), 1.0, atol=1e-12)

    def test_idempotent(self, rng):
        X = rng.normal(size=(30, 3))
        once, _ = standardize(X)
        twice, _ = standardize(once)
        np.testing.assert_allclose(twice, once, atol=1e-12)

    def test_constant_column_rejected(self):
        X = np.array([[5.0, 1.0], [5.0, 2.0], [5.0, 3.0]])
        with pytest.raises(DataError, match="constant column 0"):
            standardize(X)

    def test_round_trip(self, rng):
        X = rng.normal(-2.0, 4.0, size=(50, 4))
        X_std, record = standardize(X)
        np.testing.assert_allclose(record.invert(X_std), X, atol=1e-10)
        np.testing.assert_allclose(record.apply(X), X_std, atol=1e-12)


class TestQuantileScore:
    def test_four_points_four_groups(self):
        np.testing.assert_array_equal(quantile_score([10, 20, 30, 40], 4),
                                      [0, 1, 2, 3])

    def test_eight_points_four_groups(self):
        np.testing.assert_array_equal(quantile_score(np.arange(1.0, 9.0), 4),
                                      [0, 0, 1, 1, 2, 2, 3, 3])

    def test_constant_vector(self):
        np.testing.assert_array_equal(quantile_score(np.full(7, 3.3), 5),
                                      np.zeros(7, dtype=int))

    def test_rejects_small_q(self):
        with pytest.raises(DataError):
            quantile_score([1.0, 2.0], 1)

    def test_rejects_empty(self):
        with pytest.raises(DataError):
            quantile_score([], 4)

    def test_matches_rank_oracle(self, rng):
        for _ in range(50):
            n = int(rng.integers(3, 40))
            q = int(rng.integers(2, 9))
            x = np.round(rng.normal(size=n), 3)
            np.testing.assert_array_equal(quantile_score(x, q),
                                          rank_quantile_scores(x, q))

    def test_monotone_transform_invariance(self, rng):
        for transform in (lambda v: 2.0 * v + 1.0, np.exp, lambda v: v ** 3):
            for _ in range(20):
                x = np.round(rng.normal(size=25), 3)
                q = int(rng.integers(2, 7))
                np.testing.assert_array_equal(quantile_score(x, q),
                                              quantile_score(transform(x), q))

    def test_monotone_in_value(self, rng):
        x = rng.normal(size=30)
        s = quantile_score(x, 4)
        order = np.argsort(x)
        assert np.all(np.diff(s[order]) >= 0)

    def test_matrix_helper(self, rng):
        X = rng.normal(size=(20, 3))
        S = quantile_score_matrix(X, 4)
        for j in range(3):
            np.testing.assert_array_equal(S[:, j], quantile_score(X[:, j], 4))


class TestIndexSpecValidation:
    def test_grouping_8_2_8(self):
        spec = IndexSpec(groups=(tuple(range(8)), (8, 9), tuple(range(10, 18))))
        validate_index_spec(spec, 18)
        assert spec.sizes == (8, 2, 8)

    def test_overlap_rejected(self):
        spec = IndexSpec(groups=((0,), (0, 1)))
        with pytest.raises(DataError, match="column 0"):
            validate_index_spec(spec, 2)

    def test_gap_rejected(self):
        spec = IndexSpec(groups=((0,),))
        with pytest.raises(DataError, match="column 1"):
            validate_index_spec(spec, 2)

    def test_out_of_range_rejected(self):
        spec = IndexSpec(groups=((0, 5),))
        with pytest.raises(DataError, match="column 5"):
            validate_index_spec(spec, 2)

    def test_accepts_exactly_partitions(self, rng):
        for _ in range(30):
            p = int(rng.integers(2, 10))
            cols = rng.permutation(p)
            cuts = np.sort(rng.choice(np.arange(1, p), size=min(2, p - 1),
                                      replace=False)) if p > 1 else []
            groups = tuple(tuple(int(c) for c in part)
                           for part in np.split(cols, cuts) if len(part))
            validate_index_spec(IndexSpec(groups=groups), p)

    def test_from_string_one_based(self):
        spec = IndexSpec.from_string("1-8;9-10;11-18")
        assert spec.groups == (tuple(range(8)), (8, 9), tuple(range(10, 18)))

    def test_helpers(self):
        assert IndexSpec.single(3).groups == ((0, 1, 2),)
        assert IndexSpec.singletons(3).groups == ((0,), (1,), (2,))


class TestDataset:
    def test_missing_rejected(self):
        y = np.ones(5)
        X = np.ones((5, 2))
        X[2, 1] = np.nan
        with pytest.raises(DataError, match="x2"):
            Dataset.from_arrays(y, X)

    def test_labels_unique(self):
        with pytest.raises(DataError, match="unique"):
            Dataset.from_arrays(np.ones(5), np.ones((5, 2)) * [[1, 2]],
                                exposure_names=["a", "a"])

    def test_requires_intercept_first(self):
        with pytest.raises(DataError, match="intercept"):
            Dataset(y=np.ones(5), X=np.eye(5), Z=np.zeros((5, 1)),
                    exposure_names=[f"x{i}" for i in range(5)],
                    covariate_names=["z"])

    def test_needs_more_rows_than_covariates(self, rng):
        with pytest.raises(DataError, match="observations"):
            Dataset.from_arrays(np.ones(3), rng.normal(size=(3, 2)),
                                rng.normal(size=(3, 3)))

    def test_arrays_immutable(self, rng):
        data = Dataset.from_arrays(rng.normal(size=8), rng.normal(size=(8, 2)))
        with pytest.raises(ValueError):
            data.y[0] = 1.0
