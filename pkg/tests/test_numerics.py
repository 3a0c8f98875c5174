import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from dynamask.datagen import HMM_COVS
from dynamask.numerics import (
    argsort_ascending,
    as_time_matrix,
    logistic,
    make_rng,
    matrix_from_csv,
    matrix_to_csv,
    read_matrix_csv,
    sample_multivariate_normal,
    sample_multivariate_normal_many,
    sample_standard_normal,
    split_rng,
    write_matrix_csv,
)


def test_same_seed_same_stream():
    a = sample_standard_normal(make_rng(7), 3)
    b = sample_standard_normal(make_rng(7), 3)
    assert np.array_equal(a, b)


def test_different_seeds_differ():
    assert not np.array_equal(sample_standard_normal(make_rng(7), 5), sample_standard_normal(make_rng(8), 5))


def test_substreams_independent_of_consumption_order():
    first = sample_standard_normal(make_rng(3, 1), 4)
    sample_standard_normal(make_rng(3, 0), 1000)
    assert np.array_equal(first, sample_standard_normal(make_rng(3, 1), 4))
    assert not np.array_equal(first, sample_standard_normal(make_rng(3, 2), 4))


def test_split_rng_children_are_distinct():
    kids = split_rng(make_rng(1), 3)
    draws = [k.standard_normal(4) for k in kids]
    assert not np.array_equal(draws[0], draws[1])


def test_standard_normal_moments():
    x = sample_standard_normal(make_rng(7), 10 ** 5)
    assert abs(x.mean()) < 0.02
    assert abs(x.var() - 1.0) < 0.05


def test_empty_request_rejected():
    with pytest.raises(ValueError, match="empty request"):
        sample_standard_normal(make_rng(7), 0)


def test_negative_seed_rejected():
    with pytest.raises(ValueError):
        make_rng(-1)


def test_mvn_identity_is_standard():
    x = sample_multivariate_normal_many(make_rng(2), [0.0, 0.0], np.eye(2), 10 ** 5)
    assert np.allclose(x.mean(0), 0.0, atol=0.02)
    assert np.allclose(np.cov(x.T), np.eye(2), atol=0.02)


def test_mvn_single_draw_uses_cholesky():
    cov = np.array([[2.0, 0.3], [0.3, 1.0]])
    chol = np.linalg.cholesky(cov)
    z = make_rng(4).standard_normal(2)
    assert np.allclose(sample_multivariate_normal(make_rng(4), [1.0, -1.0], cov), [1.0, -1.0] + chol @ z)


def test_mvn_sample_covariance_matches_hmm_cov():
    rng = make_rng(11)
    draws = np.array([sample_multivariate_normal(rng, np.zeros(3), HMM_COVS[0]) for _ in range(10 ** 5)])
    assert np.max(np.abs(np.cov(draws.T) - HMM_COVS[0])) < 0.02


def test_mvn_degenerate_cov_rejected():
    with pytest.raises(np.linalg.LinAlgError):
        sample_multivariate_normal(make_rng(0), [5.0], [[0.0]])


def test_mvn_shape_and_symmetry_checked():
    with pytest.raises(ValueError):
        sample_multivariate_normal(make_rng(0), [0.0, 0.0], np.eye(3))
    with pytest.raises(ValueError):
        sample_multivariate_normal(make_rng(0), [0.0, 0.0], [[1.0, 0.5], [0.0, 1.0]])


def test_diagonal_mvn_matches_scaled_normals():
    var = np.array([0.5, 2.0, 3.0])
    mean = np.array([1.0, -2.0, 0.5])
    x = sample_multivariate_normal_many(make_rng(5), mean, np.diag(var), 10 ** 5)
    z = mean + np.sqrt(var) * sample_standard_normal(make_rng(6), 3 * 10 ** 5).reshape(-1, 3)
    assert np.allclose(x.mean(0), z.mean(0), atol=0.02 * np.sqrt(var).max())
    assert np.allclose(x.std(0), z.std(0), atol=0.02 * np.sqrt(var).max())


def test_argsort_examples():
    assert argsort_ascending([3, 1, 2]).tolist() == [1, 2, 0]
    assert argsort_ascending([0.5, 0.5]).tolist() == [0, 1]


def test_argsort_random_is_sorted():
    v = make_rng(9).normal(size=100)
    p = argsort_ascending(v)
    assert all(v[p[k]] <= v[p[k + 1]] for k in range(99))
    assert sorted(p.tolist()) == list(range(100))


@given(st.lists(st.integers(0, 4), min_size=1, max_size=40))
def test_argsort_stable(values):
    p = argsort_ascending(values).tolist()
    for a, b in zip(p, p[1:]):
        assert values[a] < values[b] or (values[a] == values[b] and a < b)


def test_logistic_stable_and_exact():
    assert logistic(0.0) == 0.5
    x = np.array([-1000.0, -5.0, 0.0, 5.0, 1000.0])
    y = logistic(x)
    assert np.all(np.isfinite(y))
    assert y[0] == 0.0 and y[-1] == 1.0
    assert np.allclose(y[1:4], 1 / (1 + np.exp(-x[1:4])))


def test_time_matrix_validation():
    with pytest.raises(ValueError):
        as_time_matrix([1.0, 2.0])
    with pytest.raises(ValueError):
        as_time_matrix([[1.0, np.nan]])
    with pytest.raises(ValueError):
        as_time_matrix(np.zeros((0, 3)))


def test_csv_header_and_layout():
    text = matrix_to_csv(np.array([[1.0, 2.5], [3.0, -4.0]]))
    assert text.splitlines() == ["t,f1,f2", "1,1.0,2.5", "2,3.0,-4.0"]


@given(arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 6)),
              elements=st.floats(-1e300, 1e300, allow_nan=False)))
def test_csv_round_trip_exact(x):
    assert np.array_equal(matrix_from_csv(matrix_to_csv(x)), x)


def test_csv_file_round_trip(tmp_path):
    x = make_rng(1).normal(size=(4, 3)) / 3.0
    write_matrix_csv(tmp_path / "m.csv", x)
    assert np.array_equal(read_matrix_csv(tmp_path / "m.csv"), x)


def test_csv_requires_header():
    with pytest.raises(ValueError):
        matrix_from_csv("1,2,3\n")
