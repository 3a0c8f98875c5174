import json
import math

import numpy as np
import pytest
from scipy import stats

from dynamask import datagen as dg
from dynamask.numerics import logistic, make_rng


def test_arma_zero_noise_is_zero():
    assert np.array_equal(dg.ar3_filter(np.zeros((10, 4))), np.zeros((10, 4)))


def test_arma_impulse_response():
    eps = np.zeros((6, 1))
    eps[0, 0] = 1.0
    x = dg.ar3_filter(eps)[:, 0]
    expected = [1.0, 0.25, 0.25 * 0.25 + 0.1, 0.0]
    expected[3] = 0.25 * expected[2] + 0.1 * expected[1] + 0.05 * expected[0]
    assert np.allclose(x[:4], expected, rtol=0, atol=1e-15)
    assert math.isclose(x[2], 0.1625) and math.isclose(x[3], 0.115625)


def test_arma_matches_naive_recursion():
    eps = make_rng(3).normal(size=(30, 2))
    x = np.zeros_like(eps)
    for i in range(2):
        for t in range(30):
            past = [x[t - k, i] if t - k >= 0 else 0.0 for k in (1, 2, 3)]
            x[t, i] = 0.25 * past[0] + 0.1 * past[1] + 0.05 * past[2] + eps[t, i]
    assert np.allclose(dg.ar3_filter(eps), x, atol=1e-14)


def test_arma_deterministic():
    a = dg.generate_arma(make_rng(5), 50, 50)
    b = dg.generate_arma(make_rng(5), 50, 50)
    assert a.tobytes() == b.tobytes()
    with pytest.raises(ValueError):
        dg.generate_arma(make_rng(5), 0, 3)


def test_rare_feature_target_shape():
    tgt = dg.make_rare_feature_target(make_rng(1), 50, 50, 5)
    # 25 salient times x 5 features: the salient fraction is exactly 0.05
    assert len(tgt) == 125
    assert len(tgt) / 2500 == 0.05
    assert tgt.times == list(range(13, 38))
    assert len(tgt.features) == 5


def test_rare_feature_all_features():
    tgt = dg.make_rare_feature_target(make_rng(1), 50, 8, 8)
    assert tgt.features == list(range(1, 9))


def test_rare_feature_too_many_features():
    with pytest.raises(ValueError, match="invalid request"):
        dg.make_rare_feature_target(make_rng(1), 50, 4, 5)


def test_rare_feature_sets_differ_across_seeds():
    # P(two draws coincide) = 1 / C(50, 5) ~ 5e-7
    assert 1 / math.comb(50, 5) < 1e-6
    sets = {tuple(dg.make_rare_feature_target(make_rng(s), 50, 50, 5).features) for s in range(20)}
    assert len(sets) == 20


def test_rare_time_target_shape():
    tgt = dg.make_rare_time_target(make_rng(2), 50, 50, 5)
    times = tgt.times
    assert len(tgt) == 125
    assert times == list(range(times[0], times[0] + 5))
    assert tgt.features == list(range(13, 38))


def test_rare_time_forced_start():
    tgt = dg.make_rare_time_target(make_rng(2), 50, 50, 5, start=1)
    assert tgt.times == [1, 2, 3, 4, 5]
    with pytest.raises(ValueError):
        dg.make_rare_time_target(make_rng(2), 50, 50, 5, start=47)


def test_rare_time_start_uniform():
    rng = make_rng(10)
    starts = [dg.make_rare_time_target(rng, 50, 50, 5).times[0] for _ in range(10 ** 4)]
    counts = np.bincount(starts, minlength=47)[1:]
    assert len(counts) == 46 and counts.min() > 0
    assert stats.chisquare(counts).pvalue > 0.01


def test_saliency_target_bounds_and_pairs():
    with pytest.raises(ValueError):
        dg.SaliencyTarget((2, 2), frozenset({(2, 0)}))
    tgt = dg.SaliencyTarget.from_pairs((3, 2), [(1, 1), (3, 2)])
    assert tgt.pairs_one_based() == [[1, 1], [3, 2]]
    assert np.array_equal(tgt.indicator(), [[1, 0], [0, 0], [0, 1]])
    assert dg.SaliencyTarget.from_indicator(tgt.indicator()) == tgt


def test_hmm_label_probability_examples():
    x = np.array([[0.3, 0.0, 5.0]])
    assert dg.hmm_label_probability(x, np.array([0]))[0] == 0.5
    assert dg.hmm_label_probability(x, np.array([1]))[0] == logistic(5.0)


def test_hmm_transition_frequencies():
    s = dg.sample_hmm_states(make_rng(4), 10 ** 5)
    for a in (0, 1):
        prev = s[:-1] == a
        freq = np.mean(s[1:][prev] == 1)
        assert abs(freq - dg.HMM_TRANSITION[a, 1]) < 0.01


def test_hmm_dataset_invariants():
    ds = dg.generate_hmm_dataset(make_rng(6), 5, 40)
    assert len(ds) == 5
    for k in range(5):
        x, y, s = ds.inputs[k], ds.labels[k], ds.states[k]
        assert x.shape == (40, 3)
        assert set(np.unique(y)) <= {0, 1}
        assert ds.targets[k].pairs_one_based() == sorted([t + 1, 2 + int(s[t])] for t in range(40))
        # re-deriving p_t from stored inputs and states is exact
        driver = np.where(s == 0, x[:, 1], x[:, 2])
        assert np.array_equal(ds.label_probabilities(k), logistic(driver))


def test_hmm_all_zero_states_target():
    tgt = dg.SaliencyTarget((4, 3), frozenset((t, 1 + 0) for t in range(4)))
    assert tgt.pairs_one_based() == [[t, 2] for t in range(1, 5)]


def test_hmm_emission_means():
    ds = dg.generate_hmm_dataset(make_rng(8), 200, 100)
    X = np.concatenate(ds.inputs)
    S = np.concatenate(ds.states)
    for s in (0, 1):
        assert np.allclose(X[S == s].mean(0), dg.HMM_MEANS[s], atol=0.05)


def test_hmm_deterministic_and_validates():
    a = dg.generate_hmm_dataset(make_rng(1), 3, 10)
    b = dg.generate_hmm_dataset(make_rng(1), 3, 10)
    assert all(np.array_equal(p, q) for p, q in zip(a.inputs, b.inputs))
    assert all(np.array_equal(p, q) for p, q in zip(a.labels, b.labels))
    with pytest.raises(ValueError):
        dg.generate_hmm_dataset(make_rng(1), 0, 10)


def test_instances_round_trip(tmp_path):
    rng = make_rng(2)
    xs = [dg.generate_arma(rng, 50, 50) for _ in range(2)]
    ts = [dg.make_rare_feature_target(rng) for _ in range(2)]
    dg.save_instances(tmp_path, xs, ts, {"seed": 2})
    xs2, ts2, meta, labels, states = dg.load_instances(tmp_path)
    assert all(np.array_equal(a, b) for a, b in zip(xs, xs2))
    assert ts2 == ts and meta["n_series"] == 2 and labels is None
    pairs = json.loads((tmp_path / "targets.json").read_text())
    assert min(p[0] for p in pairs[0]) == 13


def test_hmm_round_trip(tmp_path):
    ds = dg.generate_hmm_dataset(make_rng(3), 3, 12)
    dg.save_hmm_dataset(tmp_path, ds, {"seed": 3})
    ds2, meta = dg.load_hmm_dataset(tmp_path)
    assert all(np.array_equal(a, b) for a, b in zip(ds.states, ds2.states))
    assert all(np.array_equal(a, b) for a, b in zip(ds.labels, ds2.labels))
    assert ds2.targets == ds.targets


def test_subset():
    ds = dg.generate_hmm_dataset(make_rng(3), 4, 5)
    sub = ds.subset([2, 0])
    assert np.array_equal(sub.inputs[0], ds.inputs[2]) and len(sub) == 2
