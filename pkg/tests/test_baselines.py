import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ldpjoin.baselines import KrrParams, krr_calibrate, krr_join_estimate, krr_perturb, krr_perturb_batch
from ldpjoin.fagms import true_join_size


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 20), st.integers(2, 10**6))
def test_probability_identities(eps, d):
    kp = KrrParams(eps, d)
    assert kp.p + (d - 1) * kp.q == pytest.approx(1.0)
    assert kp.p / kp.q == pytest.approx(math.exp(eps))
    assert kp.p == pytest.approx(math.exp(eps) / (math.exp(eps) + d - 1))


def test_binary_uniform_at_zero():
    kp = KrrParams(0.0, 2)
    assert kp.p == kp.q == 0.5


def test_infinite_epsilon_keeps_value():
    kp = KrrParams(math.inf, 50)
    vals = np.arange(50)
    np.testing.assert_array_equal(krr_perturb_batch(vals, kp, 0), vals)
    assert all(krr_perturb(v, kp, 1) == v for v in range(50))
    np.testing.assert_array_equal(krr_calibrate(vals, kp), np.ones(50))
    assert krr_join_estimate([1, 1, 2], [1, 2, 2], kp) == true_join_size([1, 1, 2], [1, 2, 2])


def test_keep_rate():
    kp = KrrParams(1.0, 10)
    out = krr_perturb_batch(np.full(100_000, 3), kp, 2)
    p = math.e / (math.e + 9)
    assert abs(np.mean(out == 3) - p) < 3 * math.sqrt(p * (1 - p) / out.size)
    others = out[out != 3]
    counts = np.bincount(others, minlength=10)
    assert counts[3] == 0
    expected = others.size / 9
    assert np.all(np.abs(np.delete(counts, 3) - expected) < 5 * math.sqrt(expected))


def test_scalar_switches_uniformly():
    kp = KrrParams(0.0, 5)
    rng = np.random.default_rng(0)
    out = np.array([krr_perturb(2, kp, rng) for _ in range(20000)])
    counts = np.bincount(out, minlength=5)
    assert np.all(np.abs(counts - 4000) < 5 * math.sqrt(4000))


def test_domain_errors():
    kp = KrrParams(1.0, 10)
    with pytest.raises(ValueError):
        krr_perturb(10, kp, 0)
    with pytest.raises(ValueError):
        krr_perturb_batch([-1], kp, 0)
    with pytest.raises(ValueError):
        krr_calibrate([0], KrrParams(0.0, 10))
    with pytest.raises(ValueError):
        KrrParams(1.0, 1)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(0, 19), max_size=300), st.floats(0.1, 5), st.integers(0, 2**31))
def test_calibration_sums_to_n(vals, eps, seed):
    kp = KrrParams(eps, 20)
    rep = krr_perturb_batch(vals, kp, seed)
    assert krr_calibrate(rep, kp).sum() == pytest.approx(len(vals), abs=1e-6)


def test_calibration_unbiased():
    kp = KrrParams(1.0, 20)
    vals = np.concatenate([np.full(300, 4), np.arange(20).repeat(10)])
    truth = np.bincount(vals, minlength=20)
    est = np.array([krr_calibrate(krr_perturb_batch(vals, kp, s), kp) for s in range(400)])
    se = est.std(axis=0, ddof=1) / math.sqrt(len(est))
    assert np.all(np.abs(est.mean(axis=0) - truth) < 4 * se)


def test_single_value_calibration_mean():
    kp = KrrParams(2.0, 8)
    n = 500
    est = np.array([krr_calibrate(krr_perturb_batch(np.full(n, 1), kp, s), kp)[1] for s in range(200)])
    assert abs(est.mean() - n) < 3 * est.std(ddof=1) / math.sqrt(est.size)


def test_report_bits_grow_with_domain():
    assert KrrParams(1.0, 2).report_bits == 1
    assert KrrParams(1.0, 1024).report_bits == 10
    assert KrrParams(1.0, 1025).report_bits == 11
