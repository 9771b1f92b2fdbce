import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ldpjoin.client import REPORT_DTYPE, FapMode, PerturbedReport, fap_perturb_batch, perturb_batch
from ldpjoin.fagms import true_join_size
from ldpjoin.hashing import derive_family
from ldpjoin.harness.datasets import gen_zipf
from ldpjoin.params import SketchParams
from ldpjoin.server import (
    FrequentItemSet,
    PrivateSketch,
    estimate_frequencies,
    estimate_frequency,
    estimate_non_target_mass,
    find_frequent_items,
    join_est,
    ldp_join_sketch,
    ldp_join_sketch_plus,
    load_snapshot,
    median_join,
    merge,
    prisk_build,
    save_snapshot,
    split_users,
    theorem_bound,
)

from oracles import dense_restore

P = SketchParams(4, 16, 2.0, 3)
F = derive_family(P)


def reports(values, seed, params=P, family=F):
    return perturb_batch(np.asarray(values, dtype=np.uint64), params, family, np.random.default_rng(seed))


def test_zero_reports_zero_sketch():
    sk = prisk_build(np.empty(0, dtype=REPORT_DTYPE), P, F)
    assert sk.debiased and np.all(sk.counters == 0)
    assert estimate_frequency(sk, 12) == 0


def test_single_report_hand_restore():
    p = SketchParams(1, 2, math.inf)
    sk = prisk_build([PerturbedReport(1, 0, 0)], p)
    np.testing.assert_array_equal(sk.counters, [[1.0, 1.0]])


def test_restore_matches_dense_hadamard():
    rep = reports(np.arange(500) % 37, 1)
    raw = prisk_build(rep, P, F, restore=False)
    np.testing.assert_allclose(prisk_build(rep, P, F).counters, dense_restore(raw.tallies, P.scale))
    np.testing.assert_allclose(raw.counters, raw.tallies * P.k * P.c_eps)


def test_restore_only_once():
    sk = prisk_build(reports([1, 2], 0), P, F)
    with pytest.raises(ValueError):
        sk.restore()
    with pytest.raises(ValueError):
        sk.add_reports(reports([1], 0))


def test_out_of_range_reports():
    bad = np.array([(1, 4, 0)], dtype=REPORT_DTYPE)
    with pytest.raises(IndexError):
        prisk_build(bad, P, F)
    bad = np.array([(1, 0, 16)], dtype=REPORT_DTYPE)
    with pytest.raises(IndexError):
        prisk_build(bad, P, F)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(0, 100), max_size=200), st.integers(0, 2**31), st.data())
def test_merge_laws(values, seed, data):
    rep = reports(values, seed)
    cuts = sorted(data.draw(st.lists(st.integers(0, len(rep)), min_size=2, max_size=2)))
    parts = [rep[: cuts[0]], rep[cuts[0]: cuts[1]], rep[cuts[1]:]]
    s1, s2, s3 = (prisk_build(p, P, F, restore=False) for p in parts)
    whole = prisk_build(rep, P, F, restore=False)
    empty = PrivateSketch(P, F)
    np.testing.assert_array_equal(merge(merge(s1, s2), s3).tallies, whole.tallies)
    np.testing.assert_array_equal(merge(s1, merge(s2, s3)).tallies, whole.tallies)
    np.testing.assert_array_equal(merge(s1, s2).tallies, merge(s2, s1).tallies)
    np.testing.assert_array_equal(merge(s1, empty).tallies, s1.tallies)
    assert merge(merge(s1, s2), s3).n_reports == len(rep)
    np.testing.assert_array_equal(merge(merge(s1, s2), s3).restore().counters, whole.restore().counters)


def test_merge_preconditions():
    a = prisk_build(reports([1], 0), P, F, restore=False)
    with pytest.raises(ValueError):
        merge(a, prisk_build(reports([1], 0), P, F))
    other = SketchParams(4, 16, 1.0, 3)
    with pytest.raises(ValueError):
        merge(a, prisk_build(reports([1], 0, other, derive_family(other)), other, restore=False))


def test_all_clients_same_value_frequency():
    p = SketchParams(18, 1024, 4.0, 11)
    f = derive_family(p)
    n, d = 100_000, 77
    sk = prisk_build(reports(np.full(n, d), 2, p, f), p, f)
    sigma = math.sqrt(n * (p.c_eps ** 2 - 1))
    assert abs(estimate_frequency(sk, d) - n) < 3 * sigma


def test_frequency_unbiased_over_families():
    # hot value, cold value and an absent value, re-seeding the family every run
    values = np.concatenate([np.full(3000, 1), np.full(300, 2), np.arange(10, 2010)]).astype(np.uint64)
    probes = [1, 2, 5]
    truth = np.array([3000, 300, 0])
    est = []
    for s in range(100):
        p = SketchParams(6, 64, 2.0, s)
        f = derive_family(p)
        est.append(estimate_frequencies(prisk_build(reports(values, s, p, f), p, f), probes))
    est = np.array(est)
    se = est.std(axis=0, ddof=1) / math.sqrt(len(est))
    assert np.all(np.abs(est.mean(axis=0) - truth) < 4 * se)


def test_snapshot_roundtrip(tmp_path):
    rep = reports(np.arange(300) % 11, 4)
    for restore in (False, True):
        sk = prisk_build(rep, P, F, restore=restore)
        path = tmp_path / f"s{restore}.bin"
        save_snapshot(sk, path)
        back = load_snapshot(path)
        assert back.params == P and back.n_reports == 300 and back.debiased == restore
        np.testing.assert_array_equal(back.tallies, sk.tallies)
        np.testing.assert_array_equal(back.counters, sk.counters)
    raw = path.read_bytes()
    assert raw[:4] == b"LDPS"
    assert len(raw) == 4 + 4 + 4 + 8 + 8 + 1 + 8 + 8 * P.k * P.m
    (tmp_path / "bad").write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(ValueError):
        load_snapshot(tmp_path / "bad")


def test_frequent_items_thresholds():
    p = SketchParams(8, 256, 6.0, 1)
    f = derive_family(p)
    vals = np.concatenate([np.full(5000, 3), np.arange(100, 600)])
    sk = prisk_build(reports(vals, 0, p, f), p, f)
    dom = np.arange(1000)
    assert len(find_frequent_items(sk, sk, dom, 1.0, (vals.size,) * 2, (vals.size,) * 2)) == 0
    fi = find_frequent_items(sk, sk, dom, 0.5, (vals.size,) * 2, (vals.size,) * 2)
    assert 3 in fi
    assert fi.freq_estimates_a[3] == pytest.approx(estimate_frequency(sk, 3))
    with pytest.raises(ValueError):
        find_frequent_items(sk, sk, [], 0.1, (1, 1), (1, 1))


def test_frequent_item_recall_zipf2():
    # population 10^7 per attribute with r = 0.1, so only the 10^6 sampled users are simulated
    p = SketchParams(18, 1024, 4.0)
    n_pop, n_s, dom = 10_000_000, 1_000_000, np.arange(10_000)
    found = total = 0
    for run in range(10):
        pr = p.with_seed(run)
        f = derive_family(pr)
        sa = gen_zipf(n_s, 10_000, 2.0, seed=2 * run, id_seed=99)
        sb = gen_zipf(n_s, 10_000, 2.0, seed=2 * run + 1, id_seed=99)
        ma = prisk_build(reports(sa, run, pr, f), pr, f)
        mb = prisk_build(reports(sb, run + 100, pr, f), pr, f)
        fi = find_frequent_items(ma, mb, dom, 0.001, (n_s, n_s), (n_pop, n_pop))
        true_items = set(np.flatnonzero(np.bincount(sa.astype(np.int64), minlength=10_000) > 0.001 * n_s).tolist())
        found += len(true_items & set(fi.items.tolist()))
        total += len(true_items)
    assert found / total >= 0.9


def test_join_est_empty_fi_mode_l_is_plain_product():
    rep = reports(np.arange(400) % 13, 1)
    sk = prisk_build(rep, P, F, mode="L")
    fi = FrequentItemSet.empty((400, 400))
    for src in ("sketch", "group", "population"):
        assert join_est(sk, sk, FapMode.L, fi, (400, 400), src) == median_join(sk, sk)


def test_join_est_errors():
    sk = prisk_build(reports([1, 2], 0), P, F, mode="L")
    fi = FrequentItemSet.empty((2, 2))
    with pytest.raises(ValueError):
        join_est(sk, sk, "H", fi, (2, 2))
    with pytest.raises(ValueError):
        join_est(sk, sk, "L", fi, (0, 2))
    with pytest.raises(ValueError):
        join_est(sk, sk, "L", fi, (2, 2), "bogus")


def test_non_target_removal_mean():
    # every value is a non-target in mode H with FI empty
    p = SketchParams(4, 64, 2.0)
    nt = 20_000
    before, after = [], []
    for s in range(60):
        pr = p.with_seed(s)
        f = derive_family(pr)
        rep = fap_perturb_batch(np.arange(nt) % 500, "H", [], pr, f, np.random.default_rng(s))
        sk = prisk_build(rep, pr, f, mode="H")
        before.append(sk.counters.mean())
        after.append((sk.counters - nt / p.m).mean())
    for vals, target in ((before, nt / p.m), (after, 0.0)):
        vals = np.array(vals)
        assert abs(vals.mean() - target) < 3 * vals.std(ddof=1) / math.sqrt(vals.size)


def test_all_non_target_join_is_zero():
    p = SketchParams(4, 64, 2.0)
    nt = 5000
    fi = FrequentItemSet.empty((nt, nt))
    ests = []
    for s in range(80):
        pr = p.with_seed(s)
        f = derive_family(pr)
        rng = np.random.default_rng(s)
        ma = prisk_build(fap_perturb_batch(np.arange(nt), "H", [], pr, f, rng), pr, f, mode="H")
        mb = prisk_build(fap_perturb_batch(np.arange(nt), "H", [], pr, f, rng), pr, f, mode="H")
        ests.append(join_est(ma, mb, "H", fi, (nt, nt), "group"))
    ests = np.array(ests)
    assert abs(ests.mean()) < 3 * ests.std(ddof=1) / math.sqrt(ests.size)


def test_non_target_mass_estimate_unbiased():
    p = SketchParams(6, 128, 3.0)
    vals = np.concatenate([np.full(2000, 1), np.arange(100, 8100)]).astype(np.uint64)
    fi = [1]
    est = []
    for s in range(60):
        pr = p.with_seed(s)
        f = derive_family(pr)
        sk = prisk_build(fap_perturb_batch(vals, "L", fi, pr, f, np.random.default_rng(s)), pr, f, mode="L")
        est.append(estimate_non_target_mass(sk))
    est = np.array(est)
    assert abs(est.mean() - 2000) < 3 * est.std(ddof=1) / math.sqrt(est.size)


def test_low_group_estimates_cold_join():
    # one hot value in FI; mode L keeps only the cold part of the join
    hot, cold_a, cold_b = 0, np.arange(1, 201), np.arange(100, 301)
    a = np.concatenate([np.full(3000, hot), np.repeat(cold_a, 5)]).astype(np.uint64)
    b = np.concatenate([np.full(3000, hot), np.repeat(cold_b, 5)]).astype(np.uint64)
    truth = true_join_size(np.repeat(cold_a, 5), np.repeat(cold_b, 5))
    fi = FrequentItemSet([hot], 0.1, {hot: 3000.0}, {hot: 3000.0}, (a.size, b.size), (a.size, b.size))
    ests = []
    for s in range(60):
        p = SketchParams(8, 256, 4.0, s)
        f = derive_family(p)
        rng = np.random.default_rng(s)
        ma = prisk_build(fap_perturb_batch(a, "L", fi, p, f, rng), p, f, mode="L")
        mb = prisk_build(fap_perturb_batch(b, "L", fi, p, f, rng), p, f, mode="L")
        ests.append(join_est(ma, mb, "L", fi, (a.size, b.size), "group"))
    ests = np.array(ests)
    assert abs(ests.mean() - truth) < 3 * ests.std(ddof=1) / math.sqrt(ests.size)


def test_single_value_join_within_five_percent():
    p = SketchParams(18, 1024, 8.0)
    n = 10_000
    vals = np.full(n, 4, dtype=np.uint64)
    ests = [ldp_join_sketch(vals, vals, p.with_seed(s), rng=s).value for s in range(20)]
    assert abs(np.mean(ests) - n * n) <= 0.05 * n * n


def test_disjoint_support_mean_near_zero():
    p = SketchParams(18, 1024, 4.0)
    a = np.arange(0, 2000, dtype=np.uint64)
    b = np.arange(5000, 7000, dtype=np.uint64)
    ests = [ldp_join_sketch(a, b, p.with_seed(s), rng=s).value for s in range(20)]
    # theorem_bound already carries the 4 / sqrt(m) factor
    assert abs(np.mean(ests)) <= theorem_bound(a.size, b.size, p)


def test_split_users():
    s, g1, g2 = split_users(101, 0.1, 0)
    assert sorted(np.concatenate([s, g1, g2]).tolist()) == list(range(101))
    assert s.size == 10 and abs(g1.size - g2.size) <= 1
    np.testing.assert_array_equal(split_users(101, 0.1, 0)[1], g1)
    with pytest.raises(ValueError):
        split_users(2, 0.1, 0)


def test_plus_reduces_to_scaled_one_phase_when_fi_empty():
    # uniform data far below theta: FI is empty and both groups run plain perturbation
    rng = np.random.default_rng(0)
    a = rng.integers(0, 2000, 40_000).astype(np.uint64)
    b = rng.integers(0, 2000, 40_000).astype(np.uint64)
    truth = true_join_size(a, b)
    ests = []
    for s in range(20):
        p = SketchParams(18, 1024, 4.0, s)
        res = ldp_join_sketch_plus(a, b, p, 0.1, 0.5, domain=np.arange(2000), rng=s)
        assert len(res.frequent_items) == 0
        ests.append(res.value)
    ests = np.array(ests)
    assert abs(ests.mean() - truth) < 3 * ests.std(ddof=1) / math.sqrt(ests.size)


def test_plus_is_deterministic_and_combines_components():
    a = gen_zipf(20_000, 500, 1.5, seed=1, id_seed=3)
    b = gen_zipf(20_000, 500, 1.5, seed=2, id_seed=3)
    p = SketchParams(8, 256, 4.0, 5)
    r1 = ldp_join_sketch_plus(a, b, p, 0.1, 0.01, domain=np.arange(500), rng=7)
    r2 = ldp_join_sketch_plus(a, b, p, 0.1, 0.01, domain=np.arange(500), rng=7)
    assert r1.value == r2.value
    l_est, h_est = r1.components
    sl, sh = r1.scale_factors
    assert r1.value == pytest.approx(sl * l_est + sh * h_est)
    with pytest.raises(ValueError):
        ldp_join_sketch_plus(a, b, p, 0.0, 0.01, domain=np.arange(500))
    with pytest.raises(ValueError):
        ldp_join_sketch_plus(a, b, p, 0.1, 1.0, domain=np.arange(500))
