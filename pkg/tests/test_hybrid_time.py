"""Hybrid index domains: enumeration, successor indices, storage."""

import math

import numpy as np
import pytest

from ttsa.hybrid_time import (
    HybridIndex,
    HybridSequence,
    HybridSequenceDomain,
    jbar,
    kbar,
    omega_limit_estimate,
    read_sequence_csv,
    write_sequence_csv,
)


def brute_points(dom: HybridSequenceDomain) -> set[tuple[int, int]]:
    """Definitional enumeration: level j spans the closed step range
    between consecutive jump indices, level 0 starting at 0 and the last
    level ending at k_end.
    """
    pts = set()
    starts = (0,) + dom.jump_indices
    ends = dom.jump_indices + (dom.k_end,)
    for j, (a, b) in enumerate(zip(starts, ends)):
        for k in range(a, b + 1):
            pts.add((k, j))
    return pts


def brute_jbar(pts: set[tuple[int, int]], k: int) -> int | float:
    levels = [j for (kk, j) in pts if kk == k + 1]
    return min(levels) if levels else math.inf


def brute_kbar(pts: set[tuple[int, int]], j: int) -> int | float:
    steps = [k for (k, jj) in pts if jj == j + 1]
    return min(steps) if steps else math.inf


def random_domain(rng: np.random.Generator) -> HybridSequenceDomain:
    num_jumps = int(rng.integers(0, 6))
    jumps = np.sort(rng.integers(0, 12, size=num_jumps))
    k_end = int(jumps[-1] if num_jumps else 0) + int(rng.integers(0, 8))
    return HybridSequenceDomain(tuple(int(k) for k in jumps), k_end)


def test_contains_matches_brute_enumeration():
    rng = np.random.default_rng(0)
    for _ in range(30):
        dom = random_domain(rng)
        pts = brute_points(dom)
        for k in range(dom.k_end + 3):
            for j in range(dom.num_jumps + 3):
                assert dom.contains(k, j) == ((k, j) in pts)


def test_indices_enumerate_in_arrival_order():
    rng = np.random.default_rng(1)
    for _ in range(30):
        dom = random_domain(rng)
        got = list(dom.indices())
        want = sorted(brute_points(dom), key=lambda kj: (kj[0] + kj[1], kj[1]))
        assert got == want
        assert dom.size() == len(want)


def test_jbar_kbar_match_brute_force():
    rng = np.random.default_rng(2)
    for _ in range(30):
        dom = random_domain(rng)
        pts = brute_points(dom)
        for k in range(dom.k_end + 3):
            assert jbar(dom, k) == brute_jbar(pts, k)
        for j in range(dom.num_jumps + 3):
            assert kbar(dom, j) == brute_kbar(pts, j)


def test_jbar_kbar_worked_values():
    dom = HybridSequenceDomain((2, 5), 8)
    assert [jbar(dom, k) for k in range(9)] == [0, 0, 1, 1, 1, 2, 2, 2, math.inf]
    assert [kbar(dom, j) for j in range(4)] == [2, 5, math.inf, math.inf]


def test_hybrid_index_orders_by_total_time_then_level():
    assert HybridIndex(2, 1) < HybridIndex(1, 3)
    assert HybridIndex(3, 0) < HybridIndex(2, 1)   # same total, fewer jumps first
    assert not HybridIndex(2, 1) < HybridIndex(2, 1)
    assert HybridIndex(2, 1) == HybridIndex(2, 1)


def test_domain_rejects_bad_shapes():
    with pytest.raises(ValueError):
        HybridSequenceDomain((5, 2), 8)   # jumps out of order
    with pytest.raises(ValueError):
        HybridSequenceDomain((3,), 2)     # ends before the last jump


def test_sequence_requires_every_index():
    dom = HybridSequenceDomain((1,), 2)
    vals = {kj: np.zeros(2) for kj in dom.indices()}
    missing = dict(vals)
    missing.pop((2, 1))
    with pytest.raises(ValueError, match="missing value"):
        HybridSequence(dom, missing)
    extra = dict(vals)
    extra[(9, 9)] = np.zeros(2)
    with pytest.raises(ValueError, match="outside the domain"):
        HybridSequence(dom, extra)


def test_sequence_norm_bound_and_project():
    dom = HybridSequenceDomain((), 2)
    seq = HybridSequence(dom, {
        (0, 0): np.array([3.0, 4.0]),
        (1, 0): np.array([0.0, 1.0]),
        (2, 0): np.array([-6.0, 8.0]),
    })
    assert seq.norm_bound() == 10.0
    first = seq.project([0])
    assert first.dim == 1
    assert first[(2, 0)][0] == -6.0


def test_csv_round_trip_is_byte_stable(tmp_path):
    rng = np.random.default_rng(3)
    dom = HybridSequenceDomain((2, 2, 4), 7)
    seq = HybridSequence(dom, {kj: rng.standard_normal(3) for kj in dom.indices()})
    p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
    write_sequence_csv(seq, str(p1))
    back = read_sequence_csv(str(p1))
    assert back.domain == seq.domain
    for kj in dom.indices():
        assert np.array_equal(back[kj], seq[kj])
    write_sequence_csv(back, str(p2))
    assert p1.read_bytes() == p2.read_bytes()


def test_omega_estimate_collapses_constant_tail():
    dom = HybridSequenceDomain((), 99)
    pt = np.array([2.0, -1.0])
    vals = {(k, 0): pt + (0.0 if k >= 50 else 10.0) for k in range(100)}
    cloud = omega_limit_estimate(HybridSequence(dom, vals), tail_fraction=0.1)
    assert cloud.shape == (1, 2)
    np.testing.assert_allclose(cloud[0], pt, atol=1e-12)


def test_omega_estimate_separates_two_accumulation_points():
    dom = HybridSequenceDomain((), 199)
    a, b = np.array([0.0, 0.0]), np.array([1.0, 1.0])
    vals = {(k, 0): (a if k % 2 == 0 else b) for k in range(200)}
    cloud = omega_limit_estimate(HybridSequence(dom, vals), cluster_tol=1e-3)
    assert cloud.shape == (2, 2)
    np.testing.assert_allclose(cloud[0], a, atol=1e-12)
    np.testing.assert_allclose(cloud[1], b, atol=1e-12)


def test_omega_estimate_merges_within_tolerance():
    dom = HybridSequenceDomain((), 199)
    rng = np.random.default_rng(4)
    base = np.array([5.0, 5.0])
    vals = {(k, 0): base + 1e-6 * rng.standard_normal(2) for k in range(200)}
    cloud = omega_limit_estimate(HybridSequence(dom, vals), cluster_tol=1e-3)
    assert cloud.shape == (1, 2)
    np.testing.assert_allclose(cloud[0], base, atol=1e-5)


def test_omega_estimate_thins_long_tails():
    dom = HybridSequenceDomain((), 9999)
    vals = {(k, 0): np.array([math.cos(k), math.sin(k)]) for k in range(10000)}
    cloud = omega_limit_estimate(HybridSequence(dom, vals), tail_fraction=1.0,
                                 cluster_tol=0.0, max_points=500)
    assert cloud.shape[0] <= 500
    # every centroid is an actual sample off the unit circle
    np.testing.assert_allclose(np.linalg.norm(cloud, axis=1), 1.0, atol=1e-12)
