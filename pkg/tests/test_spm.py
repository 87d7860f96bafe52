import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sbcspm.channel import ChannelParams, bsc_transmit, capacity
from sbcspm.spm import (
    GroupList,
    InvariantError,
    Locator,
    Partition,
    decode_status,
    error_pattern,
    init_groups,
    locate,
    partition,
    rank_pattern,
    run_spm,
    unrank_pattern,
    update,
)

from .oracles import (
    BruteBayes,
    enumerate_weight_patterns,
    group_posterior,
    membership,
    message_index,
    pattern_table,
)


# -- ranking ---------------------------------------------------------------

def test_rank_examples():
    assert rank_pattern([0, 1, 1, 0]) == 2
    assert rank_pattern([0] * 7) == 0
    assert list(unrank_pattern(4, 2, 0)) == [0, 0, 1, 1]
    assert list(unrank_pattern(4, 2, 5)) == [1, 1, 0, 0]
    assert list(unrank_pattern(5, 0, 0)) == [0] * 5


@pytest.mark.parametrize("K", range(1, 13))
def test_rank_matches_enumeration(K):
    for w in range(K + 1):
        for r, e in enumerate(enumerate_weight_patterns(K, w)):
            assert rank_pattern(e) == r
            assert tuple(unrank_pattern(K, w, r)) == e


def test_unrank_rejects_out_of_range():
    with pytest.raises(ValueError):
        unrank_pattern(4, 2, 6)
    with pytest.raises(ValueError):
        unrank_pattern(4, 2, -1)


@given(st.lists(st.integers(0, 1), min_size=1, max_size=300))
def test_rank_round_trip_large(bits):
    w = sum(bits)
    r = rank_pattern(bits)
    assert 0 <= r < math.comb(len(bits), w)
    assert list(unrank_pattern(len(bits), w, r)) == bits


# -- initial list ----------------------------------------------------------

def test_init_groups_example():
    gl = init_groups(3, ChannelParams(0.1))
    groups = gl.groups
    assert [g.count for g in groups] == [1, 3, 3, 1]
    assert [g.rho for g in groups] == pytest.approx([0.729, 0.081, 0.009, 0.001], abs=1e-12)
    assert gl.total_mass == pytest.approx(1.0, abs=1e-12)
    gl = init_groups(1, ChannelParams(0.3))
    assert [(g.count, round(g.rho, 12)) for g in gl.groups] == [(1, 0.7), (1, 0.3)]


@given(st.integers(1, 60), st.floats(0.001, 0.499))
def test_init_groups_mass_and_count(K, p):
    gl = init_groups(K, ChannelParams(p))
    assert gl.total_count == 2 ** K
    assert gl.total_mass == pytest.approx(1.0, abs=1e-9)
    assert gl.n_groups == K + 1


# -- partition -------------------------------------------------------------

def test_partition_symmetric_no_split():
    gl = GroupList.from_buckets(1, ChannelParams(0.1), {0: [(0, 0, 1), (1, 0, 1)]})
    part = gl.partition()
    assert part.p0 == 0.5
    assert [(g.weight, g.lo, g.hi) for g in part.s0] == [(0, 0, 1)]


def test_partition_even_split():
    gl = GroupList.from_buckets(4, ChannelParams(0.1), {0: [(2, 0, 4)]})
    part = gl.partition()
    assert part.p0 == pytest.approx(0.5)
    assert [(g.weight, g.lo, g.hi) for g in part.s0] == [(2, 0, 2)]
    assert [(g.weight, g.lo, g.hi) for g in part.s1] == [(2, 2, 4)]


def test_partition_k2_example_against_exhaustive_search():
    gl = init_groups(2, ChannelParams(0.1))
    part = gl.partition()
    assert part.p0 == pytest.approx(0.81)
    assert [(g.weight, g.lo, g.hi) for g in part.s0] == [(0, 0, 1)]
    masses = [0.81, 0.09, 0.09, 0.01]
    best = min(abs(sum(s) - 0.5) for k in range(1, 4) for s in itertools.combinations(masses, k))
    assert abs(part.p0 - 0.5) == pytest.approx(best, abs=1e-12)
    assert abs(part.p0 - 0.5) <= gl.max_rho / 2


def test_partition_rejects_empty():
    with pytest.raises(ValueError):
        GroupList(2, ChannelParams(0.1)).partition()


def test_locate_examples():
    gl = init_groups(2, ChannelParams(0.1), [1, 0])
    part = gl.partition()
    assert locate([1, 0], [1, 0], part) == 0
    assert locate([0, 1], [1, 0], part) == 1


def test_locate_rejects_unknown_pattern():
    gl = GroupList.from_buckets(2, ChannelParams(0.1), {0: [(0, 0, 1)]})
    with pytest.raises(InvariantError):
        gl.key_of(1, 0)


# -- update ----------------------------------------------------------------

def test_update_example():
    gl = init_groups(1, ChannelParams(0.1))
    part = gl.partition()
    assert part.p0 == pytest.approx(0.9)
    update(part, 0)
    assert gl.groups[0].rho == pytest.approx(0.81 / 0.82, abs=1e-12)
    assert gl.total_mass == pytest.approx(1.0, abs=1e-12)


def test_update_uninformative_partition():
    gl = init_groups(3, ChannelParams(0.1))
    before = [g.rho for g in gl.groups]
    whole = Partition(gl, len(gl._keys) - 1, gl._keys[-1], 0, 1, 1.0)
    gl.update(whole, 0)
    assert [g.rho for g in gl.groups] == pytest.approx(before, abs=1e-12)


def test_update_rejects_foreign_partition():
    a = init_groups(3, ChannelParams(0.1))
    b = init_groups(3, ChannelParams(0.1))
    with pytest.raises(ValueError):
        b.update(a.partition(), 0)


def _oracle_run(K, p, ys, received):
    """Drive the group list with a fixed output sequence; check it against Bayes."""
    params = ChannelParams(p)
    table = pattern_table(received)
    n = 2 ** K
    brute = BruteBayes(K, p)
    for i in range(K):
        brute.systematic(i, received[i])
    gl = init_groups(K, params, received)
    np.testing.assert_allclose(group_posterior(gl.leaf_groups(), table, n), brute.posterior, atol=1e-9, rtol=0)
    for t, y in enumerate(ys):
        part = partition(gl)
        s0 = part.leaf_groups(0)
        s1 = part.leaf_groups(1)
        # S0 and S1 cover every message exactly once
        covered = sorted(table[(w, r)] for w, lo, hi, _ in s0 + s1 for r in range(lo, hi))
        assert covered == list(range(n))
        assert abs(part.p0 - 0.5) <= gl.max_rho / 2 + 1e-12
        brute.observe(membership(s0, table, n), y)
        update(part, y)
        post = group_posterior(gl.leaf_groups(), table, n)
        np.testing.assert_allclose(post, brute.posterior, atol=1e-9, rtol=0)
        assert gl.total_mass == pytest.approx(1.0, abs=1e-9)
        assert gl.total_count == n
        rhos = [g.rho for g in gl.groups]
        assert all(a >= b for a, b in zip(rhos, rhos[1:]))
        assert gl.n_groups <= K + 1 + t + 1
        # ranges inside a weight class never overlap
        for w in range(K + 1):
            ranges = sorted((lo, hi) for gw, lo, hi, _ in gl.leaf_groups() if gw == w)
            assert all(h1 <= l2 for (_, h1), (l2, _) in zip(ranges, ranges[1:]))


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 10), st.floats(0.02, 0.45), st.data())
def test_oracle_equivalence_random_transcripts(K, p, data):
    received = np.array(data.draw(st.lists(st.integers(0, 1), min_size=K, max_size=K)), dtype=np.uint8)
    ys = data.draw(st.lists(st.integers(0, 1), max_size=40))
    _oracle_run(K, p, ys, received)


def test_oracle_equivalence_100_transcripts():
    rng = np.random.default_rng(2024)
    for _ in range(100):
        K = int(rng.integers(1, 11))
        received = rng.integers(0, 2, K, dtype=np.uint8)
        ys = rng.integers(0, 2, int(rng.integers(0, 30)))
        _oracle_run(K, float(rng.uniform(0.02, 0.45)), ys, received)


def test_long_run_recompute_keeps_mass():
    # enough updates to cross several exact renormalizations
    rng = np.random.default_rng(5)
    gl = init_groups(12, ChannelParams(0.3), rng.integers(0, 2, 12))
    for _ in range(300):
        update(partition(gl), int(rng.integers(0, 2)))
        assert gl.total_mass == pytest.approx(1.0, abs=1e-9)


# -- decoding --------------------------------------------------------------

def test_decode_status_examples():
    gl = GroupList.from_buckets(1, ChannelParams(0.1), {0: [(0, 0, 1)]}, received=[1])
    assert list(decode_status(gl, 1e-3)) == [1]
    gl = init_groups(1, ChannelParams(0.02))
    assert gl.max_rho == pytest.approx(0.98)
    assert decode_status(gl, 0.01) is None
    assert list(decode_status(gl, 0.03)) == [0]


def test_decode_tie_breaks_on_weight_then_rank():
    gl = GroupList.from_buckets(3, ChannelParams(0.1), {0: [(1, 1, 2), (2, 0, 1)]}, received=[0, 0, 0])
    # both messages have posterior 1/2
    assert list(decode_status(gl, 0.5)) == list(unrank_pattern(3, 1, 1))


# -- full runs -------------------------------------------------------------

def _manual_spm(K, params, epsilon, theta, rng):
    xs = list(map(int, theta))
    ys = [bsc_transmit(x, params, rng) for x in xs]
    gl = init_groups(K, params, ys)
    while (dec := decode_status(gl, epsilon)) is None:
        part = partition(gl)
        x = locate(theta, ys[:K], part)
        y = bsc_transmit(x, params, rng)
        update(part, y)
        xs.append(x)
        ys.append(y)
    return len(xs), dec, np.array([xs, ys]).T


def test_run_spm_matches_manual_loop():
    params = ChannelParams(0.2)
    for seed in range(20):
        theta = np.random.default_rng(seed).integers(0, 2, 8, dtype=np.uint8)
        run = run_spm(8, params, 1e-3, theta, np.random.default_rng(seed))
        tau, dec, tr = _manual_spm(8, params, 1e-3, theta, np.random.default_rng(seed))
        assert run.tau == tau
        assert np.array_equal(run.decoded, dec)
        assert np.array_equal(run.transcript, tr)


def test_locator_tracks_key():
    params = ChannelParams(0.2)
    rng = np.random.default_rng(3)
    theta = rng.integers(0, 2, 10, dtype=np.uint8)
    received = np.bitwise_xor(theta, (rng.random(10) < 0.2).astype(np.uint8))
    gl = init_groups(10, params, received)
    loc = Locator.for_message(theta, received)
    for _ in range(50):
        part = gl.partition()
        x = loc.side(part)
        assert x == locate(theta, received, part)
        y = int(rng.integers(0, 2))
        loc.advance(x, y)
        gl.update(part, y)
        assert loc.key == gl.key_of(*error_pattern(theta, received))


def test_run_spm_noiseless_limit():
    run = run_spm(8, ChannelParams(1e-9), 1e-3, np.ones(8, dtype=np.uint8), np.random.default_rng(0))
    assert run.tau == 8
    assert list(run.decoded) == [1] * 8


def test_run_spm_rate_and_fer():
    params = ChannelParams(0.2)
    taus, errors = [], 0
    for seed in range(1000):
        rng = np.random.default_rng(seed)
        theta = rng.integers(0, 2, 8, dtype=np.uint8)
        run = run_spm(8, params, 1e-3, theta, rng)
        taus.append(run.tau)
        errors += not np.array_equal(run.decoded, theta)
    rate = 8 / np.mean(taus)
    assert 0 < rate <= capacity(0.2)
    assert errors / 1000 <= 2e-3
