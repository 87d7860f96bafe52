import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from sbcspm.channel import (
    ArrivalSchedule,
    ChannelParams,
    bits_available,
    bsc_transmit,
    capacity,
    crossover_for_capacity,
)

from .oracles import binary_entropy


def test_capacity_examples():
    assert capacity(0.11) == pytest.approx(0.5001, abs=1e-4)
    assert capacity(0.0) == 1.0
    assert capacity(0.5) == 0.0


@pytest.mark.parametrize("p", [-0.1, 0.51, 1.0, float("nan")])
def test_capacity_rejects_out_of_range(p):
    with pytest.raises(ValueError):
        capacity(p)


@given(st.floats(0.0, 0.5))
def test_capacity_matches_entropy(p):
    assert capacity(p) == pytest.approx(1 - binary_entropy(p), abs=1e-12)


@given(st.floats(0.001, 0.999))
def test_crossover_inverts_capacity(C):
    p = crossover_for_capacity(C)
    assert 0.0 <= p <= 0.5
    assert capacity(p) == pytest.approx(C, abs=1e-10)


def test_crossover_examples():
    assert crossover_for_capacity(0.5) == pytest.approx(0.1100, abs=1e-4)
    assert crossover_for_capacity(1 - 1e-9) < 1e-9
    for C in (0.0, 1.0, -0.2):
        with pytest.raises(ValueError):
            crossover_for_capacity(C)


def test_round_trip_grid():
    for C in np.arange(0.3, 0.951, 0.05):
        assert capacity(crossover_for_capacity(C)) == pytest.approx(C, abs=1e-10)


def test_capacity_strictly_decreasing():
    vals = [capacity(p) for p in np.linspace(0, 0.5, 100)]
    assert all(a > b for a, b in zip(vals, vals[1:]))


def test_params_derived():
    c = ChannelParams(0.2)
    assert c.q == pytest.approx(0.8)
    assert c.log_ratio == pytest.approx(math.log(0.25))
    assert ChannelParams.from_capacity(0.5).p == pytest.approx(0.11, abs=1e-3)
    with pytest.raises(ValueError):
        ChannelParams(0.6)


def test_bsc_flip_rate():
    rng = np.random.default_rng(1)
    c = ChannelParams(0.2)
    flips = sum(bsc_transmit(0, c, rng) for _ in range(20000))
    assert abs(flips / 20000 - 0.2) < 4 * math.sqrt(0.16 / 20000)
    rng = np.random.default_rng(1)
    assert all(bsc_transmit(1, ChannelParams(1e-12), rng) == 1 for _ in range(100))


def test_bits_available():
    assert bits_available(0.0, 10, 2.0) == 0
    assert bits_available(2.5, 10, 2.0) == 5
    assert bits_available(100.0, 10, 2.0) == 10
    assert bits_available(0.0, 10, math.inf) == 10
    assert bits_available(3.0, 240, 2.0) == 6
    assert bits_available(120.0, 240, 2.0) == 240


def test_schedule_gamma_half():
    s = ArrivalSchedule(lam=0.5, mu=1.0)
    assert s.usable_slots(4) == [3, 5, 7, 9]
    assert s.gamma == 0.5


@given(st.integers(1, 8), st.integers(1, 8), st.integers(1, 50))
def test_first_usable_slot_is_strictly_after_arrival(num, den, i):
    lam, mu = num / 4, den / 4
    slot = ArrivalSchedule(lam=lam, mu=mu).first_usable_slot(i)
    # slot t fires at t/mu and may carry bit i (1-indexed) only if i/lam < t/mu
    arrival = Fraction(i) / Fraction(lam)
    assert Fraction(slot) / Fraction(mu) > arrival
    assert Fraction(slot - 1) / Fraction(mu) <= arrival


def test_noncausal_schedule():
    s = ArrivalSchedule(lam=math.inf, mu=1.0)
    assert s.usable_slots(3) == [1, 1, 1]
    assert s.full_arrival_time(3) == 0.0
