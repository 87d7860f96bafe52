"""Binary symmetric channel with noiseless feedback and the causal arrival clock."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np


def capacity(p: float) -> float:
    """Capacity ``1 - H(p)`` of BSC(p) in bits per channel use.

    ``0 log 0`` is taken as 0, so ``capacity(0) == 1`` and ``capacity(0.5) == 0``.
    """
    if not 0.0 <= p <= 0.5:
        raise ValueError(f"crossover probability must lie in [0, 1/2], got {p!r}")
    q = 1.0 - p
    h = 0.0
    if p > 0.0:
        h -= p * math.log2(p)
    if q > 0.0:
        h -= q * math.log2(q)
    return 1.0 - h


def crossover_for_capacity(C: float, tol: float = 1e-13) -> float:
    """Invert :func:`capacity` on ``(0, 1/2)`` by bisection."""
    if not 0.0 < C < 1.0:
        raise ValueError(f"capacity must lie in (0, 1), got {C!r}")
    lo, hi = 0.0, 0.5
    # capacity is strictly decreasing on [0, 1/2]
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if capacity(mid) > C:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class ChannelParams:
    """BSC(p) parameters; ``q`` and ``capacity`` are derived."""

    p: float
    q: float = field(init=False)
    capacity: float = field(init=False)

    def __post_init__(self):
        if not 0.0 < self.p < 0.5:
            raise ValueError(f"crossover probability must lie in (0, 1/2), got {self.p!r}")
        object.__setattr__(self, "q", 1.0 - self.p)
        object.__setattr__(self, "capacity", capacity(self.p))

    @classmethod
    def from_capacity(cls, C: float) -> "ChannelParams":
        return cls(crossover_for_capacity(C))

    @property
    def log_ratio(self) -> float:
        """``log(p/q)``, the log-factor a mismatched symbol applies relative to a matched one."""
        return math.log(self.p) - math.log(self.q)


def bsc_transmit(x: int, params: ChannelParams, rng: np.random.Generator) -> int:
    """Send one bit through BSC(p); consumes exactly one uniform draw from ``rng``."""
    if x not in (0, 1):
        raise ValueError(f"channel input must be a bit, got {x!r}")
    flip = rng.random() < params.p
    return x ^ 1 if flip else x


def bits_available(t: float, K: int, lam: float) -> int:
    """Number of message bits that have arrived by time ``t`` (bit i arrives at i/lam)."""
    if t < 0:
        raise ValueError("time must be non-negative")
    if math.isinf(lam):
        return K
    return min(K, math.floor(t * lam))


@dataclass(frozen=True)
class ArrivalSchedule:
    """Message bits arrive at ``lam`` bits/s, channel slots tick at ``mu`` symbols/s.

    Slot ``t`` happens at instant ``t / mu`` and may only use bits that arrived
    strictly before that instant. ``lam = inf`` means the whole message is
    available from the start (traditional, non-causal encoding).
    """

    lam: float
    mu: float

    def __post_init__(self):
        if not self.lam > 0 or not self.mu > 0 or math.isinf(self.mu):
            raise ValueError("lambda and mu must be positive (mu finite)")

    @property
    def gamma(self) -> float:
        return self.lam / self.mu

    def first_usable_slot(self, i: int) -> int:
        """Earliest slot that may carry bit ``i`` (1-indexed): smallest t with i/lam < t/mu."""
        if math.isinf(self.lam):
            return 1
        # exact rational comparison so float rates give a deterministic grid
        bound = Fraction(i) * Fraction(self.mu) / Fraction(self.lam)
        return math.floor(bound) + 1

    def usable_slots(self, K: int) -> list[int]:
        return [self.first_usable_slot(i) for i in range(1, K + 1)]

    def slot_time(self, slot: int) -> float:
        return slot / self.mu

    def full_arrival_time(self, K: int) -> float:
        return 0.0 if math.isinf(self.lam) else K / self.lam
