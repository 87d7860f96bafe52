"""Simulation configuration and per-trial results."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .channel import ArrivalSchedule, ChannelParams

SCHEMES = ("spm", "sce", "sbc", "repetition")
POLICIES = ("lowest", "round_robin", "recent")


def is_power_of_two(n: int) -> bool:
    return n >= 1 and n & (n - 1) == 0


@dataclass(frozen=True)
class SimConfig:
    """One simulated operating point.

    ``lam = inf`` gives the non-causal setting where the whole message is
    available before the first channel use.
    """

    K: int
    p: float
    lam: float = 1.0
    mu: float = 1.0
    epsilon: float = 1e-3
    N: int = 8
    trials: int = 100
    seed: int = 0
    scheme: str = "sbc"
    policy: str = "lowest"
    params: ChannelParams = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.K < 1:
            raise ValueError("K must be at least 1")
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError("epsilon must lie in (0, 1)")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; choose from {SCHEMES}")
        if self.policy not in POLICIES:
            raise ValueError(f"unknown policy {self.policy!r}; choose from {POLICIES}")
        if self.scheme == "sbc":
            if not is_power_of_two(self.N) or self.N < 2:
                raise ValueError(f"SBC needs N a power of two and at least 2, got {self.N}")
            if self.N > self.K:
                raise ValueError(f"N={self.N} exceeds K={self.K}")
        object.__setattr__(self, "params", ChannelParams(self.p))
        ArrivalSchedule(self.lam, self.mu)  # validates rates

    @classmethod
    def from_capacity(cls, K: int, C: float, **kw) -> "SimConfig":
        return cls(K=K, p=ChannelParams.from_capacity(C).p, **kw)

    @property
    def capacity(self) -> float:
        return self.params.capacity

    @property
    def gamma(self) -> float:
        return self.lam / self.mu

    @property
    def schedule(self) -> ArrivalSchedule:
        return ArrivalSchedule(self.lam, self.mu)

    def with_(self, **kw) -> "SimConfig":
        return replace(self, **kw)


@dataclass
class TrialResult:
    tau: int
    t_d: float
    success: bool
    decoded: Optional[np.ndarray]
    slots: int = 0

    @property
    def rate(self) -> float:
        return len(self.decoded) / self.tau if self.decoded is not None else math.nan
