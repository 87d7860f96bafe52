"""Closed-form bounds and the single-step weight-update analysis."""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .channel import ChannelParams


def _pq(params):
    if isinstance(params, ChannelParams):
        return params.p, params.q
    p = float(params)
    return p, 1.0 - p


def _check_p0(P0):
    P0 = np.asarray(P0, dtype=float)
    if np.any((P0 < 0.0) | (P0 > 1.0)):
        raise ValueError("P0 must lie in [0, 1]")
    return P0


class WeightDistribution(NamedTuple):
    """The four (value, probability) outcomes of the true message's update factor."""

    values: np.ndarray
    probs: np.ndarray

    def mean(self):
        return float(np.dot(self.values, self.probs))


def weight_distribution(P0: float, params) -> WeightDistribution:
    """Update factor of the true message when ``P(theta in S0) = P0``.

    Cases, in order: theta in S0 received right, theta in S0 received flipped,
    theta in S1 received flipped, theta in S1 received right.
    """
    p, q = _pq(params)
    P0 = float(_check_p0(P0))
    d0 = P0 * q + (1 - P0) * p  # P(y = 0)
    d1 = P0 * p + (1 - P0) * q  # P(y = 1)
    values = np.array([q / d0, p / d1, p / d0, q / d1])
    probs = np.array([P0 * q, P0 * p, (1 - P0) * p, (1 - P0) * q])
    return WeightDistribution(values, probs)


def expected_weight(P0, params):
    """Expected multiplicative gain of the true message's posterior in one step."""
    p, q = _pq(params)
    P0 = _check_p0(P0)
    d0 = P0 * q + (1 - P0) * p
    d1 = P0 * p + (1 - P0) * q
    out = (q * P0 * q / d0 + p * P0 * p / d1
           + p * (1 - P0) * p / d0 + q * (1 - P0) * q / d1)
    return out if out.ndim else float(out)


def _lin(P0, p, q):
    return P0 * (q - p) + p


def expected_weight_d1(P0, params):
    """First derivative in ``P0``.

    ``(P0 (q-p) - q)**2`` equals ``_lin(1 - P0)**2``; writing it that way makes
    the two terms bit-identical at ``P0 = 1/2``.
    """
    p, q = _pq(params)
    P0 = _check_p0(P0)
    c = p * q * (q - p)
    out = c / _lin(P0, p, q) ** 2 - c / _lin(1.0 - P0, p, q) ** 2
    return out if out.ndim else float(out)


def expected_weight_d2(P0, params):
    """Second derivative in ``P0``; negative for p in (0, 1/2)."""
    p, q = _pq(params)
    P0 = _check_p0(P0)
    c = 2 * p * q * (q - p) ** 2
    out = -c / _lin(P0, p, q) ** 3 + c / (P0 * (q - p) - q) ** 3
    return out if out.ndim else float(out)


def sce_bound(K, lam, mu, C):
    """Lower bound on E[T_d] for systematically causal encoding at capacity C."""
    return max(K / lam, K / mu) + (K / C - K) / mu


def traditional_bound(K, lam, mu, C):
    """Lower bound on E[T_d] when transmission waits for the full message."""
    return K / lam + K / (C * mu)


def arrival_time(K, lam):
    return K / lam


def repetition_bit_target(epsilon: float, K: int) -> float:
    """Per-bit error target whose K-fold product gives word error ``epsilon``."""
    if not 0.0 < epsilon < 1.0:
        raise ValueError("epsilon must lie in (0, 1)")
    if K < 1:
        raise ValueError("K must be at least 1")
    # -expm1(log1p(-eps)/K) == 1 - (1-eps)**(1/K) without cancellation
    return -np.expm1(np.log1p(-epsilon) / K)
