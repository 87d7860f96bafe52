"""Systematic posterior matching (SPM) over Hamming-weight groups.

Candidate messages are indexed by their error pattern ``e = theta XOR y_sys``
relative to the received systematic word. A :class:`Group` is a contiguous
rank range of weight-``w`` patterns sharing one posterior.

Every posterior has the form ``r**d / Z`` with ``r = p/q`` and ``d`` an integer
mismatch count, so :class:`GroupList` stores groups in buckets keyed by ``d``
(shifted by a common offset). A balanced partition always puts a prefix of the
rho-sorted list into ``S0``; an update therefore only re-keys that prefix and
rescales the normalizer in O(1).
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass
from heapq import merge
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .channel import ChannelParams, bsc_transmit


class InvariantError(RuntimeError):
    """Raised when an internal consistency check fails."""


# ---------------------------------------------------------------------------
# combinatorial number system

def rank_pattern(e: Sequence[int]) -> int:
    """Lexicographic rank (MSB first) of ``e`` among vectors of equal length and weight."""
    bits = [int(b) for b in e]
    K = len(bits)
    k = sum(bits)
    rank = 0
    for i, b in enumerate(bits):
        if k == 0:
            break
        if b:
            # every vector with a 0 here (and k ones left) sorts before e
            rank += math.comb(K - i - 1, k)
            k -= 1
    return rank


def unrank_pattern(K: int, weight: int, r: int) -> np.ndarray:
    """Inverse of :func:`rank_pattern`."""
    if not 0 <= weight <= K:
        raise ValueError(f"weight {weight} outside [0, {K}]")
    total = math.comb(K, weight)
    if not 0 <= r < total:
        raise ValueError(f"rank {r} outside [0, {total})")
    out = np.zeros(K, dtype=np.uint8)
    k = weight
    for i in range(K):
        if k == 0:
            break
        c = math.comb(K - i - 1, k)
        if r >= c:
            out[i] = 1
            r -= c
            k -= 1
    return out


def error_pattern(theta, received) -> tuple[int, int]:
    """(weight, rank) of ``theta XOR received``."""
    e = np.bitwise_xor(np.asarray(theta, dtype=np.uint8), np.asarray(received, dtype=np.uint8))
    return int(e.sum()), rank_pattern(e)


# ---------------------------------------------------------------------------
# groups

@dataclass(frozen=True)
class Group:
    weight: int
    lo: int
    hi: int
    rho: float

    @property
    def count(self) -> int:
        return self.hi - self.lo

    @property
    def mass(self) -> float:
        return self.count * self.rho


def _merge_ranges(a, b):
    """Merge two sorted lists of ``(weight, lo, hi)`` and coalesce abutting siblings."""
    out = []
    for item in merge(a, b):
        if out:
            w, lo, hi = out[-1]
            if w == item[0] and hi == item[1]:
                out[-1] = (w, lo, item[2])
                continue
        out.append(item)
    return out


def _logsumexp(values) -> float:
    values = list(values)
    m = max(values)
    if m == -math.inf:
        return m
    return m + math.log(math.fsum(math.exp(v - m) for v in values))


class GroupList:
    """Sorted group list with unit total mass: the SPM decoder state.

    Mutable; :meth:`partition` describes a split without changing the list and
    :meth:`update` applies the channel output for that partition in place.
    """

    RECOMPUTE_EVERY = 64

    def __init__(self, K: int, params: ChannelParams, received=None):
        if K < 1:
            raise ValueError("K must be at least 1")
        self.K = K
        self.params = params
        self.received = None if received is None else np.asarray(received, dtype=np.uint8)
        self.time = 0
        self._lr = params.log_ratio
        self._buckets: dict[int, list[tuple[int, int, int]]] = {}
        self._counts: dict[int, int] = {}
        self._logcounts: dict[int, float] = {}
        self._keys: list[int] = []
        self._logz = 0.0

    # -- construction -----------------------------------------------------
    @classmethod
    def initial(cls, K: int, params: ChannelParams, received=None) -> "GroupList":
        gl = cls(K, params, received)
        for w in range(K + 1):
            n = math.comb(K, w)
            gl._buckets[w] = [(w, 0, n)]
            gl._counts[w] = n
            gl._logcounts[w] = math.log(n)
        gl._keys = list(range(K + 1))
        gl._recompute_logz()
        return gl

    @classmethod
    def from_buckets(cls, K: int, params: ChannelParams, buckets, received=None) -> "GroupList":
        """List from ``{key: [(weight, lo, hi), ...]}``; rho is proportional to r**key."""
        gl = cls(K, params, received)
        for k in sorted(buckets):
            ranges = sorted(buckets[k])
            if not ranges:
                continue
            gl._buckets[k] = ranges
            gl._counts[k] = sum(hi - lo for _, lo, hi in ranges)
            gl._logcounts[k] = math.log(gl._counts[k])
        gl._keys = sorted(gl._buckets)
        gl._recompute_logz()
        return gl

    def _recompute_logz(self):
        lr = self._lr
        self._logz = _logsumexp(self._logcounts[k] + k * lr for k in self._keys)

    # -- views ------------------------------------------------------------
    def log_rho(self, key: int) -> float:
        return key * self._lr - self._logz

    @property
    def groups(self) -> list[Group]:
        """All groups, sorted by descending rho then (weight, lo)."""
        out = []
        for k in self._keys:
            rho = math.exp(self.log_rho(k))
            out.extend(Group(w, lo, hi, rho) for w, lo, hi in self._buckets[k])
        return out

    @property
    def n_groups(self) -> int:
        return sum(len(b) for b in self._buckets.values())

    @property
    def total_count(self) -> int:
        return sum(self._counts.values())

    @property
    def total_mass(self) -> float:
        return math.fsum(math.exp(self._logcounts[k] + self.log_rho(k)) for k in self._keys)

    @property
    def max_rho(self) -> float:
        return math.exp(self.log_rho(self._keys[0]))

    def key_of(self, weight: int, rank: int) -> int:
        """Bucket key of the group holding pattern (weight, rank); linear scan."""
        for k in self._keys:
            bucket = self._buckets[k]
            i = bisect_right(bucket, (weight, rank, math.inf)) - 1
            if i >= 0:
                w, lo, hi = bucket[i]
                if w == weight and lo <= rank < hi:
                    return k
        raise InvariantError(f"pattern (weight={weight}, rank={rank}) not covered by any group")

    def rho_of(self, weight: int, rank: int) -> float:
        return math.exp(self.log_rho(self.key_of(weight, rank)))

    def leaf_groups(self, keys=None) -> list[tuple[int, int, int, float]]:
        """``(weight, lo, hi, log_rho)`` tuples in partition order."""
        out = []
        for k in self._keys if keys is None else keys:
            lr = self.log_rho(k)
            out.extend((w, lo, hi, lr) for w, lo, hi in self._buckets[k])
        return out

    def signature(self):
        """Exact state snapshot used to compare transmitter and receiver copies."""
        return (self.time, self._logz.hex(), tuple((k, tuple(self._buckets[k])) for k in self._keys))

    # -- algorithm steps --------------------------------------------------
    def partition(self) -> "Partition":
        """Greedy balanced bipartition: a rho-sorted prefix of mass ~1/2 forms ``S0``."""
        if not self._keys:
            raise ValueError("cannot partition an empty group list")
        acc = 0.0
        logz, lr = self._logz, self._lr
        last_b = len(self._keys) - 1
        for bi, k in enumerate(self._keys):
            log_rho = k * lr - logz
            mass = math.exp(self._logcounts[k] + log_rho)
            if acc + mass < 0.5 and bi < last_b:
                acc += mass
                continue
            rho = math.exp(log_rho)
            bucket = self._buckets[k]
            last_g = len(bucket) - 1
            for gi, (w, lo, hi) in enumerate(bucket):
                n = hi - lo
                gmass = n * rho
                if acc + gmass < 0.5 and not (bi == last_b and gi == last_g):
                    acc += gmass
                    continue
                # round half down to the member count bringing the mass nearest 1/2
                m = max(0, min(n, math.ceil((0.5 - acc) / rho - 0.5)))
                if bi == 0 and gi == 0 and m == 0:
                    m = 1
                if bi == last_b and gi == last_g and m == n:
                    m = n - 1
                acc += m * rho
                return Partition(self, bi, k, gi, m, acc)
        raise InvariantError("partition walk ran past the end of the list")

    def update(self, part: "Partition", y: int) -> "GroupList":
        """Bayes update for received symbol ``y``; merges, re-sorts and renormalizes."""
        if part.source is not self:
            raise ValueError("partition was built from a different group list")
        shift = -1 if y == 0 else 1
        keys = self._keys
        bi, kb, gi, m = part.bucket_index, part.key, part.group_index, part.m
        moved: dict[int, list] = {}
        moved_counts: dict[int, int] = {}
        for k in keys[:bi]:
            moved[k + shift] = self._buckets.pop(k)
            moved_counts[k + shift] = self._counts.pop(k)
            del self._logcounts[k]

        bucket = self._buckets[kb]
        head = bucket[:gi]
        w, lo, hi = bucket[gi]
        if m > 0:
            head.append((w, lo, lo + m))
        tail = bucket[gi + 1:]
        if lo + m < hi:
            tail.insert(0, (w, lo + m, hi))
        rest = keys[bi:]
        if head:
            head_count = sum(h - l for _, l, h in head)
            moved[kb + shift] = head
            moved_counts[kb + shift] = head_count
            if tail:
                self._buckets[kb] = tail
                self._counts[kb] -= head_count
                self._logcounts[kb] = math.log(self._counts[kb])
            else:
                del self._buckets[kb], self._counts[kb], self._logcounts[kb]
                rest = rest[1:]

        new_keys = []
        for nk, pieces in moved.items():
            if nk in self._buckets:
                self._buckets[nk] = _merge_ranges(self._buckets[nk], pieces)
                self._counts[nk] += moved_counts[nk]
            else:
                self._buckets[nk] = pieces
                self._counts[nk] = moved_counts[nk]
                new_keys.append(nk)
            self._logcounts[nk] = math.log(self._counts[nk])
        self._keys = sorted(new_keys + rest) if new_keys else rest

        p0 = part.p0
        self.time += 1
        if self.time % self.RECOMPUTE_EVERY == 0:
            self._recompute_logz()
        else:
            self._logz += math.log((1.0 - p0) + p0 * math.exp(shift * self._lr))
        return self

    def decoded(self, epsilon: float):
        """``(weight, rank)`` of the MAP pattern once its posterior reaches ``1 - epsilon``."""
        k0 = self._keys[0]
        if self.log_rho(k0) < math.log1p(-epsilon):
            return None
        w, lo, _ = self._buckets[k0][0]
        return w, lo


class Partition:
    """Split of a :class:`GroupList` into ``S0`` (a rho-sorted prefix) and ``S1``.

    The boundary group at ``(bucket_index, group_index)`` contributes its first
    ``m`` members to ``S0``. Valid until the source list is updated.
    """

    __slots__ = ("source", "bucket_index", "key", "group_index", "m", "p0")

    def __init__(self, source, bucket_index, key, group_index, m, p0):
        self.source = source
        self.bucket_index = bucket_index
        self.key = key
        self.group_index = group_index
        self.m = m
        self.p0 = p0

    def side(self, weight: int, rank: int, key: int) -> int:
        """0 if the pattern lies in ``S0``, 1 otherwise."""
        if key != self.key:
            return 0 if key < self.key else 1
        bucket = self.source._buckets[key]
        i = bisect_right(bucket, (weight, rank, math.inf)) - 1
        if i < self.group_index:
            return 0
        if i > self.group_index:
            return 1
        return 0 if rank < bucket[i][1] + self.m else 1

    def _split_tuples(self):
        gl = self.source
        s0, s1 = [], []
        for bi, k in enumerate(gl._keys):
            log_rho = gl.log_rho(k)
            for gi, (w, lo, hi) in enumerate(gl._buckets[k]):
                if bi < self.bucket_index or (bi == self.bucket_index and gi < self.group_index):
                    s0.append((w, lo, hi, log_rho))
                elif bi == self.bucket_index and gi == self.group_index:
                    if self.m > 0:
                        s0.append((w, lo, lo + self.m, log_rho))
                    if lo + self.m < hi:
                        s1.append((w, lo + self.m, hi, log_rho))
                else:
                    s1.append((w, lo, hi, log_rho))
        return s0, s1

    def leaf_groups(self, which: int) -> list[tuple[int, int, int, float]]:
        """``(weight, lo, hi, log_rho)`` of one side, in partition order."""
        return self._split_tuples()[which]

    @property
    def s0(self) -> list[Group]:
        return [Group(w, lo, hi, math.exp(lr)) for w, lo, hi, lr in self.leaf_groups(0)]

    @property
    def s1(self) -> list[Group]:
        return [Group(w, lo, hi, math.exp(lr)) for w, lo, hi, lr in self.leaf_groups(1)]


class Locator:
    """Transmitter-side position of the true message inside a :class:`GroupList`."""

    __slots__ = ("weight", "rank", "key")

    def __init__(self, weight: int, rank: int, key: Optional[int] = None):
        self.weight = weight
        self.rank = rank
        self.key = weight if key is None else key

    @classmethod
    def for_message(cls, theta, received) -> "Locator":
        return cls(*error_pattern(theta, received))

    def side(self, part: Partition) -> int:
        return part.side(self.weight, self.rank, self.key)

    def advance(self, side: int, y: int):
        # S0 is the re-keyed prefix: it moves toward likelier keys when y == 0
        if side == 0:
            self.key += -1 if y == 0 else 1


# ---------------------------------------------------------------------------
# functional surface

def init_groups(K: int, params: ChannelParams, received=None) -> GroupList:
    """K+1 weight groups with ``rho_i = q**(K-i) * p**i``."""
    return GroupList.initial(K, params, received)


def partition(groups: GroupList) -> Partition:
    return groups.partition()


def update(part: Partition, y: int, params: Optional[ChannelParams] = None) -> GroupList:
    return part.source.update(part, y)


def locate(theta, received_systematic, part: Partition) -> int:
    """Which set (0 or 1) holds ``theta`` under ``part``."""
    w, r = error_pattern(theta, received_systematic)
    return part.side(w, r, part.source.key_of(w, r))


def message_from_pattern(received, weight: int, rank: int) -> np.ndarray:
    received = np.asarray(received, dtype=np.uint8)
    return np.bitwise_xor(received, unrank_pattern(len(received), weight, rank))


def decode_status(groups: GroupList, epsilon: float) -> Optional[np.ndarray]:
    """The decoded message once the top posterior reaches ``1 - epsilon``, else None."""
    hit = groups.decoded(epsilon)
    if hit is None:
        return None
    if groups.received is None:
        return unrank_pattern(groups.K, *hit)
    return message_from_pattern(groups.received, *hit)


class SPMRun(NamedTuple):
    tau: int
    decoded: np.ndarray
    transcript: np.ndarray  # (tau, 2) array of (x, y)


def run_spm(K: int, params: ChannelParams, epsilon: float, theta, rng: np.random.Generator) -> SPMRun:
    """Non-causal SPM: K systematic symbols, then posterior matching to threshold."""
    theta = np.asarray(theta, dtype=np.uint8)
    xs, ys = [], []
    for b in theta:
        xs.append(int(b))
        ys.append(bsc_transmit(int(b), params, rng))
    received = np.array(ys, dtype=np.uint8)
    groups = init_groups(K, params, received)
    loc = Locator.for_message(theta, received)
    while (decoded := decode_status(groups, epsilon)) is None:
        part = groups.partition()
        x = loc.side(part)
        y = bsc_transmit(x, params, rng)
        loc.advance(x, y)
        groups.update(part, y)
        xs.append(x)
        ys.append(y)
    return SPMRun(len(xs), decoded, np.array([xs, ys], dtype=np.uint8).T)
