"""Sub-block-combining SPM: causal four-phase encoding over a forest of product sets.

Phases:
  1. systematic bits are sent as they arrive;
  2. spare slots run SPM on a fully arrived sub-block;
  3. once every systematic bit is out, the sub-block lists are combined
     bottom-up into four top-level product-set trees (no channel use);
  4. posterior matching runs over the forest until the threshold is reached.

Posteriors inside the forest are kept in the log domain. A tree node's
per-message posterior is ``exp(log_mult) * left(x) * right(y)``. Nodes are
immutable once built; splitting returns new nodes that share untouched
children, so a lazily held multiplier never has to be pushed into shared
structure. The dynamic part of a top node's multiplier is an integer
mismatch key, exactly as in :mod:`sbcspm.spm`.
"""

from __future__ import annotations

import math
from bisect import insort
from dataclasses import dataclass, field
from operator import attrgetter
from typing import Optional

import numpy as np

from .config import SimConfig, TrialResult, is_power_of_two
from .link import BLOCK, FOREST, IDLE_ACTION, SYSTEMATIC, Action, run_link
from .spm import (
    GroupList,
    InvariantError,
    Locator,
    _logsumexp,
    error_pattern,
    init_groups,
    unrank_pattern,
)


def segment(K: int, N: int) -> list[int]:
    """Sub-block lengths: the first ``K mod N`` blocks get one extra bit."""
    if not is_power_of_two(N):
        raise ValueError(f"number of sub-blocks must be a power of two, got {N}")
    if N > K:
        raise ValueError(f"cannot cut {K} bits into {N} non-empty sub-blocks")
    base, extra = divmod(K, N)
    return [base + 1 if i < extra else base for i in range(N)]


@dataclass
class SplitStats:
    """Instrumentation for forest partitions."""

    descents: list = field(default_factory=list)  # node splits per boundary descent
    group_splits: int = 0
    partitions: int = 0
    _current: int = 0

    @property
    def max_per_descent(self) -> int:
        return max(self.descents, default=0)


# ---------------------------------------------------------------------------
# product-set building blocks

class LeafSet:
    """Groups of one sub-block's segments, each ``(weight, lo, hi, log_rho)``."""

    __slots__ = ("block", "groups", "count", "log_mass", "log_max")

    def __init__(self, block: int, groups):
        self.block = block
        self.groups = tuple(groups)
        self.count = sum(hi - lo for _, lo, hi, _ in self.groups)
        self.log_mass = _logsumexp(math.log(hi - lo) + lr for _, lo, hi, lr in self.groups)
        self.log_max = max(lr for *_, lr in self.groups)

    def contains(self, segs) -> bool:
        w, r = segs[self.block]
        return any(g[0] == w and g[1] <= r < g[2] for g in self.groups)

    def log_post(self, segs):
        w, r = segs[self.block]
        for gw, lo, hi, lr in self.groups:
            if gw == w and lo <= r < hi:
                return lr
        return None

    def _plan(self, frac):
        """Member-level cut nearest ``frac``: (group index, members moved, error)."""
        acc = 0.0
        last = len(self.groups) - 1
        for i, (w, lo, hi, lr) in enumerate(self.groups):
            n = hi - lo
            rho = math.exp(lr - self.log_mass)
            share = n * rho
            if acc + share < frac and i < last:
                acc += share
                continue
            m = max(0, min(n, math.ceil((frac - acc) / rho - 0.5)))
            if i == 0 and m == 0:
                m = 1
            if i == last and m == n:
                m = n - 1
            return i, m, abs(acc + m * rho - frac)
        raise InvariantError("leaf split ran past the end of the set")

    def cut_error(self, frac: float) -> float:
        if self.count < 2:
            return math.inf
        return self._plan(frac)[2]

    def split(self, frac: float, tol: float, stats: SplitStats):
        i, m, _ = self._plan(frac)
        w, lo, hi, lr = self.groups[i]
        first = list(self.groups[:i])
        second = list(self.groups[i + 1:])
        if m > 0:
            first.append((w, lo, lo + m, lr))
        if lo + m < hi:
            second.insert(0, (w, lo + m, hi, lr))
        if 0 < m < hi - lo:
            stats.group_splits += 1
        return LeafSet(self.block, first), LeafSet(self.block, second)

    def argmax(self, segs: dict):
        w, lo, _, _ = max(self.groups, key=lambda g: g[3])
        segs[self.block] = (w, lo)

    def materialized(self, extra: float) -> "LeafSet":
        return LeafSet(self.block, [(w, lo, hi, lr + extra) for w, lo, hi, lr in self.groups])

    def iter_messages(self):
        for w, lo, hi, lr in self.groups:
            for r in range(lo, hi):
                yield {self.block: (w, r)}, lr

    def signature(self):
        return (self.block, tuple((w, lo, hi, lr.hex()) for w, lo, hi, lr in self.groups))


class NodeSet:
    """Ordered collection of same-level tree nodes covering one half-span."""

    __slots__ = ("nodes", "count", "log_mass", "log_max")

    def __init__(self, nodes):
        self.nodes = tuple(nodes)
        self.count = sum(n.count for n in self.nodes)
        self.log_mass = _logsumexp(n.log_mass for n in self.nodes)
        self.log_max = max(n.log_max for n in self.nodes)

    def contains(self, segs) -> bool:
        return any(n.contains(segs) for n in self.nodes)

    def log_post(self, segs):
        for n in self.nodes:
            v = n.log_post(segs)
            if v is not None:
                return v
        return None

    def _shares(self):
        return [math.exp(n.log_mass - self.log_mass) for n in self.nodes]

    def _best_cut(self, frac, shares):
        """Best whole-element cut (1..n-1): (cut index, error)."""
        best, err = 0, math.inf
        acc = 0.0
        for c in range(1, len(shares)):
            acc += shares[c - 1]
            e = abs(acc - frac)
            if e < err:
                best, err = c, e
        return best, err

    def cut_error(self, frac: float) -> float:
        return self._best_cut(frac, self._shares())[1]

    def split(self, frac: float, tol: float, stats: SplitStats):
        shares = self._shares()
        cut, err = self._best_cut(frac, shares)
        if err > tol:
            acc = 0.0
            j = len(shares) - 1
            for i, s in enumerate(shares):
                if acc + s >= frac:
                    j = i
                    break
                acc += s
            node = self.nodes[j]
            inner = (frac - acc) / shares[j]
            if node.count >= 2 and 0.0 < inner < 1.0:
                a, b = node.split(inner, tol / shares[j], stats)
                return (NodeSet(self.nodes[:j] + (a,)), NodeSet((b,) + self.nodes[j + 1:]))
        if cut == 0:
            raise InvariantError("node set cannot be split")
        return NodeSet(self.nodes[:cut]), NodeSet(self.nodes[cut:])

    def argmax(self, segs: dict):
        max(self.nodes, key=attrgetter("log_max")).argmax(segs)

    def materialized(self, extra: float) -> "NodeSet":
        return NodeSet([n.materialized(extra) for n in self.nodes])

    def iter_messages(self):
        for n in self.nodes:
            yield from n.iter_messages()

    def signature(self):
        return tuple(n.signature() for n in self.nodes)


def _branch_error(branch, frac: float) -> float:
    """Cut error without descending; a splittable branch with no direct cut scores 2."""
    if branch.count < 2:
        return math.inf
    err = branch.cut_error(frac)
    return 2.0 if err == math.inf else err


class TreeNode:
    """Product set ``left x right`` with a lazily held multiplier."""

    __slots__ = ("level", "log_mult", "left", "right", "count", "log_mass", "log_max")

    def __init__(self, level: int, log_mult: float, left, right):
        self.level = level
        self.log_mult = log_mult
        self.left = left
        self.right = right
        self.count = left.count * right.count
        self.log_mass = log_mult + left.log_mass + right.log_mass
        self.log_max = log_mult + left.log_max + right.log_max

    def contains(self, segs) -> bool:
        return self.left.contains(segs) and self.right.contains(segs)

    def log_post(self, segs):
        a = self.left.log_post(segs)
        if a is None:
            return None
        b = self.right.log_post(segs)
        if b is None:
            return None
        return self.log_mult + a + b

    def split(self, frac: float, tol: float, stats: SplitStats):
        """Two nodes partitioning this one, the first holding ~``frac`` of its mass.

        Only one branch is cut; ties go to the left branch.
        """
        if not 0.0 < frac < 1.0:
            raise ValueError(f"split fraction must lie in (0, 1), got {frac}")
        stats._current += 1
        err_l = _branch_error(self.left, frac)
        err_r = _branch_error(self.right, frac)
        if err_l == math.inf and err_r == math.inf:
            raise InvariantError("cannot split a single-message node")
        if err_l <= err_r:
            a, b = self.left.split(frac, tol, stats)
            return (TreeNode(self.level, self.log_mult, a, self.right),
                    TreeNode(self.level, self.log_mult, b, self.right))
        a, b = self.right.split(frac, tol, stats)
        return (TreeNode(self.level, self.log_mult, self.left, a),
                TreeNode(self.level, self.log_mult, self.left, b))

    def argmax(self, segs: dict):
        self.left.argmax(segs)
        self.right.argmax(segs)

    def materialized(self, extra: float = 0.0) -> "TreeNode":
        """Equivalent node with every multiplier pushed down to the leaf groups."""
        return TreeNode(self.level, 0.0, self.left.materialized(self.log_mult + extra),
                        self.right.materialized(0.0))

    def iter_messages(self):
        for ls, lp in self.left.iter_messages():
            for rs, rp in self.right.iter_messages():
                yield {**ls, **rs}, self.log_mult + lp + rp

    def signature(self):
        return (self.level, self.log_mult.hex(), self.left.signature(), self.right.signature())


# ---------------------------------------------------------------------------
# combining

def build_level1(a: GroupList, b: GroupList, block_a: int, block_b: int) -> list[TreeNode]:
    """Four level-1 nodes: balanced halves of block ``a`` crossed with those of ``b``."""
    pa, pb = a.partition(), b.partition()
    la = [LeafSet(block_a, pa.leaf_groups(s)) for s in (0, 1)]
    lb = [LeafSet(block_b, pb.leaf_groups(s)) for s in (0, 1)]
    return [TreeNode(1, 0.0, x, z) for x in la for z in lb]


def pair_by_mass(quad) -> tuple[list, list]:
    """Split four nodes into {heaviest, lightest} and {2nd, 3rd}."""
    s = sorted(quad, key=lambda n: -n.log_mass)
    return [s[0], s[3]], [s[1], s[2]]


def combine_level(a, b) -> list[TreeNode]:
    """Four next-level nodes from the quads covering two adjacent half-spans."""
    level = a[0].level + 1
    pa = [NodeSet(p) for p in pair_by_mass(a)]
    pb = [NodeSet(p) for p in pair_by_mass(b)]
    return [TreeNode(level, 0.0, x, z) for x in pa for z in pb]


def combine_all(lists) -> "Forest":
    """Bottom-up combination of N sub-block lists into the four-tree forest."""
    N = len(lists)
    if N < 2 or not is_power_of_two(N):
        raise ValueError("need a power-of-two number (>= 2) of sub-blocks")
    params = lists[0].params
    quads = [build_level1(lists[i], lists[i + 1], i, i + 1) for i in range(0, N, 2)]
    while len(quads) > 1:
        quads = [combine_level(quads[i], quads[i + 1]) for i in range(0, len(quads), 2)]
    return Forest(quads[0], params)


# ---------------------------------------------------------------------------
# the forest

class ForestEntry:
    __slots__ = ("node", "key", "sort_key")

    def __init__(self, node: TreeNode, key: int, lr: float):
        self.node = node
        self.key = key
        self.sort_key = -(node.log_mass + key * lr)


_by_sort_key = attrgetter("sort_key")


class Forest:
    """List of top-level product-set nodes, sorted by descending mass.

    Masses are ``exp(node.log_mass + key * log(p/q) - logz)``.
    """

    RECOMPUTE_EVERY = 64

    def __init__(self, tops, params):
        self.params = params
        self.time = 0
        self._lr = params.log_ratio
        self.entries = sorted((ForestEntry(n, 0, self._lr) for n in tops), key=_by_sort_key)
        self._recompute_logz()

    def _recompute_logz(self):
        self._logz = _logsumexp(-e.sort_key for e in self.entries)

    def log_weight(self, entry: ForestEntry) -> float:
        """Log of the entry's multiplier relative to its static node posterior."""
        return entry.key * self._lr - self._logz

    def mass(self, entry: ForestEntry) -> float:
        return math.exp(-entry.sort_key - self._logz)

    @property
    def total_mass(self) -> float:
        return math.fsum(self.mass(e) for e in self.entries)

    @property
    def total_count(self) -> int:
        return sum(e.node.count for e in self.entries)

    @property
    def max_rho(self) -> float:
        return max(math.exp(e.node.log_max + self.log_weight(e)) for e in self.entries)

    def posterior_of(self, segs) -> float:
        for e in self.entries:
            lp = e.node.log_post(segs)
            if lp is not None:
                return math.exp(lp + self.log_weight(e))
        raise InvariantError("message not covered by any top node")

    def iter_messages(self):
        """Yield ``(segs, posterior)`` for every message; for small test sizes only."""
        for e in self.entries:
            off = self.log_weight(e)
            for segs, lp in e.node.iter_messages():
                yield segs, math.exp(lp + off)

    def materialized(self) -> "Forest":
        """Equivalent forest with every multiplier pushed down to the leaves."""
        f = Forest.__new__(Forest)
        f.params, f.time, f._lr = self.params, self.time, self._lr
        f.entries = [ForestEntry(e.node.materialized(self.log_weight(e)), 0, self._lr)
                     for e in self.entries]
        f.entries.sort(key=_by_sort_key)
        f._logz = 0.0
        return f

    def signature(self):
        return (self.time, self._logz.hex(),
                tuple((e.key, e.node.signature()) for e in self.entries))

    def partition(self, stats: Optional[SplitStats] = None) -> "ForestPartition":
        """Greedy by node mass; the boundary node is split until balanced to granularity."""
        if stats is None:
            stats = SplitStats()
        stats.partitions += 1
        entries = self.entries
        last = len(entries) - 1
        acc = 0.0
        for j, e in enumerate(entries):
            m = self.mass(e)
            if acc + m < 0.5 and j < last:
                acc += m
                continue
            inc_err = acc + m - 0.5
            exc_err = 0.5 - acc
            tol = 0.5 * math.exp(e.node.log_max + self.log_weight(e))
            if min(inc_err, exc_err) > tol and e.node.count >= 2:
                stats._current = 0
                a, b = e.node.split(exc_err / m, tol / m, stats)
                stats.descents.append(stats._current)
                ea = ForestEntry(a, e.key, self._lr)
                eb = ForestEntry(b, e.key, self._lr)
                return ForestPartition(self, entries[:j] + [ea], j, acc + self.mass(ea), (e, ea, eb))
            include = inc_err < exc_err
            if j == 0:
                include = True
            elif j == last and include:
                include = False
            cut = j + 1 if include else j
            return ForestPartition(self, entries[:cut], cut, acc + (m if include else 0.0), None)
        raise InvariantError("forest partition ran past the end of the list")

    def update(self, part: "ForestPartition", y: int) -> "Forest":
        if part.forest is not self:
            raise ValueError("partition was built from a different forest")
        shift = -1 if y == 0 else 1
        lr = self._lr
        if part.split is None:
            rest = self.entries[part.cut:]
        else:
            rest = self.entries[part.cut + 1:]
            insort(rest, part.split[2], key=_by_sort_key)
        for e in part.s0:
            e.key += shift
            e.sort_key = -(e.node.log_mass + e.key * lr)
            insort(rest, e, key=_by_sort_key)
        self.entries = rest
        p0 = part.p0
        self.time += 1
        if self.time % self.RECOMPUTE_EVERY == 0:
            self._recompute_logz()
        else:
            self._logz += math.log((1.0 - p0) + p0 * math.exp(shift * lr))
        return self

    def decoded(self, epsilon: float):
        """Segments of the MAP message once its posterior reaches ``1 - epsilon``.

        A message above 1/2 lives in the heaviest entry, so only that one is checked.
        """
        e = self.entries[0]
        if e.node.log_max + self.log_weight(e) < math.log1p(-epsilon):
            return None
        segs = {}
        e.node.argmax(segs)
        return segs


class ForestPartition:
    """``S0`` = ``s0`` entries; everything else is ``S1``. Valid until the next update."""

    __slots__ = ("forest", "s0", "cut", "p0", "split")

    def __init__(self, forest, s0, cut, p0, split):
        self.forest = forest
        self.s0 = s0
        self.cut = cut
        self.p0 = p0
        self.split = split  # (replaced entry, S0 half, S1 half) or None

    @property
    def s1(self) -> list[ForestEntry]:
        entries = self.forest.entries
        if self.split is None:
            return entries[self.cut:]
        return [self.split[2]] + entries[self.cut + 1:]

    def side_of(self, entry: ForestEntry) -> int:
        return 0 if any(e is entry for e in self.s0) else 1


def forest_partition(forest: Forest, stats: Optional[SplitStats] = None) -> ForestPartition:
    return forest.partition(stats)


def forest_update(part: ForestPartition, y: int, params=None) -> Forest:
    return part.forest.update(part, y)


def split_node(node: TreeNode, target: float, stats: Optional[SplitStats] = None, tol: float = 0.0):
    """Split ``node`` so the first result carries about ``target`` probability mass."""
    mass = math.exp(node.log_mass)
    if not 0.0 < target < mass:
        raise ValueError(f"target {target} outside (0, {mass})")
    return node.split(target / mass, tol / mass, stats or SplitStats())


class ForestLocator:
    """Transmitter-side position of the true message in the forest."""

    __slots__ = ("segs", "entry")

    def __init__(self, segs, forest: Forest):
        self.segs = segs
        self.entry = next(e for e in forest.entries if e.node.contains(segs))

    def side(self, part: ForestPartition) -> int:
        if part.split is not None and self.entry is part.split[0]:
            self.entry = part.split[1] if part.split[1].node.contains(self.segs) else part.split[2]
        return part.side_of(self.entry)


# ---------------------------------------------------------------------------
# the causal session

class SBCSession:
    """Decoder state of SBC-SPM, advanced one channel slot at a time."""

    def __init__(self, config: SimConfig):
        self.config = config
        self.params = config.params
        self.epsilon = config.epsilon
        self.lengths = segment(config.K, config.N)
        self.offsets = np.concatenate([[0], np.cumsum(self.lengths)]).astype(int)
        self.block_of_bit = np.repeat(np.arange(config.N), self.lengths)
        self.usable = config.schedule.usable_slots(config.K)
        self.received = np.zeros(config.K, dtype=np.uint8)
        self.lists: list[Optional[GroupList]] = [None] * config.N
        self.completed: list[int] = []  # block indices in completion order
        self.forest: Optional[Forest] = None
        self.stats = SplitStats()
        self.next_bit = 0
        self.slot = 0
        self._rr = 0

    # scheduling
    def next_action(self) -> Action:
        self.slot += 1
        return self.schedule(self.slot)

    def schedule(self, slot: int) -> Action:
        if self.forest is not None:
            return Action(FOREST)
        if self.next_bit < self.config.K and self.usable[self.next_bit] <= slot:
            return Action(SYSTEMATIC, self.next_bit)
        if not self.completed:
            return IDLE_ACTION
        return Action(BLOCK, self._pick_block())

    def _pick_block(self) -> int:
        policy = self.config.policy
        done = self.completed
        if policy == "recent":
            return done[-1]
        if policy == "round_robin":
            ordered = sorted(done)
            i = ordered[self._rr % len(ordered)]
            self._rr += 1
            return i
        # lowest max posterior, preferring blocks still below 1/2
        tops = [(self.lists[i].max_rho, i) for i in sorted(done)]
        below = [t for t in tops if t[0] < 0.5]
        return min(below or tops)[1]

    def prepare(self, action: Action):
        if action.kind == BLOCK:
            return self.lists[action.index].partition()
        if action.kind == FOREST:
            return self.forest.partition(self.stats)
        return None

    def observe(self, action: Action, part, y: int):
        if action.kind == SYSTEMATIC:
            i = action.index
            self.received[i] = y
            self.next_bit += 1
            b = self.block_of_bit[i]
            if i + 1 == self.offsets[b + 1]:
                seg = self.received[self.offsets[b]:self.offsets[b + 1]].copy()
                self.lists[b] = init_groups(self.lengths[b], self.params, seg)
                self.completed.append(int(b))
            if self.next_bit == self.config.K:
                self.forest = combine_all(self.lists)
        elif action.kind == BLOCK:
            self.lists[action.index].update(part, y)
        else:
            self.forest.update(part, y)

    def segment_bits(self, b: int, w: int, rank: int) -> np.ndarray:
        seg = self.received[self.offsets[b]:self.offsets[b + 1]]
        return np.bitwise_xor(seg, unrank_pattern(self.lengths[b], w, rank))

    def message_from_segs(self, segs) -> np.ndarray:
        return np.concatenate([self.segment_bits(b, *segs[b]) for b in range(self.config.N)])

    def decoded(self):
        if self.forest is None:
            return None
        segs = self.forest.decoded(self.epsilon)
        return None if segs is None else self.message_from_segs(segs)

    def signature(self):
        return (self.slot, self.next_bit, self.received.tobytes(),
                tuple(None if gl is None else gl.signature() for gl in self.lists),
                None if self.forest is None else self.forest.signature())


def schedule_symbol(session: SBCSession, slot: int) -> Action:
    return session.schedule(slot)


class SBCTransmitter:
    def __init__(self, theta, session: SBCSession):
        self.theta = np.asarray(theta, dtype=np.uint8)
        self.session = session
        self.block_locs: list[Optional[Locator]] = [None] * session.config.N
        self.forest_loc: Optional[ForestLocator] = None

    def segs(self):
        s = self.session
        return {b: error_pattern(self.theta[s.offsets[b]:s.offsets[b + 1]],
                                 s.received[s.offsets[b]:s.offsets[b + 1]])
                for b in range(s.config.N)}

    def encode(self, action: Action, part) -> int:
        if action.kind == SYSTEMATIC:
            return int(self.theta[action.index])
        if action.kind == BLOCK:
            return self.block_locs[action.index].side(part)
        return self.forest_loc.side(part)

    def after(self, action: Action, part, x: int, y: int):
        s = self.session
        if action.kind == SYSTEMATIC:
            b = s.block_of_bit[action.index]
            if s.lists[b] is not None and self.block_locs[b] is None:
                lo, hi = s.offsets[b], s.offsets[b + 1]
                self.block_locs[b] = Locator.for_message(self.theta[lo:hi], s.received[lo:hi])
            if s.forest is not None and self.forest_loc is None:
                self.forest_loc = ForestLocator(self.segs(), s.forest)
        elif action.kind == BLOCK:
            self.block_locs[action.index].advance(x, y)


def run_sbc_spm(config: SimConfig, theta, rng: np.random.Generator,
                session: Optional[SBCSession] = None) -> TrialResult:
    """One SBC-SPM message transfer; ``T_d`` is the final slot's instant."""
    session = session or SBCSession(config)
    tx = SBCTransmitter(theta, session)
    run = run_link(session, tx, config.params, rng)
    return TrialResult(run.tau, run.last_slot / config.mu,
                       bool(np.array_equal(run.decoded, tx.theta)), run.decoded, run.last_slot)
