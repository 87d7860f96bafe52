"""Monte Carlo harness: flat SPM, SCE-SPM, SBC-SPM and bitwise repetition."""

from __future__ import annotations

import math
import os
from collections import deque
from concurrent.futures import ProcessPoolExecutor
from typing import Optional

import numpy as np

from .analysis import repetition_bit_target
from .channel import crossover_for_capacity
from .config import SimConfig, TrialResult
from .link import FLAT, IDLE_ACTION, REPEAT, SYSTEMATIC, Action, run_link, run_lockstep
from .sbc import SBCSession, SBCTransmitter
from .spm import Locator, decode_status, init_groups

JOBS_ENV = "SBCSPM_JOBS"


def trial_rng(seed: int, trial_index: int) -> np.random.Generator:
    """Independent stream per trial, fixed by ``(seed, trial_index)`` alone."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(trial_index,)))


# ---------------------------------------------------------------------------
# flat SPM, causal (SCE) or not

class FlatSession:
    """Systematic bits (on arrival when ``causal``), then SPM on the whole message."""

    def __init__(self, config: SimConfig, causal: bool):
        self.config = config
        self.params = config.params
        K = config.K
        self.usable = config.schedule.usable_slots(K) if causal else [1] * K
        self.received = np.zeros(K, dtype=np.uint8)
        self.groups = None
        self.next_bit = 0
        self.slot = 0

    def next_action(self) -> Action:
        self.slot += 1
        if self.groups is not None:
            return Action(FLAT)
        if self.usable[self.next_bit] <= self.slot:
            return Action(SYSTEMATIC, self.next_bit)
        return IDLE_ACTION

    def prepare(self, action):
        return self.groups.partition() if action.kind == FLAT else None

    def observe(self, action, part, y):
        if action.kind == FLAT:
            self.groups.update(part, y)
            return
        self.received[action.index] = y
        self.next_bit += 1
        if self.next_bit == self.config.K:
            self.groups = init_groups(self.config.K, self.params, self.received.copy())

    def decoded(self):
        return None if self.groups is None else decode_status(self.groups, self.config.epsilon)

    def signature(self):
        return (self.slot, self.next_bit, self.received.tobytes(),
                None if self.groups is None else self.groups.signature())


class FlatTransmitter:
    def __init__(self, theta, session: FlatSession):
        self.theta = np.asarray(theta, dtype=np.uint8)
        self.session = session
        self.loc: Optional[Locator] = None

    def encode(self, action, part):
        if action.kind == SYSTEMATIC:
            return int(self.theta[action.index])
        return self.loc.side(part)

    def after(self, action, part, x, y):
        if action.kind == FLAT:
            self.loc.advance(x, y)
        elif self.session.groups is not None and self.loc is None:
            self.loc = Locator.for_message(self.theta, self.session.received)


# ---------------------------------------------------------------------------
# bitwise repetition

class RepetitionSession:
    """Each arrived bit is repeated round-robin until its own posterior is safe."""

    def __init__(self, config: SimConfig):
        self.config = config
        K = config.K
        self.usable = config.schedule.usable_slots(K)
        self.target = repetition_bit_target(config.epsilon, K)
        self._log_r = config.params.log_ratio
        self.balance = [0] * K  # (#y=0) - (#y=1)
        self.queue: deque = deque()
        self.settled = 0
        self.next_arrival = 0
        self.slot = 0

    def bit_posterior(self, i: int) -> float:
        """Posterior of the currently favoured value of bit ``i``."""
        return 1.0 / (1.0 + math.exp(abs(self.balance[i]) * self._log_r))

    def next_action(self) -> Action:
        self.slot += 1
        K = self.config.K
        while self.next_arrival < K and self.usable[self.next_arrival] <= self.slot:
            self.queue.append(self.next_arrival)
            self.next_arrival += 1
        return Action(REPEAT, self.queue[0]) if self.queue else IDLE_ACTION

    def prepare(self, action):
        return None

    def observe(self, action, part, y):
        i = self.queue.popleft()
        self.balance[i] += 1 if y == 0 else -1
        if self.bit_posterior(i) >= 1.0 - self.target:
            self.settled += 1
        else:
            self.queue.append(i)

    def decoded(self):
        if self.settled < self.config.K:
            return None
        return (np.array(self.balance) < 0).astype(np.uint8)

    def signature(self):
        return (self.slot, tuple(self.balance), tuple(self.queue))


class RepetitionTransmitter:
    def __init__(self, theta, session=None):
        self.theta = np.asarray(theta, dtype=np.uint8)

    def encode(self, action, part):
        return int(self.theta[action.index])

    def after(self, action, part, x, y):
        pass


# ---------------------------------------------------------------------------
# scheme dispatch

def _make(config: SimConfig, theta, session=None):
    scheme = config.scheme
    if scheme == "sbc":
        session = session or SBCSession(config)
        return session, SBCTransmitter(theta, session)
    if scheme in ("spm", "sce"):
        session = session or FlatSession(config, causal=scheme == "sce")
        return session, FlatTransmitter(theta, session)
    session = session or RepetitionSession(config)
    return session, RepetitionTransmitter(theta, session)


def _result(config: SimConfig, theta, run) -> TrialResult:
    if config.scheme == "spm":
        # traditional: transmission starts once the whole message is in
        t_d = config.schedule.full_arrival_time(config.K) + run.last_slot / config.mu
    else:
        t_d = run.last_slot / config.mu
    success = run.decoded is not None and bool(np.array_equal(run.decoded, theta))
    return TrialResult(run.tau, t_d, success, run.decoded, run.last_slot)


def run_scheme(config: SimConfig, theta, rng) -> TrialResult:
    theta = np.asarray(theta, dtype=np.uint8)
    session, tx = _make(config, theta)
    return _result(config, theta, run_link(session, tx, config.params, rng))


def run_sce(config: SimConfig, theta, rng) -> TrialResult:
    return run_scheme(config.with_(scheme="sce"), theta, rng)


def run_repetition(config: SimConfig, theta, rng) -> TrialResult:
    return run_scheme(config.with_(scheme="repetition"), theta, rng)


def draw_message(config: SimConfig, rng) -> np.ndarray:
    return rng.integers(0, 2, config.K, dtype=np.uint8)


def run_trial(config: SimConfig, trial_index: int) -> TrialResult:
    rng = trial_rng(config.seed, trial_index)
    theta = draw_message(config, rng)
    return run_scheme(config, theta, rng)


def lockstep_trial(config: SimConfig, theta, rng, flip_at=None):
    """Run with separate transmitter and receiver states; returns (in_step, result)."""
    theta = np.asarray(theta, dtype=np.uint8)
    rx, _ = _make(config, theta)
    tx_session, tx = _make(config, theta)
    ok, run = run_lockstep(rx, tx_session, tx, config.params, rng, flip_at=flip_at)
    return ok, _result(config, theta, run)


def lockstep_audit(config: SimConfig, theta, rng, flip_at=None) -> bool:
    return lockstep_trial(config, theta, rng, flip_at)[0]


# ---------------------------------------------------------------------------
# aggregation

ROW_FIELDS = ("scheme", "K", "N", "p", "C", "lambda", "mu", "gamma", "epsilon", "trials",
              "mean_rate_EKtau", "rate_KEtau", "mean_Td_seconds", "stderr_Td", "fer", "mean_tau")


def _trial_stats(config: SimConfig, start: int, stop: int):
    out = []
    for i in range(start, stop):
        r = run_trial(config, i)
        out.append((r.tau, r.t_d, r.success))
    return out


def run_trials(config: SimConfig, jobs: Optional[int] = None) -> np.ndarray:
    """``(trials, 3)`` array of (tau, t_d, success) in trial-index order."""
    jobs = default_jobs() if jobs is None else jobs
    n = config.trials
    if jobs <= 1 or n < 2:
        rows = _trial_stats(config, 0, n)
    else:
        bounds = np.linspace(0, n, min(jobs * 4, n) + 1).astype(int)
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            chunks = pool.map(_trial_stats, [config] * (len(bounds) - 1), bounds[:-1], bounds[1:])
            rows = [r for chunk in chunks for r in chunk]
    return np.array(rows, dtype=float).reshape(-1, 3)


def default_jobs() -> int:
    try:
        return max(1, int(os.environ.get(JOBS_ENV, "1")))
    except ValueError:
        return 1


def aggregate(config: SimConfig, stats: np.ndarray) -> dict:
    tau, t_d, ok = stats[:, 0], stats[:, 1], stats[:, 2]
    n = len(tau)
    rate = config.K / tau
    return {
        "scheme": config.scheme,
        "K": config.K,
        "N": config.N,
        "p": config.p,
        "C": config.capacity,
        "lambda": config.lam,
        "mu": config.mu,
        "gamma": config.gamma,
        "epsilon": config.epsilon,
        "trials": n,
        "mean_rate_EKtau": float(rate.mean()),
        "rate_KEtau": float(config.K / tau.mean()),
        "mean_Td_seconds": float(t_d.mean()),
        "stderr_Td": float(t_d.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0,
        "fer": float(1.0 - ok.mean()),
        "mean_tau": float(tau.mean()),
        "stderr_rate": float(rate.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0,
    }


def simulate(config: SimConfig, jobs: Optional[int] = None) -> dict:
    return aggregate(config, run_trials(config, jobs))


def sweep(base: SimConfig, gammas, capacities, schemes=None, jobs: Optional[int] = None) -> list[dict]:
    """One row per (scheme, capacity, gamma), in that nesting order."""
    if not len(gammas) or not len(capacities):
        raise ValueError("gamma and capacity lists must be non-empty")
    rows = []
    for scheme in schemes or [base.scheme]:
        for C in capacities:
            p = crossover_for_capacity(C)
            for g in gammas:
                cfg = base.with_(scheme=scheme, p=p, lam=g * base.mu)
                rows.append(simulate(cfg, jobs))
    return rows
