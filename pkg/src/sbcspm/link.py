"""Slot-by-slot driver shared by all schemes.

A *session* is the decoder state that transmitter and receiver both hold
(noiseless feedback keeps the two copies identical). It exposes

    next_action() -> Action      advance one channel slot and pick what to send
    prepare(action) -> part      partition for PM actions, else None
    observe(action, part, y)     fold in the received symbol
    decoded() -> message | None
    signature()                  exact state snapshot

A *transmitter* additionally knows the message and maps ``(action, part)`` to
a channel input via ``encode``; ``after`` keeps its locators in step.
"""

from __future__ import annotations

from typing import NamedTuple

from .channel import bsc_transmit
from .spm import InvariantError

IDLE = "idle"
SYSTEMATIC = "systematic"
BLOCK = "block"
FOREST = "forest"
FLAT = "flat"
REPEAT = "repeat"


class Action(NamedTuple):
    kind: str
    index: int = -1


IDLE_ACTION = Action(IDLE)

MAX_SLOTS = 10_000_000


class LinkRun(NamedTuple):
    tau: int
    last_slot: int
    decoded: object


def run_link(session, tx, params, rng) -> LinkRun:
    """Run one message to decode; IDLE slots advance time but send nothing."""
    tau = 0
    last = 0
    while (dec := session.decoded()) is None:
        action = session.next_action()
        if action.kind == IDLE:
            if session.slot > MAX_SLOTS:
                raise InvariantError("no symbol scheduled within the slot limit")
            continue
        part = session.prepare(action)
        x = tx.encode(action, part)
        y = bsc_transmit(x, params, rng)
        session.observe(action, part, y)
        tx.after(action, part, x, y)
        tau += 1
        last = session.slot
    return LinkRun(tau, last, dec)


def run_lockstep(rx, tx_session, tx, params, rng, flip_at=None):
    """Like :func:`run_link` with separately held receiver and transmitter states.

    ``flip_at`` (symbol index, 0-based) corrupts the feedback seen by the
    transmitter once, as a negative control. Returns ``(in_step, LinkRun)``;
    the run stops at the first divergence.
    """
    tau = 0
    last = 0
    while (dec := rx.decoded()) is None:
        a_rx = rx.next_action()
        a_tx = tx_session.next_action()
        if a_rx != a_tx:
            return False, LinkRun(tau, last, None)
        if a_rx.kind == IDLE:
            continue
        p_rx = rx.prepare(a_rx)
        p_tx = tx_session.prepare(a_tx)
        x = tx.encode(a_tx, p_tx)
        y = bsc_transmit(x, params, rng)
        rx.observe(a_rx, p_rx, y)
        fb = y ^ 1 if flip_at == tau else y
        tx_session.observe(a_tx, p_tx, fb)
        tx.after(a_tx, p_tx, x, fb)
        tau += 1
        last = rx.slot
        if rx.signature() != tx_session.signature():
            return False, LinkRun(tau, last, None)
    return True, LinkRun(tau, last, dec)
