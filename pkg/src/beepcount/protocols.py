"""Counting protocols as per-node state machines, one phase per call.

State is held as arrays of shape ``(runs, n)`` so a batch of independent
runs advances together. Phase functions mutate the state in place and
return a :class:`PhaseRecord` with one entry per run. Protocol logic only
ever looks at a node's own state, its coin and its own observations; node
indices are never read.
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields
from typing import Optional

import numpy as np

from . import emulation
from .model import (
    HEARD_BEEP,
    HEARD_MANY,
    HEARD_ONE,
    SILENCE,
    SPEAKER_ALONE,
    SPEAKER_COLLISION,
    ModelVariant,
    resolve_counts,
    slot_record,
)

INITIAL_K = 2
MIN_K = 2


@dataclass
class CountingState:
    counted: np.ndarray
    terminated: np.ndarray
    k: np.ndarray
    size: np.ndarray
    signature: Optional[np.ndarray] = None
    terminated_at: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.terminated_at is None:
            self.terminated_at = np.full(self.counted.shape, -1, dtype=np.int64)

    @classmethod
    def initial(cls, runs: int, n: int, signature=None) -> "CountingState":
        shape = (runs, n)
        return cls(
            counted=np.zeros(shape, dtype=bool),
            terminated=np.zeros(shape, dtype=bool),
            k=np.full(shape, INITIAL_K, dtype=np.int64),
            size=np.ones(shape, dtype=np.int64),
            signature=signature,
        )

    @property
    def runs(self) -> int:
        return self.counted.shape[0]

    @property
    def n(self) -> int:
        return self.counted.shape[1]

    def take(self, rows) -> "CountingState":
        """Sub-batch holding only ``rows`` (copies)."""
        values = {}
        for f in fields(self):
            arr = getattr(self, f.name)
            values[f.name] = None if arr is None else arr[rows]
        return CountingState(**values)

    def uncounted_k(self) -> np.ndarray:
        """Common k of the uncounted nodes per run, 0 when none is left."""
        return np.where(self.counted, 0, self.k).max(axis=1)

    def uncounted_agree(self) -> np.ndarray:
        """Per run: do all uncounted nodes hold the same k?"""
        common = self.uncounted_k()[:, None]
        return (self.counted | (self.k == common)).all(axis=1)

    def node(self, run: int, node: int) -> dict:
        out = {
            "counted": bool(self.counted[run, node]),
            "terminated": bool(self.terminated[run, node]),
            "k": int(self.k[run, node]),
            "size": int(self.size[run, node]),
        }
        if self.signature is not None:
            out["signature"] = tuple(int(b) for b in self.signature[run, node])
        return out


@dataclass
class PhaseRecord:
    """Per-run summary of one phase; every array has shape ``(runs,)``.

    For the BL protocol ``slot1_beepers`` counts contenders in the emulation
    window and ``window_heard`` tells whether any beep occurred in it.
    ``k_after`` is 0 once no uncounted node remains.
    """

    phase_index: int
    slot1_beepers: np.ndarray
    slot2_beepers: np.ndarray
    slot3_beepers: np.ndarray
    k_before: np.ndarray
    k_after: np.ndarray
    uncounted_before: np.ndarray
    counted_this_phase: np.ndarray
    terminated: np.ndarray
    slot4_beepers: Optional[np.ndarray] = None
    window_heard: Optional[np.ndarray] = None

    @property
    def node_counted_this_phase(self) -> np.ndarray:
        return self.counted_this_phase > 0

    def row(self, i: int) -> dict:
        out = {"phase_index": self.phase_index}
        for f in fields(self)[1:]:
            arr = getattr(self, f.name)
            if arr is not None:
                out[f.name] = arr[i].item()
        out["node_counted_this_phase"] = bool(self.counted_this_phase[i] > 0)
        return out


class _Slots:
    """Issues the slots of one phase and optionally logs them."""

    def __init__(self, variant: ModelVariant, live: np.ndarray, log=None, first_slot=0):
        self.variant = variant
        self.live = live
        self.log = log
        self.next_slot = first_slot

    def __call__(self, beeps):
        beeps = beeps & self.live
        count = beeps.sum(axis=1)
        obs = resolve_counts(beeps, count, self.variant)
        if self.log is not None:
            self.log.append(slot_record(self.next_slot, beeps[0], obs[0]))
        self.next_slot += 1
        return obs, count


def _contend(state: CountingState, coins, live) -> np.ndarray:
    return live & ~state.counted & (coins < 1.0 / state.k)


def _adjust_k(state, eligible, silence, collision):
    down = eligible & silence & (state.k > MIN_K)
    up = eligible & collision
    state.k[down] -= 1
    state.k[up] += 1


def _terminate(state, live, obs_last, phase_index):
    done = live & (obs_last == SILENCE)
    state.terminated |= done
    state.terminated_at[done] = phase_index


def phase_bcdl(state: CountingState, coins, *, phase_index=0, slot_log=None, first_slot=0) -> PhaseRecord:
    """One three-slot phase in the model with sender-side collision detection."""
    live = ~state.terminated
    slot = _Slots(ModelVariant.BcdL, live, slot_log, first_slot)
    k_before = state.uncounted_k()
    contending = ~state.counted & live
    uncounted_before = contending.sum(axis=1)

    beep1 = _contend(state, coins, live)
    obs1, n1 = slot(beep1)

    winner = obs1 == SPEAKER_ALONE
    obs2, n2 = slot(winner)
    state.counted |= winner

    obs3, n3 = slot(~state.counted)

    state.size[live & (obs2 == HEARD_BEEP)] += 1
    _terminate(state, live, obs3, phase_index)
    # listeners cannot hear a collision; slot 2 stays silent iff nobody won
    collision = (obs1 == SPEAKER_COLLISION) | ((obs1 == HEARD_BEEP) & (obs2 == SILENCE))
    _adjust_k(state, contending & ~winner, obs1 == SILENCE, collision)

    return PhaseRecord(
        phase_index=phase_index,
        slot1_beepers=n1, slot2_beepers=n2, slot3_beepers=n3,
        k_before=k_before, k_after=state.uncounted_k(), uncounted_before=uncounted_before,
        counted_this_phase=winner.sum(axis=1),
        terminated=state.terminated.all(axis=1),
    )


def phase_bcdlcd(state: CountingState, coins, *, phase_index=0, slot_log=None, first_slot=0) -> PhaseRecord:
    """Two-slot phase: listeners with collision detection see a lone winner directly."""
    live = ~state.terminated
    slot = _Slots(ModelVariant.BcdLcd, live, slot_log, first_slot)
    k_before = state.uncounted_k()
    contending = ~state.counted & live
    uncounted_before = contending.sum(axis=1)

    beep1 = _contend(state, coins, live)
    obs1, n1 = slot(beep1)
    winner = obs1 == SPEAKER_ALONE
    state.counted |= winner
    state.size[live & (obs1 == HEARD_ONE)] += 1

    obs2, n2 = slot(~state.counted)
    _terminate(state, live, obs2, phase_index)
    collision = (obs1 == SPEAKER_COLLISION) | (obs1 == HEARD_MANY)
    _adjust_k(state, contending & ~winner, obs1 == SILENCE, collision)

    return PhaseRecord(
        phase_index=phase_index,
        slot1_beepers=n1, slot2_beepers=n2, slot3_beepers=np.zeros_like(n1),
        k_before=k_before, k_after=state.uncounted_k(), uncounted_before=uncounted_before,
        counted_this_phase=winner.sum(axis=1),
        terminated=state.terminated.all(axis=1),
    )


def phase_blcd(state: CountingState, coins, *, phase_index=0, slot_log=None, first_slot=0) -> PhaseRecord:
    """Four-slot phase where listeners report back to the slot-1 beepers.

    Slot 2: every slot-1 listener beeps, so silence means everybody beeped.
    Slot 3: listeners that heard a collision in slot 1 beep.
    Slot 4: uncounted nodes beep; silence ends the run.
    """
    live = ~state.terminated
    slot = _Slots(ModelVariant.BLcd, live, slot_log, first_slot)
    k_before = state.uncounted_k()
    contending = ~state.counted & live
    uncounted_before = contending.sum(axis=1)

    beep1 = _contend(state, coins, live)
    obs1, n1 = slot(beep1)
    listened = live & ~beep1

    obs2, n2 = slot(listened)
    obs3, n3 = slot(listened & (obs1 == HEARD_MANY))

    winner = beep1 & (obs2 != SILENCE) & (obs3 == SILENCE)
    state.counted |= winner
    state.size[listened & (obs1 == HEARD_ONE)] += 1

    obs4, n4 = slot(~state.counted)
    _terminate(state, live, obs4, phase_index)
    collision = (listened & (obs1 == HEARD_MANY)) | (beep1 & ((obs3 != SILENCE) | (obs2 == SILENCE)))
    _adjust_k(state, contending & ~winner, listened & (obs1 == SILENCE), collision)

    return PhaseRecord(
        phase_index=phase_index,
        slot1_beepers=n1, slot2_beepers=n2, slot3_beepers=n3, slot4_beepers=n4,
        k_before=k_before, k_after=state.uncounted_k(), uncounted_before=uncounted_before,
        counted_this_phase=winner.sum(axis=1),
        terminated=state.terminated.all(axis=1),
    )


def phase_bl_mc(state: CountingState, coins, *, phase_index=0, slot_log=None, first_slot=0) -> PhaseRecord:
    """Phase in the plain model: the contention beep runs the emulation window.

    Uses ``state.signature`` (shape ``(runs, n, r)``), fixed for the whole run.
    The window takes ``2 * r`` slots, followed by the announce and the
    termination slot.
    """
    if state.signature is None:
        raise ValueError("phase_bl_mc needs node signatures")
    live = ~state.terminated
    k_before = state.uncounted_k()
    contending = ~state.counted & live
    uncounted_before = contending.sum(axis=1)

    contender = _contend(state, coins, live)
    window = emulation.emulate_bcd(
        state.signature, contender, live=live, slot_log=slot_log, first_slot=first_slot)
    slot = _Slots(ModelVariant.BL, live, slot_log, first_slot + window.slots)

    winner = contender & ~window.collision
    obs2, n2 = slot(winner)
    state.counted |= winner

    obs3, n3 = slot(~state.counted)

    state.size[live & (obs2 == HEARD_BEEP)] += 1
    _terminate(state, live, obs3, phase_index)
    heard = live & ~contender & window.heard
    silence = live & ~contender & ~window.heard
    collision = (contender & window.collision) | (heard & (obs2 == SILENCE))
    _adjust_k(state, contending & ~winner, silence, collision)

    return PhaseRecord(
        phase_index=phase_index,
        slot1_beepers=contender.sum(axis=1), slot2_beepers=n2, slot3_beepers=n3,
        k_before=k_before, k_after=state.uncounted_k(), uncounted_before=uncounted_before,
        counted_this_phase=winner.sum(axis=1),
        terminated=state.terminated.all(axis=1),
        window_heard=(window.beeps > 0),
    )
