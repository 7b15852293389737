"""Emulating sender-side collision detection in the plain beeping model.

Each round has two sub-slots. A participant beeps in the sub-slot picked by
its signature bit (0 -> first, 1 -> second) and listens in the other; hearing
a beep there means someone else picked differently, i.e. a collision.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import NamedTuple, Optional, Union

import numpy as np

from .exceptions import ConfigurationError
from .model import SILENCE, ModelVariant, resolve_counts, slot_record


@dataclass(frozen=True)
class Signature:
    """r bits, most significant first; bit ``i`` is used in round ``i``."""

    bits: tuple

    def __post_init__(self):
        if not self.bits or any(b not in (0, 1) for b in self.bits):
            raise ConfigurationError("a signature is a non-empty word of 0/1 bits")

    @classmethod
    def from_int(cls, value: int, r: int) -> "Signature":
        if value < 0 or value >= 1 << r:
            raise ConfigurationError(f"{value} does not fit in {r} bits")
        return cls(tuple((value >> (r - 1 - i)) & 1 for i in range(r)))

    @property
    def r(self) -> int:
        return len(self.bits)

    def __int__(self) -> int:
        out = 0
        for b in self.bits:
            out = (out << 1) | b
        return out


@dataclass(frozen=True)
class PerNode:
    epsilon: float


@dataclass(frozen=True)
class Global:
    epsilon: float
    upper_bound: int


@dataclass(frozen=True)
class WithHighProbability:
    upper_bound: int


RPolicy = Union[PerNode, Global, WithHighProbability]


def _check_epsilon(eps):
    if not (isinstance(eps, (int, float)) and 0 < eps < 1) or math.isnan(eps):
        raise ConfigurationError(f"epsilon must lie in (0, 1), got {eps!r}")


def _check_bound(bound):
    if isinstance(bound, bool) or not isinstance(bound, (int, np.integer)) or bound < 1:
        raise ConfigurationError(f"upper bound must be an integer >= 1, got {bound!r}")


def _ceil_log2(x: Fraction) -> int:
    """Smallest integer r with 2**r >= x, computed exactly."""
    r = max(0, x.numerator.bit_length() - x.denominator.bit_length() - 1)
    while Fraction(1 << r) < x:
        r += 1
    while r > 0 and Fraction(1 << (r - 1)) >= x:
        r -= 1
    return r


def choose_r(policy: RPolicy) -> int:
    """Number of emulation rounds for the given correctness target (>= 1)."""
    if isinstance(policy, PerNode):
        _check_epsilon(policy.epsilon)
        r = _ceil_log2(1 / Fraction(policy.epsilon))
    elif isinstance(policy, Global):
        _check_epsilon(policy.epsilon)
        _check_bound(policy.upper_bound)
        r = _ceil_log2(Fraction(int(policy.upper_bound)) / Fraction(policy.epsilon))
    elif isinstance(policy, WithHighProbability):
        _check_bound(policy.upper_bound)
        # ceil(2 log2 N) == ceil(log2 N**2)
        r = _ceil_log2(Fraction(int(policy.upper_bound) ** 2))
    else:
        raise ConfigurationError(f"unknown r policy {policy!r}")
    return max(1, r)


class RoundResult(NamedTuple):
    collision: np.ndarray
    heard: np.ndarray
    beeps: np.ndarray


def emulation_round(bits, participants, live=None, slot_log=None, first_slot=0) -> RoundResult:
    """Play one two-sub-slot round.

    ``bits`` and ``participants`` have shape ``(runs, n)``. Returns, per node,
    whether a participant heard a beep in its listening sub-slot, whether a
    non-participant heard any beep, and per run the number of beeps issued.
    """
    participants = np.asarray(participants, dtype=bool)
    bits = np.asarray(bits)
    if live is None:
        live = np.ones(participants.shape, dtype=bool)
    participants = participants & live
    first = participants & (bits == 0)
    second = participants & (bits == 1)

    obs = []
    for beeps, index in ((first, first_slot), (second, first_slot + 1)):
        count = beeps.sum(axis=1)
        o = resolve_counts(beeps, count, ModelVariant.BL)
        if slot_log is not None:
            slot_log.append(slot_record(index, beeps[0], o[0]))
        obs.append((o, count))
    (o1, c1), (o2, c2) = obs

    noise1 = o1 != SILENCE
    noise2 = o2 != SILENCE
    collision = (first & noise2) | (second & noise1)
    heard = live & ~participants & (noise1 | noise2)
    return RoundResult(collision, heard, c1 + c2)


class Window(NamedTuple):
    collision: np.ndarray
    heard: np.ndarray
    beeps: np.ndarray
    slots: int


def emulate_bcd(signatures, participants, live=None, slot_log=None, first_slot=0) -> Window:
    """Run all r rounds for every participant; the collision flag is sticky.

    Participants keep playing after detecting a collision, so the acoustic
    content of the window depends only on the signatures involved.
    """
    signatures = np.asarray(signatures)
    participants = np.asarray(participants, dtype=bool)
    r = signatures.shape[-1]
    collision = np.zeros(participants.shape, dtype=bool)
    heard = np.zeros(participants.shape, dtype=bool)
    beeps = np.zeros(participants.shape[0], dtype=np.int64)
    for i in range(r):
        res = emulation_round(signatures[..., i], participants, live, slot_log, first_slot + 2 * i)
        collision |= res.collision
        heard |= res.heard
        beeps += res.beeps
    return Window(collision, heard, beeps, 2 * r)


def detect(signatures: list, r: Optional[int] = None) -> list:
    """Collision flags for a single group of participants given as signatures.

    Accepts :class:`Signature` objects or plain integers (with ``r``).
    """
    words = []
    for s in signatures:
        if not isinstance(s, Signature):
            if r is None:
                raise ConfigurationError("integer signatures need r")
            s = Signature.from_int(int(s), r)
        words.append(s.bits)
    if len({len(w) for w in words}) > 1:
        raise ConfigurationError("signatures of different lengths")
    sig = np.array(words, dtype=np.uint8)[None, :, :]
    window = emulate_bcd(sig, np.ones((1, len(words)), dtype=bool))
    return [bool(c) for c in window.collision[0]]
