"""Beeping-model variants and single-slot resolution on a complete graph.

Arrays of actions carry the nodes on the last axis; any leading axes are
independent runs resolved in the same call.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .exceptions import InvalidInputError


class ModelVariant(enum.Enum):
    BL = (False, False)
    BcdL = (True, False)
    BLcd = (False, True)
    BcdLcd = (True, True)

    @property
    def speaker_cd(self) -> bool:
        return self.value[0]

    @property
    def listener_cd(self) -> bool:
        return self.value[1]

    @classmethod
    def from_flags(cls, speaker_cd: bool, listener_cd: bool) -> "ModelVariant":
        return cls((bool(speaker_cd), bool(listener_cd)))

    @classmethod
    def parse(cls, name: str) -> "ModelVariant":
        key = name.replace("_", "").replace(" ", "").lower()
        for variant in cls:
            if variant.name.lower() == key:
                return variant
        raise InvalidInputError(f"unknown model variant {name!r}")

    def __str__(self) -> str:
        return self.name


class SlotAction(enum.IntEnum):
    LISTEN = 0
    BEEP = 1


class Observation(enum.IntEnum):
    SILENCE = 0
    HEARD_BEEP = 1
    HEARD_ONE = 2
    HEARD_MANY = 3
    SPEAKER_ALONE = 4
    SPEAKER_COLLISION = 5
    SPEAKER_UNKNOWN = 6

    @property
    def is_speaker(self) -> bool:
        return self >= Observation.SPEAKER_ALONE


SILENCE = np.int8(Observation.SILENCE)
HEARD_BEEP = np.int8(Observation.HEARD_BEEP)
HEARD_ONE = np.int8(Observation.HEARD_ONE)
HEARD_MANY = np.int8(Observation.HEARD_MANY)
SPEAKER_ALONE = np.int8(Observation.SPEAKER_ALONE)
SPEAKER_COLLISION = np.int8(Observation.SPEAKER_COLLISION)
SPEAKER_UNKNOWN = np.int8(Observation.SPEAKER_UNKNOWN)


@dataclass(frozen=True)
class SlotRecord:
    slot_index: int
    beeper_count: int
    actions: tuple
    observations: tuple

    def __post_init__(self):
        if self.beeper_count != sum(a == SlotAction.BEEP for a in self.actions):
            raise InvalidInputError("beeper_count does not match the recorded actions")


def resolve_counts(beeps, beeper_count, variant: ModelVariant) -> np.ndarray:
    """Observations given a precomputed number of beepers per run.

    ``beeper_count`` must broadcast against ``beeps`` once a trailing node
    axis is added.
    """
    beeps = np.asarray(beeps, dtype=bool)
    count = np.asarray(beeper_count)[..., None]

    if variant.listener_cd:
        heard = np.where(count == 1, HEARD_ONE, HEARD_MANY)
    else:
        heard = np.full(np.shape(count), HEARD_BEEP, dtype=np.int8)
    listener = np.where(count == 0, SILENCE, heard)

    if variant.speaker_cd:
        speaker = np.where(count == 1, SPEAKER_ALONE, SPEAKER_COLLISION)
    else:
        speaker = np.full(np.shape(count), SPEAKER_UNKNOWN, dtype=np.int8)

    return np.where(beeps, speaker, listener).astype(np.int8, copy=False)


def resolve_slot(actions, variant: ModelVariant) -> np.ndarray:
    """Return what each node observes after one slot.

    ``actions`` is a boolean (or :class:`SlotAction`) array whose last axis
    indexes nodes; True/BEEP means the node beeps. The result holds
    :class:`Observation` codes as ``int8`` with the same shape.
    """
    beeps = np.asarray(actions)
    if beeps.ndim == 0 or beeps.shape[-1] == 0:
        raise InvalidInputError("resolve_slot needs at least one node")
    beeps = beeps.astype(bool, copy=False)
    return resolve_counts(beeps, beeps.sum(axis=-1), variant)


def expected_observation(beeped: bool, beeper_count: int, variant: ModelVariant) -> Observation:
    """Scalar reference rule for one node, used to audit recorded slots."""
    if beeped:
        if not variant.speaker_cd:
            return Observation.SPEAKER_UNKNOWN
        return Observation.SPEAKER_ALONE if beeper_count == 1 else Observation.SPEAKER_COLLISION
    if beeper_count == 0:
        return Observation.SILENCE
    if not variant.listener_cd:
        return Observation.HEARD_BEEP
    return Observation.HEARD_ONE if beeper_count == 1 else Observation.HEARD_MANY


def audit_slot(record: SlotRecord, variant: ModelVariant) -> bool:
    return all(
        obs == expected_observation(a == SlotAction.BEEP, record.beeper_count, variant)
        for a, obs in zip(record.actions, record.observations)
    )


def slot_record(slot_index: int, beeps, observations) -> SlotRecord:
    beeps = np.asarray(beeps, dtype=bool)
    return SlotRecord(
        slot_index=int(slot_index),
        beeper_count=int(beeps.sum()),
        actions=tuple(SlotAction(int(b)) for b in beeps),
        observations=tuple(Observation(int(o)) for o in np.asarray(observations)),
    )
