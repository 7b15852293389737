"""Synchronous phase loop driving the counting protocols.

A run is a pure function of (protocol, n, seed, r, phase cap). Batches are
evaluated in chunks of runs stepped together; because every node draws from
its own counter-based stream, a run's outcome does not depend on which other
runs share its chunk.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import rng
from .exceptions import ConfigurationError, InvalidInputError, InvariantViolation, PhaseCapExceeded
from .model import ModelVariant
from .protocols import CountingState, PhaseRecord, phase_bcdl, phase_bcdlcd, phase_bl_mc, phase_blcd

log = logging.getLogger(__name__)

DEFAULT_CAP_FACTOR = 10_000
CHUNK_ELEMENTS = 1 << 17


@dataclass(frozen=True)
class Protocol:
    name: str
    variant: ModelVariant
    step: Callable
    las_vegas: bool
    min_n: int = 1

    def slots_per_phase(self, r: Optional[int] = None) -> int:
        if self.name == "bl-mc":
            if r is None:
                raise ConfigurationError("bl-mc needs r")
            return 2 * r + 2
        return {"bcdl": 3, "bcdlcd": 2, "blcd": 4}[self.name]


PROTOCOLS = {
    p.name: p
    for p in (
        Protocol("bcdl", ModelVariant.BcdL, phase_bcdl, las_vegas=True),
        Protocol("bcdlcd", ModelVariant.BcdLcd, phase_bcdlcd, las_vegas=True),
        Protocol("blcd", ModelVariant.BLcd, phase_blcd, las_vegas=True, min_n=2),
        Protocol("bl-mc", ModelVariant.BL, phase_bl_mc, las_vegas=False),
    )
}

_ALIASES = {"phase_bcdl": "bcdl", "phase_bcdlcd": "bcdlcd", "phase_blcd": "blcd",
            "phase_bl_mc": "bl-mc", "bl_mc": "bl-mc", "blmc": "bl-mc"}


def get_protocol(protocol) -> Protocol:
    if isinstance(protocol, Protocol):
        return protocol
    name = _ALIASES.get(protocol, protocol)
    try:
        return PROTOCOLS[name]
    except KeyError:
        raise ConfigurationError(
            f"unknown protocol {protocol!r}; expected one of {sorted(PROTOCOLS)}") from None


@dataclass(frozen=True)
class ProtocolConfig:
    r: Optional[int] = None
    phase_cap: Optional[int] = None
    check_invariants: bool = True

    def cap_for(self, n: int) -> int:
        return self.phase_cap if self.phase_cap is not None else DEFAULT_CAP_FACTOR * n


def validate(protocol: Protocol, n: int, config: ProtocolConfig, variant=None) -> None:
    if variant is not None and ModelVariant.parse(str(variant)) is not protocol.variant:
        raise ConfigurationError(
            f"protocol {protocol.name} runs in {protocol.variant}, not {variant}")
    if isinstance(n, bool) or not isinstance(n, (int, np.integer)) or n < 1:
        raise InvalidInputError(f"n must be a positive integer, got {n!r}")
    if n < protocol.min_n:
        raise ConfigurationError(
            f"{protocol.name} needs n >= {protocol.min_n}: a single node that beeps "
            "alone cannot tell its own beep from a collision")
    if protocol.name == "bl-mc":
        if config.r is None or config.r < 1:
            raise ConfigurationError(f"bl-mc needs r >= 1, got {config.r!r}")
    if config.phase_cap is not None and config.phase_cap < 1:
        raise ConfigurationError("phase cap must be positive")


@dataclass
class BatchArrays:
    """Raw outcome of a batch at a single n; arrays are indexed by run."""

    protocol: str
    n: int
    r: Optional[int]
    seeds: np.ndarray
    phases: np.ndarray
    sizes: np.ndarray
    correct: np.ndarray
    aborted: np.ndarray
    max_counted_per_phase: np.ndarray
    slots_per_phase: int

    @property
    def slots(self) -> np.ndarray:
        return self.phases * self.slots_per_phase


@dataclass
class Trace:
    phases: list = field(default_factory=list)
    slots: list = field(default_factory=list)


@dataclass(frozen=True)
class RunResult:
    protocol: str
    variant: str
    n: int
    seed: int
    phases: int
    slots: int
    sizes: tuple
    correct: bool
    aborted: bool = False
    run_id: int = 0
    r: Optional[int] = None
    trace: Optional[Trace] = field(default=None, compare=False, repr=False)

    @property
    def reported_size_min(self) -> int:
        return min(self.sizes)

    @property
    def reported_size_max(self) -> int:
        return max(self.sizes)


def _check_fact(state: CountingState, rows, phase_index, protocol):
    ok = state.uncounted_agree()
    if not ok.all():
        bad = int(rows[np.flatnonzero(~ok)[0]])
        raise InvariantViolation(
            f"{protocol}: uncounted nodes disagree on k after phase {phase_index} (batch row {bad})")


def _simulate_chunk(proto: Protocol, n: int, seeds: np.ndarray, config: ProtocolConfig,
                    recorder: Optional[Trace] = None):
    runs = len(seeds)
    cap = config.cap_for(n)
    keys = rng.node_keys(seeds, n, rng.COIN_STREAM)
    signature = None
    if proto.name == "bl-mc":
        signature = rng.draw_bits(rng.node_keys(seeds, n, rng.SIGNATURE_STREAM), config.r)
    state = CountingState.initial(runs, n, signature)

    phases = np.full(runs, cap, dtype=np.int64)
    sizes = np.ones((runs, n), dtype=np.int64)
    correct = np.zeros(runs, dtype=bool)
    aborted = np.zeros(runs, dtype=bool)
    max_counted = np.zeros(runs, dtype=np.int64)
    rows = np.arange(runs)
    slots_per_phase = proto.slots_per_phase(config.r)

    phase = 0
    while rows.size:
        if phase >= cap:
            aborted[rows] = True
            sizes[rows] = state.size
            log.warning("%s n=%d: %d run(s) hit the phase cap of %d", proto.name, n, rows.size, cap)
            break
        coins = rng.uniform(keys, phase)
        slot_log = recorder.slots if recorder is not None else None
        record: PhaseRecord = proto.step(
            state, coins, phase_index=phase, slot_log=slot_log,
            first_slot=phase * slots_per_phase)
        if recorder is not None:
            recorder.phases.append(record.row(0))
        if config.check_invariants:
            _check_fact(state, rows, phase, proto.name)
        max_counted[rows] = np.maximum(max_counted[rows], record.counted_this_phase)
        phase += 1

        # a run that terminates only partially is closed too and reported incorrect
        done = state.terminated.any(axis=1)
        if done.any():
            idx = rows[done]
            fin = state.take(done)
            phases[idx] = phase
            sizes[idx] = fin.size
            same_phase = (fin.terminated_at == fin.terminated_at[:, :1]).all(axis=1)
            correct[idx] = (fin.size == n).all(axis=1) & same_phase & fin.terminated.all(axis=1)
            keep = ~done
            rows = rows[keep]
            keys = keys[keep]
            state = state.take(keep)

    return phases, sizes, correct, aborted, max_counted, slots_per_phase


def simulate_batch(protocol, n: int, seeds: Sequence[int], config: Optional[ProtocolConfig] = None,
                   variant=None) -> BatchArrays:
    """Run one simulation per seed at network size ``n``."""
    proto = get_protocol(protocol)
    config = config or ProtocolConfig()
    validate(proto, n, config, variant)
    if not (isinstance(seeds, np.ndarray) and seeds.dtype == np.uint64):
        seeds = np.asarray([int(s) & rng.MASK64 for s in seeds], dtype=np.uint64)
    total = len(seeds)
    phases = np.zeros(total, dtype=np.int64)
    sizes = np.zeros((total, n), dtype=np.int64)
    correct = np.zeros(total, dtype=bool)
    aborted = np.zeros(total, dtype=bool)
    max_counted = np.zeros(total, dtype=np.int64)
    spp = proto.slots_per_phase(config.r)

    chunk = max(1, CHUNK_ELEMENTS // n)
    for start in range(0, total, chunk):
        sl = slice(start, start + chunk)
        out = _simulate_chunk(proto, n, seeds[sl], config)
        phases[sl], sizes[sl], correct[sl], aborted[sl], max_counted[sl], spp = out
    return BatchArrays(proto.name, n, config.r, seeds, phases, sizes, correct, aborted, max_counted, spp)


def run_protocol(protocol, n: int, variant=None, seed: int = 0, config: Optional[ProtocolConfig] = None,
                 *, trace: bool = False, run_id: int = 0, raise_on_cap: bool = True) -> RunResult:
    """Simulate one run and return its :class:`RunResult`.

    With ``trace=True`` the result carries every slot and phase record.
    Hitting the phase cap raises :class:`PhaseCapExceeded` unless
    ``raise_on_cap`` is False, in which case the result is marked aborted.
    """
    proto = get_protocol(protocol)
    config = config or ProtocolConfig()
    validate(proto, n, config, variant)
    seed = int(seed) & rng.MASK64
    recorder = Trace() if trace else None
    phases, sizes, correct, aborted, _, spp = _simulate_chunk(
        proto, n, np.array([seed], dtype=np.uint64), config, recorder)
    if aborted[0] and raise_on_cap:
        raise PhaseCapExceeded(
            f"{proto.name} with n={n}, seed={seed} did not terminate within {config.cap_for(n)} phases; "
            f"{int((sizes[0] < n).sum())} node(s) still below n",
            phases=int(phases[0]))
    return RunResult(
        protocol=proto.name,
        variant=str(proto.variant),
        n=n,
        seed=seed,
        phases=int(phases[0]),
        slots=int(phases[0]) * spp,
        sizes=tuple(int(s) for s in sizes[0]),
        correct=bool(correct[0]),
        aborted=bool(aborted[0]),
        run_id=run_id,
        r=config.r,
        trace=recorder,
    )


def batch_results(batch: BatchArrays, run_ids=None) -> list:
    proto = get_protocol(batch.protocol)
    if run_ids is None:
        run_ids = range(len(batch.seeds))
    return [
        RunResult(
            protocol=batch.protocol,
            variant=str(proto.variant),
            n=batch.n,
            seed=int(batch.seeds[i]),
            phases=int(batch.phases[i]),
            slots=int(batch.phases[i]) * batch.slots_per_phase,
            sizes=tuple(int(s) for s in batch.sizes[i]),
            correct=bool(batch.correct[i]),
            aborted=bool(batch.aborted[i]),
            run_id=int(rid),
            r=batch.r,
        )
        for i, rid in enumerate(run_ids)
    ]
