"""Counter-based random streams.

Every value is a pure function of (key, counter), so a node's draws do not
depend on how many other nodes or runs are evaluated alongside it. The mixing
function is the SplitMix64 finalizer; stream ``key`` at ``counter`` yields the
``counter``-th output of a SplitMix64 generator seeded with ``key``.
"""
from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_TO_UNIT = 1.0 / (1 << 53)

# sub-stream tags per node
COIN_STREAM = 1
SIGNATURE_STREAM = 2


def mix64(x):
    x = np.asarray(x, dtype=np.uint64)
    with np.errstate(over="ignore"):
        x = (x ^ (x >> np.uint64(30))) * _M1
        x = (x ^ (x >> np.uint64(27))) * _M2
    return x ^ (x >> np.uint64(31))


def combine(*parts):
    """Fold integers (or uint64 arrays) into one 64-bit key."""
    acc = np.uint64(0)
    with np.errstate(over="ignore"):
        for part in parts:
            if isinstance(part, (int, np.integer)):
                part = np.uint64(int(part) & MASK64)
            acc = mix64(mix64(np.asarray(acc, dtype=np.uint64) ^ np.asarray(part, dtype=np.uint64)) + GAMMA)
    return acc


def raw(key, counter):
    key = np.asarray(key, dtype=np.uint64)
    with np.errstate(over="ignore"):
        state = key + GAMMA * np.uint64(int(counter) + 1)
    return mix64(state)


def uniform(key, counter):
    """Doubles in [0, 1) with 53 random bits."""
    return (raw(key, counter) >> np.uint64(11)).astype(np.float64) * _TO_UNIT


def run_seed(master_seed: int, n: int, run_index: int) -> int:
    return int(combine(master_seed, n, run_index))


def run_seeds(master_seed: int, n: int, count: int, start: int = 0) -> np.ndarray:
    """``run_seed`` for run indices ``start .. start + count - 1``."""
    return combine(master_seed, n, np.arange(start, start + count, dtype=np.uint64))


def node_keys(seeds, n: int, stream: int) -> np.ndarray:
    """Per-node keys of shape ``(len(seeds), n)`` for one sub-stream."""
    seeds = np.asarray(seeds, dtype=np.uint64).reshape(-1, 1)
    nodes = np.arange(n, dtype=np.uint64).reshape(1, -1)
    return combine(seeds, nodes, stream)


def draw_bits(keys, count: int) -> np.ndarray:
    """``count`` fair bits per key, appended on a new last axis."""
    keys = np.asarray(keys, dtype=np.uint64)
    out = np.empty(keys.shape + (count,), dtype=np.uint8)
    for i in range(count):
        out[..., i] = (raw(keys, i) >> np.uint64(63)).astype(np.uint8)
    return out
