"""Simulation and analysis of size counting in one-hop beeping networks."""
from .emulation import Global, PerNode, Signature, WithHighProbability, choose_r, emulate_bcd, emulation_round
from .exceptions import (
    BeepCountError,
    ConfigurationError,
    InvalidInputError,
    InvariantViolation,
    NumericalError,
    PhaseCapExceeded,
)
from .harness import BatchConfig, BatchSummary, linear_regression, run_batch, summarize, write_csv
from .model import ModelVariant, Observation, SlotAction, SlotRecord, resolve_slot
from .oracle import (
    PhaseProbabilities,
    bad_phase_bound_check,
    chernoff_tail,
    expected_phases_exact,
    phase_probs,
)
from .protocols import CountingState, PhaseRecord, phase_bcdl, phase_bcdlcd, phase_bl_mc, phase_blcd
from .simulator import ProtocolConfig, RunResult, run_protocol, simulate_batch

__version__ = "0.1.0"
