"""Batch execution, summary statistics, regression and CSV output."""
from __future__ import annotations

import csv
import math
import os
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np
from scipy import stats

from . import rng
from .emulation import RPolicy, choose_r
from .exceptions import ConfigurationError, InvalidInputError
from .simulator import (
    BatchArrays,
    ProtocolConfig,
    RunResult,
    batch_results,
    get_protocol,
    simulate_batch,
    validate,
)

RESULT_COLUMNS = (
    "protocol", "variant", "n", "run_id", "seed", "phases", "slots", "correct",
    "reported_size_min", "reported_size_max", "aborted",
)
SUMMARY_COLUMNS = (
    "protocol", "variant", "n", "runs", "mean_phases", "std_phases", "min_phases",
    "max_phases", "incorrect", "aborted",
)
TASK_RUNS = 4096


@dataclass(frozen=True)
class BatchConfig:
    protocol: str
    n_values: tuple
    runs: int
    master_seed: int = 0
    r_policy: Optional[RPolicy] = None
    r: Optional[int] = None
    phase_cap: Optional[int] = None
    variant: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "n_values", tuple(int(n) for n in self.n_values))
        if not self.n_values:
            raise ConfigurationError("at least one n is required")
        if self.runs < 1:
            raise ConfigurationError("runs must be >= 1")
        if self.r is not None and self.r_policy is not None:
            raise ConfigurationError("give either r or an r policy, not both")
        proto = get_protocol(self.protocol)
        config = self.protocol_config()
        for n in self.n_values:
            validate(proto, n, config, self.variant)

    def resolved_r(self) -> Optional[int]:
        if get_protocol(self.protocol).name != "bl-mc":
            return None
        if self.r is not None:
            return self.r
        if self.r_policy is None:
            raise ConfigurationError("bl-mc needs r or an r policy")
        return choose_r(self.r_policy)

    def protocol_config(self) -> ProtocolConfig:
        return ProtocolConfig(r=self.resolved_r(), phase_cap=self.phase_cap)

    def seeds(self, n: int) -> np.ndarray:
        return rng.run_seeds(self.master_seed, n, self.runs)


def _run_task(task):
    protocol, n, seeds, config, start = task
    return n, start, simulate_batch(protocol, n, seeds, config)


def _tasks(config: BatchConfig):
    pconf = config.protocol_config()
    for n in config.n_values:
        seeds = config.seeds(n)
        for start in range(0, len(seeds), TASK_RUNS):
            yield config.protocol, n, seeds[start:start + TASK_RUNS], pconf, start


def run_batch_arrays(config: BatchConfig, jobs: int = 1) -> list:
    """Like :func:`run_batch` but keeps outcomes as arrays, one chunk per item.

    Items come back as ``(n, first_run_id, BatchArrays)`` sorted by
    ``(n, first_run_id)`` whatever ``jobs`` is.
    """
    tasks = list(_tasks(config))
    if jobs is None or jobs <= 1 or len(tasks) == 1:
        out = [_run_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            out = list(pool.map(_run_task, tasks))
    return sorted(out, key=lambda item: (item[0], item[1]))


def run_batch(config: BatchConfig, jobs: int = 1) -> list:
    """All runs of the batch as :class:`RunResult`, sorted by (n, run_id).

    Run ``i`` at size ``n`` uses seed ``hash(master_seed, n, i)``; runs that
    hit the phase cap come back with ``aborted=True``.
    """
    results = []
    for _, start, arrays in run_batch_arrays(config, jobs):
        results.extend(batch_results(arrays, range(start, start + len(arrays.seeds))))
    return results


class Regression(NamedTuple):
    slope: float
    intercept: float
    relative_error: float


def linear_regression(points: Sequence) -> Regression:
    """Unweighted least squares of mean phases against n.

    The relative error is the slope's standard error over the slope.
    """
    pts = [(float(x), float(y)) for x, y in points]
    if len(pts) < 2 or len({x for x, _ in pts}) < 2:
        raise InvalidInputError("regression needs at least two distinct n values")
    x = np.array([p[0] for p in pts])
    y = np.array([p[1] for p in pts])
    fit = stats.linregress(x, y)
    slope, intercept = float(fit.slope), float(fit.intercept)
    if len(pts) == 2:
        stderr = 0.0
    else:
        stderr = float(fit.stderr)
    rel = stderr / abs(slope) if slope != 0 else math.inf
    return Regression(slope, intercept, rel)


@dataclass(frozen=True)
class SizeStats:
    protocol: str
    variant: str
    n: int
    runs: int
    mean_phases: float
    std_phases: float
    min_phases: int
    max_phases: int
    correct: int
    incorrect: int
    aborted: int
    slots_per_phase: int

    @property
    def failure_rate(self) -> float:
        finished = self.runs - self.aborted
        return self.incorrect / finished if finished else math.nan


@dataclass
class BatchSummary:
    rows: list = field(default_factory=list)
    regression: Optional[Regression] = None

    def for_n(self, n: int) -> SizeStats:
        matches = [row for row in self.rows if row.n == n]
        if len(matches) != 1:
            raise KeyError(n)
        return matches[0]

    @property
    def total_runs(self) -> int:
        return sum(row.runs for row in self.rows)

    @property
    def incorrect(self) -> int:
        return sum(row.incorrect for row in self.rows)

    @property
    def aborted(self) -> int:
        return sum(row.aborted for row in self.rows)


def _stats(key, phases, correct, aborted, slots_per_phase):
    phases = np.sort(np.asarray(phases, dtype=np.int64))
    correct = np.asarray(correct, dtype=bool)
    aborted = np.asarray(aborted, dtype=bool)
    count = phases.size
    mean = float(math.fsum(phases.tolist()) / count)
    std = float(np.std(phases, ddof=1)) if count > 1 else 0.0
    protocol, variant, n = key
    return SizeStats(
        protocol=protocol, variant=variant, n=n, runs=count,
        mean_phases=mean, std_phases=std,
        min_phases=int(phases[0]), max_phases=int(phases[-1]),
        correct=int(correct.sum()),
        incorrect=int((~correct & ~aborted).sum()),
        aborted=int(aborted.sum()),
        slots_per_phase=slots_per_phase,
    )


def summarize(results) -> BatchSummary:
    """Aggregate per (protocol, variant, n); independent of result order.

    Accepts :class:`RunResult` objects or ``(n, start, BatchArrays)`` items
    from :func:`run_batch_arrays`.
    """
    results = list(results)
    if not results:
        raise InvalidInputError("nothing to summarize")
    groups = defaultdict(lambda: ([], [], [], set()))
    for item in results:
        if isinstance(item, RunResult):
            key = (item.protocol, item.variant, item.n)
            ph, co, ab, spp = groups[key]
            ph.append(item.phases)
            co.append(item.correct)
            ab.append(item.aborted)
            spp.add(get_protocol(item.protocol).slots_per_phase(item.r))
        else:
            arrays: BatchArrays = item[2] if isinstance(item, tuple) else item
            proto = get_protocol(arrays.protocol)
            key = (arrays.protocol, str(proto.variant), arrays.n)
            ph, co, ab, spp = groups[key]
            ph.extend(arrays.phases.tolist())
            co.extend(arrays.correct.tolist())
            ab.extend(arrays.aborted.tolist())
            spp.add(arrays.slots_per_phase)
    rows = []
    for key in sorted(groups):
        ph, co, ab, spp = groups[key]
        rows.append(_stats(key, ph, co, ab, spp.pop() if len(spp) == 1 else 0))
    summary = BatchSummary(rows)
    if len({(row.protocol, row.variant) for row in rows}) == 1 and len(rows) >= 2:
        summary.regression = linear_regression([(row.n, row.mean_phases) for row in rows])
    return summary


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write(path, columns, rows):
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(columns)
            for row in rows:
                writer.writerow([_fmt(v) for v in row])
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write CSV to {os.fspath(path)}: {exc.strerror}") from exc


def write_csv(data, path) -> None:
    """Write run results (a list) or a :class:`BatchSummary` as CSV."""
    if isinstance(data, BatchSummary):
        rows = [
            (s.protocol, s.variant, s.n, s.runs, s.mean_phases, s.std_phases,
             s.min_phases, s.max_phases, s.incorrect, s.aborted)
            for s in data.rows
        ]
        _write(path, SUMMARY_COLUMNS, rows)
        return
    results = sorted(data, key=lambda r: (r.n, r.run_id, r.protocol))
    rows = [
        (r.protocol, r.variant, r.n, r.run_id, r.seed, r.phases, r.slots, r.correct,
         r.reported_size_min, r.reported_size_max, r.aborted)
        for r in results
    ]
    _write(path, RESULT_COLUMNS, rows)


class CsvFormatError(ValueError):
    def __init__(self, message, line):
        super().__init__(f"line {line}: {message}")
        self.line = line


def read_summary_csv(path) -> list:
    """Parse a summary CSV back into ``(n, mean_phases)`` points."""
    points = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise CsvFormatError("empty file", 1)
        missing = {"n", "mean_phases"} - set(header)
        if missing:
            raise CsvFormatError(f"missing column(s) {', '.join(sorted(missing))}", 1)
        n_col, mean_col = header.index("n"), header.index("mean_phases")
        for line, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise CsvFormatError(f"expected {len(header)} fields, found {len(row)}", line)
            try:
                n = int(row[n_col])
                mean = float(row[mean_col])
            except ValueError:
                raise CsvFormatError("n must be an integer and mean_phases a number", line) from None
            if not math.isfinite(mean):
                raise CsvFormatError("mean_phases is not finite", line)
            points.append((n, mean))
    return points
