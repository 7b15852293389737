"""Closed-form phase probabilities and an exact expected-phase oracle.

The oracle treats the contention dynamics as a Markov chain on
(uncounted nodes, k): a lone beep counts one node and leaves k alone,
silence lowers k (never below 2), a collision raises it. Expected
absorption times are obtained level by level, each level being a
tridiagonal system in k.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .exceptions import InvalidInputError, NumericalError

BAD_PHASE_LIMIT = 0.4
K_CAP_FACTOR = 64


@dataclass(frozen=True)
class PhaseProbabilities:
    p_none: float
    p_single: float
    p_collision: float

    def as_tuple(self):
        return (self.p_none, self.p_single, self.p_collision)


def _check_k(k):
    if isinstance(k, bool) or not isinstance(k, (int, np.integer)) or k < 2:
        raise InvalidInputError(f"k must be an integer >= 2, got {k!r}")


def _check_count(n_prime, name="n_prime", minimum=0):
    if isinstance(n_prime, bool) or not isinstance(n_prime, (int, np.integer)) or n_prime < minimum:
        raise InvalidInputError(f"{name} must be an integer >= {minimum}, got {n_prime!r}")


def _probs(k, n_prime):
    """Vectorised (p_none, p_single, p_collision) for arrays of k and n'."""
    k = np.asarray(k, dtype=np.float64)
    m = np.asarray(n_prime, dtype=np.float64)
    q = 1.0 - 1.0 / k
    p_none = q ** m
    # multiplicative form; m == 0 gives 0 without touching q**-1
    p_single = np.where(m > 0, (m / k) * q ** np.maximum(m - 1, 0), 0.0)
    p_coll = np.maximum(1.0 - p_none - p_single, 0.0)
    return p_none, p_single, p_coll


def phase_probs(k: int, n_prime: int) -> PhaseProbabilities:
    """Probabilities that none, exactly one, or several of ``n_prime``
    contenders beep when each beeps independently with probability 1/k."""
    _check_k(k)
    _check_count(n_prime)
    p_none, p_single, p_coll = _probs(k, n_prime)
    return PhaseProbabilities(float(p_none), float(p_single), float(p_coll))


def bad_phase_probability(k: int, n_prime: int) -> float:
    """Upper bound on the chance that a phase pushes k away from [n', 3n'].

    Below the interval k only drops on silence. Above it k only rises on a
    collision, which is bounded by the chance that anybody beeps.
    """
    _check_k(k)
    _check_count(n_prime, minimum=1)
    p = phase_probs(k, n_prime)
    if k <= n_prime:
        return p.p_none
    if k >= 3 * n_prime:
        return 1.0 - p.p_none
    raise InvalidInputError(f"k={k} lies strictly inside [{n_prime}, {3 * n_prime}]")


def bad_phase_bound_check(k: int, n_prime: int) -> bool:
    return bad_phase_probability(k, n_prime) <= BAD_PHASE_LIMIT


def chernoff_tail(n: int) -> float:
    """Tail bound 2 exp(-n/66) on having 23n bad phases out of 55n."""
    _check_count(n, "n", minimum=1)
    return 2.0 * math.exp(-n / 66.0)


@dataclass(frozen=True)
class AbsorptionReport:
    expected_phases: float
    k_cap: int
    truncation_residual: float
    solve_residual: float


def _thomas(lower, diag, upper, rhs):
    """Tridiagonal solve without pivoting.

    Safe here: every row is strictly diagonally dominant since the chance of
    a lone beep is positive whenever a node is left.
    """
    size = len(diag)
    c = [0.0] * size
    d = [0.0] * size
    c[0] = upper[0] / diag[0]
    d[0] = rhs[0] / diag[0]
    for i in range(1, size):
        denom = diag[i] - lower[i] * c[i - 1]
        c[i] = upper[i] / denom
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / denom
    x = [0.0] * size
    x[-1] = d[-1]
    for i in range(size - 2, -1, -1):
        x[i] = d[i] - c[i] * x[i + 1]
    return np.array(x)


def _level_times(n: int, k_cap: int):
    """Expected phases to absorption from every (n', k), 1 <= n' <= n."""
    ks = np.arange(2, k_cap + 1)
    size = ks.size
    prev = np.zeros(size)
    worst = 0.0
    for m in range(1, n + 1):
        p_none, p_single, p_coll = _probs(ks, m)
        diag = np.ones(size)
        diag[0] -= p_none[0]          # k = 2 stays at 2 on silence
        diag[-1] -= p_coll[-1]        # reflecting cap
        lower = np.zeros(size)
        lower[1:] = -p_none[1:]
        upper = np.zeros(size)
        upper[:-1] = -p_coll[:-1]
        rhs = 1.0 + p_single * prev
        cur = _thomas(lower.tolist(), diag.tolist(), upper.tolist(), rhs.tolist())
        applied = diag * cur
        applied[:-1] += upper[:-1] * cur[1:]
        applied[1:] += lower[1:] * cur[:-1]
        worst = max(worst, float(np.max(np.abs(applied - rhs)) / max(1.0, float(np.max(cur)))))
        prev = cur
    return prev, worst


def expected_phases_report(n: int, k_cap: Optional[int] = None, tolerance: float = 1e-10) -> AbsorptionReport:
    _check_count(n, "n", minimum=1)
    if k_cap is None:
        k_cap = K_CAP_FACTOR * n
    _check_count(k_cap, "k_cap", minimum=2)
    if k_cap < 3 * n:
        raise InvalidInputError(f"k_cap must be at least 3n = {3 * n}, got {k_cap}")
    if not tolerance > 0:
        raise InvalidInputError("tolerance must be positive")

    times, solve_res = _level_times(n, k_cap)
    wider, solve_res2 = _level_times(n, 2 * k_cap)
    value = float(times[0])
    truncation = abs(value - float(wider[0]))
    solve_res = max(solve_res, solve_res2)
    if not np.isfinite(value) or truncation > tolerance * max(1.0, value) or solve_res > tolerance:
        raise NumericalError(
            f"expected phase count for n={n} did not converge: value={value!r}, "
            f"k_cap={k_cap}, truncation residual={truncation:.3e}, solve residual={solve_res:.3e}")
    return AbsorptionReport(value, k_cap, truncation, solve_res)


def expected_phases_exact(n: int, k_cap: Optional[int] = None, tolerance: float = 1e-10) -> float:
    """Expected number of phases for ``n`` nodes starting from k = 2."""
    return expected_phases_report(n, k_cap, tolerance).expected_phases


def count_bad_phases(phase_rows) -> int:
    """Count bad phases in a traced run (rows from ``PhaseRecord.row``)."""
    bad = 0
    for row in phase_rows:
        m, k0, k1 = row["uncounted_before"], row["k_before"], row["k_after"]
        if row["counted_this_phase"] or k1 == 0:
            continue
        if k0 <= m and (k1 < k0 or k0 == k1 == 2):
            bad += 1
        elif k0 >= 3 * m and k1 > k0:
            bad += 1
    return bad
