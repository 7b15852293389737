import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from beepcount.exceptions import InvalidInputError
from beepcount.oracle import (
    bad_phase_bound_check,
    bad_phase_probability,
    chernoff_tail,
    count_bad_phases,
    expected_phases_exact,
    expected_phases_report,
    phase_probs,
)
from beepcount.simulator import run_protocol, simulate_batch


def enumerate_probs(k, m):
    """Exact outcome probabilities by listing every beep pattern."""
    p = Fraction(1, k)
    out = [Fraction(0)] * 3
    for pattern in itertools.product((0, 1), repeat=m):
        beeps = sum(pattern)
        weight = p ** beeps * (1 - p) ** (m - beeps)
        out[min(beeps, 2)] += weight
    return [float(x) for x in out]


def test_single_coin():
    assert phase_probs(2, 1).as_tuple() == (0.5, 0.5, 0.0)


def test_two_coins():
    assert phase_probs(2, 2).as_tuple() == (0.25, 0.5, 0.25)


def test_no_contenders():
    assert phase_probs(7, 0).as_tuple() == (1.0, 0.0, 0.0)


@pytest.mark.parametrize("k", [2, 3, 5, 8])
@pytest.mark.parametrize("m", [0, 1, 2, 3, 6])
def test_matches_enumeration(k, m):
    assert phase_probs(k, m).as_tuple() == pytest.approx(enumerate_probs(k, m), abs=1e-14)


def test_rejects_small_k():
    with pytest.raises(InvalidInputError):
        phase_probs(1, 3)


def test_single_beep_limit():
    limit = math.exp(-1 / 3) / 3
    assert limit == pytest.approx(0.2388, abs=1e-4)
    values = [phase_probs(3 * m, m).p_single for m in range(1, 400)]
    assert all(v >= 0.2388 for v in values)
    assert values == sorted(values, reverse=True)
    assert values[-1] - limit < 1e-3


@given(st.integers(1, 100), st.integers(1, 4))
def test_p_single_decreasing_above_n(m, factor):
    ks = range(m + 1, max(m + 2, (factor + 1) * m) + 1)
    vals = [phase_probs(k, m).p_single for k in ks if k >= 2]
    assert all(a >= b for a, b in zip(vals, vals[1:]))


def test_no_beep_at_k_equal_n():
    assert all(phase_probs(m, m).p_none <= math.exp(-1) for m in range(2, 300))


def test_bad_phase_examples():
    assert bad_phase_probability(10, 10) == pytest.approx(0.9 ** 10)
    assert bad_phase_bound_check(10, 10)
    assert bad_phase_probability(30, 10) == pytest.approx(1 - (29 / 30) ** 10)
    assert bad_phase_bound_check(30, 10)


def test_bad_phase_precondition():
    with pytest.raises(InvalidInputError):
        bad_phase_bound_check(15, 10)
    with pytest.raises(InvalidInputError):
        bad_phase_bound_check(5, 0)


def test_chernoff():
    assert chernoff_tail(66) == pytest.approx(2 * math.exp(-1), rel=1e-15)
    assert chernoff_tail(66) == pytest.approx(0.7358, abs=1e-4)
    assert chernoff_tail(660) == pytest.approx(9.08e-5, rel=1e-3)
    assert chernoff_tail(100_000) < 1e-300


def dense_expected_phases(n, k_cap):
    """Independent oracle: one dense linear system over all transient states."""
    states = [(m, k) for m in range(1, n + 1) for k in range(2, k_cap + 1)]
    index = {s: i for i, s in enumerate(states)}
    a = np.eye(len(states))
    b = np.ones(len(states))
    for (m, k), i in index.items():
        q = 1 - 1 / k
        none = q ** m
        single = m / k * q ** (m - 1)
        coll = 1 - none - single
        a[i, index[(m, max(2, k - 1))]] -= none
        a[i, index[(m, min(k + 1, k_cap))]] -= coll
        if m > 1:
            a[i, index[(m - 1, k)]] -= single
    return np.linalg.solve(a, b)[index[(n, 2)]]


def test_one_node_takes_two_phases_exactly():
    assert expected_phases_exact(1) == 2.0
    assert expected_phases_exact(1, k_cap=3) == 2.0


@pytest.mark.parametrize("n", [2, 3, 4])
def test_matches_dense_solve(n):
    assert expected_phases_exact(n) == pytest.approx(dense_expected_phases(n, 40 * n), rel=1e-11)


def test_report_has_residuals():
    rep = expected_phases_report(5)
    assert rep.k_cap == 320
    assert rep.truncation_residual < 1e-10 and rep.solve_residual < 1e-10


def test_bad_arguments():
    with pytest.raises(InvalidInputError):
        expected_phases_exact(4, k_cap=5)
    with pytest.raises(InvalidInputError):
        expected_phases_exact(0)
    with pytest.raises(InvalidInputError):
        expected_phases_exact(2, tolerance=0)


def test_n2_against_simulation():
    out = simulate_batch("bcdl", 2, range(100_000))
    se = out.phases.std(ddof=1) / np.sqrt(out.phases.size)
    assert abs(out.phases.mean() - expected_phases_exact(2)) <= 3 * se


def test_count_bad_phases_on_trace():
    res = run_protocol("bcdl", 16, seed=1, trace=True)
    bad = count_bad_phases(res.trace.phases)
    assert 0 <= bad < res.phases
    rows = [{"uncounted_before": 4, "k_before": 2, "k_after": 2, "counted_this_phase": 0},
            {"uncounted_before": 1, "k_before": 5, "k_after": 6, "counted_this_phase": 0},
            {"uncounted_before": 4, "k_before": 5, "k_after": 6, "counted_this_phase": 0}]
    assert count_bad_phases(rows) == 2
