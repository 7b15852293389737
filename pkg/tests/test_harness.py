import math

import pytest
from hypothesis import given, settings, strategies as st

from beepcount.emulation import PerNode
from beepcount.exceptions import ConfigurationError, InvalidInputError
from beepcount.harness import (
    RESULT_COLUMNS,
    SUMMARY_COLUMNS,
    BatchConfig,
    CsvFormatError,
    linear_regression,
    read_summary_csv,
    run_batch,
    run_batch_arrays,
    summarize,
    write_csv,
)
from beepcount.simulator import RunResult


def result(phases, n=4, run_id=0, correct=True, aborted=False, protocol="bcdl"):
    return RunResult(protocol, "BcdL", n, 1, phases, 3 * phases, (n,) * n, correct, aborted, run_id)


def test_single_node_batch():
    res = run_batch(BatchConfig("bcdl", [1], 100, master_seed=3))
    assert len(res) == 100
    assert all(r.correct and r.phases >= 1 for r in res)
    assert [r.run_id for r in res] == list(range(100))


def test_results_sorted_by_n_then_run():
    res = run_batch(BatchConfig("bcdlcd", [5, 2], 7, master_seed=3))
    assert [(r.n, r.run_id) for r in res] == sorted((r.n, r.run_id) for r in res)


def test_policy_resolves_r():
    cfg = BatchConfig("bl-mc", [4], 5, r_policy=PerNode(0.1))
    assert cfg.resolved_r() == 4
    assert all(r.r == 4 and r.slots == 10 * r.phases for r in run_batch(cfg))


@pytest.mark.parametrize("kwargs", [
    dict(protocol="bcdl", n_values=[], runs=3),
    dict(protocol="bcdl", n_values=[3], runs=0),
    dict(protocol="blcd", n_values=[1, 2], runs=3),
    dict(protocol="bl-mc", n_values=[3], runs=3),
    dict(protocol="bl-mc", n_values=[3], runs=3, r=2, r_policy=PerNode(0.5)),
])
def test_bad_configs(kwargs):
    with pytest.raises(ConfigurationError):
        BatchConfig(**kwargs)


def test_aborted_runs_are_kept():
    res = run_batch(BatchConfig("bcdl", [6], 4, phase_cap=2))
    assert len(res) == 4 and all(r.aborted for r in res)
    s = summarize(res)
    assert s.aborted == 4 and s.incorrect == 0


def test_summary_single():
    row = summarize([result(5)]).rows[0]
    assert (row.mean_phases, row.std_phases, row.runs) == (5.0, 0.0, 1)


def test_summary_two_sample_std():
    row = summarize([result(4), result(6, run_id=1)]).rows[0]
    assert row.mean_phases == 5.0
    assert row.std_phases == pytest.approx(math.sqrt(2))


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(1, 200), min_size=1, max_size=30), st.randoms())
def test_summary_order_independent(phases, rnd):
    results = [result(p, n=2 + i % 3, run_id=i, correct=i % 4 != 0) for i, p in enumerate(phases)]
    shuffled = results[:]
    rnd.shuffle(shuffled)
    assert summarize(results) == summarize(shuffled)


def test_summary_from_arrays_matches_results():
    cfg = BatchConfig("bcdl", [3, 6], 50, master_seed=9)
    assert summarize(run_batch_arrays(cfg)) == summarize(run_batch(cfg))


def test_regression_exact_line():
    fit = linear_regression([(n, 3 * n) for n in (8, 16, 32, 64)])
    assert fit.slope == pytest.approx(3.0)
    assert fit.intercept == pytest.approx(0.0, abs=1e-12)
    assert fit.relative_error == pytest.approx(0.0, abs=1e-12)


def test_regression_two_points():
    fit = linear_regression([(8, 24), (16, 48)])
    assert fit.slope == pytest.approx(3.0) and fit.intercept == pytest.approx(0.0, abs=1e-12)


def test_regression_relative_error():
    pts = [(1, 1.0), (2, 2.5), (3, 2.9), (4, 4.2)]
    fit = linear_regression(pts)
    xs, ys = zip(*pts)
    mx, my = sum(xs) / 4, sum(ys) / 4
    sxx = sum((x - mx) ** 2 for x in xs)
    slope = sum((x - mx) * (y - my) for x, y in pts) / sxx
    resid = sum((y - (my + slope * (x - mx))) ** 2 for x, y in pts)
    assert fit.slope == pytest.approx(slope)
    assert fit.relative_error == pytest.approx(math.sqrt(resid / 2 / sxx) / slope)


def test_regression_degenerate():
    with pytest.raises(InvalidInputError):
        linear_regression([(8, 20), (8, 30)])
    with pytest.raises(InvalidInputError):
        linear_regression([(8, 20)])


def test_csv_empty(tmp_path):
    path = tmp_path / "r.csv"
    write_csv([], path)
    assert path.read_bytes() == (",".join(RESULT_COLUMNS) + "\n").encode()


def test_csv_one_run(tmp_path):
    path = tmp_path / "r.csv"
    write_csv([result(5)], path)
    lines = path.read_text().splitlines()
    assert len(lines) == 2
    assert lines[1] == "bcdl,BcdL,4,0,1,5,15,true,4,4,false"


def test_csv_rows_sorted(tmp_path):
    path = tmp_path / "r.csv"
    write_csv([result(5, n=8, run_id=0), result(6, n=4, run_id=1), result(7, n=4, run_id=0)], path)
    rows = [line.split(",") for line in path.read_text().splitlines()[1:]]
    assert [(r[2], r[3]) for r in rows] == [("4", "0"), ("4", "1"), ("8", "0")]


def test_summary_csv_round_trip(tmp_path):
    cfg = BatchConfig("bcdl", [4, 8], 30, master_seed=2)
    summary = summarize(run_batch(cfg))
    path = tmp_path / "s.csv"
    write_csv(summary, path)
    text = path.read_text()
    assert text.splitlines()[0] == ",".join(SUMMARY_COLUMNS)
    assert "\r" not in text
    assert read_summary_csv(path) == [(row.n, row.mean_phases) for row in summary.rows]


def test_csv_bytes_reproducible(tmp_path):
    cfg = BatchConfig("bl-mc", [3, 5], 40, master_seed=11, r=2)
    write_csv(run_batch(cfg), tmp_path / "a.csv")
    write_csv(run_batch(cfg, jobs=2), tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_write_error_mentions_path(tmp_path):
    with pytest.raises(OSError, match="missing"):
        write_csv([], tmp_path / "missing" / "r.csv")


@pytest.mark.parametrize("body, line", [
    ("protocol,n\nbcdl,4\n", 1),
    ("n,mean_phases\n4,10.5\n8,x\n", 3),
    ("n,mean_phases\n4,10.5,7\n", 2),
    ("", 1),
])
def test_malformed_summary(tmp_path, body, line):
    path = tmp_path / "s.csv"
    path.write_text(body)
    with pytest.raises(CsvFormatError) as err:
        read_summary_csv(path)
    assert err.value.line == line
