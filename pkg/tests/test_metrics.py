import io
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from churnsim import metrics
from churnsim.metrics import (InsufficientDataError, LogEntry, LogFormatError,
                              RunLog, bandwidth_rows, format_line,
                              moving_success_rate, parse_line, summarize)
from churnsim.netsim import Bandwidth
from churnsim.relay import BlockOutcome


def outcome(node=1, bt=0, success=True, missing=0, rt=0):
    return BlockOutcome(node, bt, b"\x11" * 32, "compact", success,
                        missing, rt, 100, 10)


def outcome_vector(flags, node=1):
    return [outcome(node, i, s) for i, s in enumerate(flags)]


# ---------------------------------------------------------------------------
# log lines

def test_format_and_parse_basic():
    entry = LogEntry(1500, 3, "cmpct_success",
                     [("block", "aabbcc"), ("height", "7")])
    line = format_line(entry)
    assert line == "time=1500 node=3 kind=cmpct_success block=aabbcc height=7"
    assert parse_line(line) == entry


def test_parse_detail_ref():
    entry = parse_line("time=1 node=2 kind=cmpct_need_txn missing=3 detail=9")
    assert entry.detail_ref == 9
    assert entry.attrs == [("missing", "3")]


def test_parse_rejects_malformed():
    for bad in ("time=1 node=2", "node=2 time=1 kind=x", "time=1 node=2 kind=x junk"):
        with pytest.raises(LogFormatError):
            parse_line(bad)


def test_runlog_writes_and_flushes_detail():
    sink, detail = io.StringIO(), io.StringIO()
    log = RunLog(sink, detail)
    log.record(10.2, 1, "cmpct_need_txn", [("missing", 2)],
               detail=("indexes", [4, 9]))
    line = sink.getvalue().strip()
    entry = parse_line(line)
    assert entry.kind == "cmpct_need_txn" and entry.detail_ref == 1
    assert detail.getvalue() == "id=1 key=indexes values=4,9\n"


def test_runlog_in_memory():
    log = RunLog()
    log.record(1, 2, "x", [("a", 1)])
    assert log.entries[0].attrs == [("a", "1")]


@settings(max_examples=1, deadline=None)
@given(st.integers(0, 2 ** 31))
def test_log_round_trip_bulk(seed):
    rng = random.Random(seed)
    kinds = ["cmpct_success", "cmpct_fail", "graphene_fail", "node_down",
             "mempool_sync", "block_mined"]
    for _ in range(10_000):
        entry = LogEntry(
            rng.randrange(10 ** 9), rng.randrange(50), rng.choice(kinds),
            [(f"k{i}", str(rng.randrange(10 ** 6)))
             for i in range(rng.randrange(4))],
            rng.randrange(1000) if rng.random() < 0.3 else None)
        assert parse_line(format_line(entry)) == entry


# ---------------------------------------------------------------------------
# moving average

def test_moving_rate_all_success():
    series = moving_success_rate(outcome_vector([True] * 36))
    assert series[35] == (35, 1.0)


def test_moving_rate_alternating():
    series = moving_success_rate(outcome_vector([True, False] * 18))
    assert series[35][1] == 0.5


def test_moving_rate_partial_prefix():
    series = moving_success_rate(outcome_vector([True, False, False, True]))
    assert [r for _, r in series] == [1.0, 0.5, 1 / 3, 0.5]
    assert moving_success_rate([]) == []


@settings(max_examples=80, deadline=None)
@given(st.lists(st.booleans(), max_size=200), st.integers(1, 50))
def test_moving_rate_matches_brute_force(flags, window):
    series = moving_success_rate(outcome_vector(flags), window)
    for i, rate in series:
        chunk = flags[max(0, i - window + 1):i + 1]
        assert rate == pytest.approx(sum(chunk) / len(chunk))
        assert 0.0 <= rate <= 1.0


def test_moving_rate_rejects_bad_window():
    with pytest.raises(ValueError):
        moving_success_rate([], 0)


# ---------------------------------------------------------------------------
# bandwidth

def test_bandwidth_rows_flatten_and_sort():
    bw = {(2, "Inv", "up"): Bandwidth(64, 2),
          (1, "TxMsg", "down"): Bandwidth(700, 1)}
    assert bandwidth_rows(bw) == [(1, "TxMsg", "down", 700, 1),
                                  (2, "Inv", "up", 64, 2)]


# ---------------------------------------------------------------------------
# summarize

def test_summarize_reproduces_reference_counts():
    # stable node: 661 of 740; intermittent: 544 of 750 -> 16.79 pp gap
    a = outcome_vector([True] * 661 + [False] * 79, node=2)
    b = outcome_vector([True] * 544 + [False] * 206, node=1)
    s = summarize(a, b)
    assert round(s.a.avg_rate * 100, 2) == 89.32
    assert round(s.b.avg_rate * 100, 2) == 72.53
    assert round(s.gap_pp, 2) == 16.79
    # with sync: 627 of 740 vs 542 of 750 -> 12.46 pp
    a2 = outcome_vector([True] * 627 + [False] * 113, node=2)
    b2 = outcome_vector([True] * 542 + [False] * 208, node=1)
    s2 = summarize(a2, b2)
    assert round(s2.a.avg_rate * 100, 2) == 84.73
    assert round(s2.b.avg_rate * 100, 2) == 72.27
    assert round(s2.gap_pp, 2) == 12.46


def test_summarize_identical_vectors_zero_gap():
    v = outcome_vector([True, False, True] * 20)
    assert summarize(v, list(v)).gap_pp == 0.0


def test_summarize_first_n_cap_and_errors():
    v = outcome_vector([True] * 100 + [False] * 100)
    s = summarize(v, v, first_n=100)
    assert s.a.blocks == 100 and s.a.avg_rate == 1.0
    with pytest.raises(InsufficientDataError):
        summarize([], v)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.booleans(), min_size=1, max_size=900),
       st.lists(st.booleans(), min_size=1, max_size=900))
def test_summarize_matches_recount(fa, fb):
    s = summarize(outcome_vector(fa, 2), outcome_vector(fb, 1))
    wa, wb = fa[:750], fb[:750]
    assert s.a.successes == sum(wa) and s.b.successes == sum(wb)
    assert s.gap_pp == pytest.approx(abs(sum(wa) / len(wa) - sum(wb) / len(wb)) * 100)


# ---------------------------------------------------------------------------
# csv round trips

def test_summary_csv_round_trip(tmp_path):
    v = outcome_vector([True] * 9 + [False], node=2)
    w = outcome_vector([True] * 5 + [False] * 5, node=1)
    path = tmp_path / "summary.csv"
    metrics.write_summary(path, "demo", summarize(v, w))
    scenario, rows = metrics.read_summary(path)
    assert scenario == "demo"
    assert rows["2"]["avg_rate"] == 90.0
    assert rows["1"]["avg_rate"] == 50.0
    assert rows["gap_pp"]["avg_rate"] == 40.0


def test_outcomes_and_rates_csv(tmp_path):
    v = outcome_vector([True, False])
    metrics.write_outcomes(tmp_path / "outcomes.csv", v)
    lines = (tmp_path / "outcomes.csv").read_text().strip().splitlines()
    assert lines[0] == ("node,block_time,block_id,protocol,success,missing,"
                        "round_trips,bytes_down,bytes_up")
    assert len(lines) == 3 and lines[1].startswith("1,0,")
    metrics.write_rates(tmp_path / "rates.csv", {1: moving_success_rate(v)})
    rlines = (tmp_path / "rates.csv").read_text().strip().splitlines()
    assert rlines[0] == "node,block_time,rate36"
    assert rlines[1] == "1,0,1.000000"
