import csv
from pathlib import Path

import pytest

from churnplots.data import (DataError, graphene_failures, load_outcomes,
                             load_rates, missing_series, rate_series)

RATES = [
    (1, 0, 1.0), (1, 1, 0.5), (1, 2, 1 / 3),
    (2, 0, 1.0), (2, 1, 1.0), (2, 2, 1.0),
]

OUTCOMES = [
    (1, 0, "aa", "graphene", 1, 0, 0, 100, 10),
    (1, 1, "bb", "graphene", 0, 9, 1, 200, 20),
    (2, 0, "aa", "graphene", 1, 0, 0, 100, 10),
    (2, 1, "bb", "graphene", 0, 4, 1, 150, 15),
]


def write_run(tmp_path, name, rates=RATES, outcomes=OUTCOMES):
    d = tmp_path / name
    d.mkdir()
    with open(d / "rates.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["node", "block_time", "rate36"])
        w.writerows(rates)
    with open(d / "outcomes.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["node", "block_time", "block_id", "protocol", "success",
                    "missing", "round_trips", "bytes_down", "bytes_up"])
        w.writerows(outcomes)
    return d


def test_rate_series_equals_csv_columns(tmp_path):
    d = write_run(tmp_path, "a")
    series = rate_series(load_rates(d))
    assert series[1] == ([0, 1, 2], [1.0, 0.5, pytest.approx(1 / 3)])
    assert series[2] == ([0, 1, 2], [1.0, 1.0, 1.0])


def test_missing_series_sums_per_block_time(tmp_path):
    d = write_run(tmp_path, "a")
    times, missing = missing_series(load_outcomes(d))
    assert times == [0, 1]
    assert missing == [0, 13]


def test_graphene_failures_count(tmp_path):
    d = write_run(tmp_path, "a")
    assert graphene_failures(load_outcomes(d)) == 2


def test_graphene_failures_requires_graphene_rows(tmp_path):
    rows = [(1, 0, "aa", "compact", 1, 0, 0, 1, 1)]
    d = write_run(tmp_path, "a", outcomes=rows)
    with pytest.raises(DataError, match="graphene"):
        graphene_failures(load_outcomes(d))


def test_missing_file_raises(tmp_path):
    with pytest.raises(DataError, match="does not exist"):
        load_rates(tmp_path)


def test_schema_mismatch_raises(tmp_path):
    d = tmp_path
    (d / "rates.csv").write_text("a,b\n1,2\n")
    with pytest.raises(DataError, match="expected columns"):
        load_rates(d)
