"""Run logging and derived statistics: canonical key=value log lines with
detail records, moving-average success rates, bandwidth accounting, and the
two-node run summary."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Optional, Sequence

from .relay import BlockOutcome

WINDOW = 36


class LogFormatError(ValueError):
    """A log line does not match the canonical format."""


class InsufficientDataError(ValueError):
    """A summary was requested for a node with zero observed blocks."""


# ---------------------------------------------------------------------------
# log entries

@dataclass(slots=True)
class LogEntry:
    time: int
    node: int
    kind: str
    attrs: list[tuple[str, str]]
    detail_ref: Optional[int] = None


def format_line(entry: LogEntry) -> str:
    parts = [f"time={entry.time}", f"node={entry.node}", f"kind={entry.kind}"]
    parts += [f"{k}={v}" for k, v in entry.attrs]
    if entry.detail_ref is not None:
        parts.append(f"detail={entry.detail_ref}")
    return " ".join(parts)


def parse_line(line: str) -> LogEntry:
    tokens = line.strip().split(" ")
    fields = []
    for tok in tokens:
        k, sep, v = tok.partition("=")
        if not sep or not k:
            raise LogFormatError(f"bad token {tok!r}")
        fields.append((k, v))
    if [k for k, _ in fields[:3]] != ["time", "node", "kind"]:
        raise LogFormatError(f"line must start with time/node/kind: {line!r}")
    detail: Optional[int] = None
    attrs = fields[3:]
    if attrs and attrs[-1][0] == "detail":
        detail = int(attrs[-1][1])
        attrs = attrs[:-1]
    return LogEntry(int(fields[0][1]), int(fields[1][1]), fields[2][1],
                    attrs, detail)


class RunLog:
    """Append-only sink; one line per entry, flushed per entry. Detail
    payloads go to a sibling file keyed by a unique id referenced from the
    parent line. With no sink attached, entries collect in memory."""

    def __init__(self, sink: Optional[IO[str]] = None,
                 detail_sink: Optional[IO[str]] = None):
        self.sink = sink
        self.detail_sink = detail_sink
        self.entries: list[LogEntry] = [] if sink is None else []
        self._keep = sink is None
        self._next_detail = 1

    def record(self, time: float, node: int, kind: str,
               attrs: Iterable[tuple[str, object]],
               detail: Optional[tuple[str, Sequence[object]]] = None) -> LogEntry:
        ref = None
        if detail is not None:
            ref = self._next_detail
            self._next_detail += 1
            if self.detail_sink is not None:
                key, values = detail
                self.detail_sink.write(
                    f"id={ref} key={key} "
                    f"values={','.join(str(v) for v in values)}\n")
                self.detail_sink.flush()
        entry = LogEntry(int(round(time)), node, kind,
                         [(k, str(v)) for k, v in attrs], ref)
        if self.sink is not None:
            self.sink.write(format_line(entry) + "\n")
            self.sink.flush()
        if self._keep:
            self.entries.append(entry)
        return entry


# ---------------------------------------------------------------------------
# derived statistics

def moving_success_rate(outcomes: Sequence[BlockOutcome],
                        window: int = WINDOW) -> list[tuple[int, float]]:
    """Trailing success rate; leading partial windows use the prefix."""
    if window < 1:
        raise ValueError("window must be >= 1")
    out = []
    running = 0
    for i, o in enumerate(outcomes):
        running += o.success
        if i >= window:
            running -= outcomes[i - window].success
        out.append((i, running / min(i + 1, window)))
    return out


def bandwidth_rows(bandwidth: dict) -> list[tuple[int, str, str, int, int]]:
    """Flatten the engine's (node, kind, direction) -> Bandwidth map."""
    return sorted((node, kind, direction, bw.bytes, bw.count)
                  for (node, kind, direction), bw in bandwidth.items())


@dataclass(slots=True)
class NodeSummary:
    node: int
    blocks: int
    successes: int
    avg_rate: float  # fraction in [0, 1]


@dataclass(slots=True)
class RunSummary:
    a: NodeSummary
    b: NodeSummary

    @property
    def gap_pp(self) -> float:
        """|rate_a - rate_b| in percentage points."""
        return abs(self.a.avg_rate - self.b.avg_rate) * 100.0


def _node_summary(outcomes: Sequence[BlockOutcome], first_n: int) -> NodeSummary:
    if not outcomes:
        raise InsufficientDataError("node observed zero blocks")
    window = outcomes[:first_n]
    succ = sum(o.success for o in window)
    return NodeSummary(window[0].node_id, len(window), succ,
                       succ / len(window))


def summarize(outcomes_a: Sequence[BlockOutcome],
              outcomes_b: Sequence[BlockOutcome],
              first_n: int = 750) -> RunSummary:
    """Success counts and rates over each node's first ``first_n`` observed
    blocks, plus their gap in percentage points."""
    return RunSummary(_node_summary(outcomes_a, first_n),
                      _node_summary(outcomes_b, first_n))


# ---------------------------------------------------------------------------
# CSV artifacts

def write_outcomes(path: Path, outcomes: Iterable[BlockOutcome]) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["node", "block_time", "block_id", "protocol", "success",
                    "missing", "round_trips", "bytes_down", "bytes_up"])
        for o in outcomes:
            w.writerow([o.node_id, o.block_time, o.block_id.hex(), o.protocol,
                        int(o.success), o.missing_count, o.round_trips,
                        o.bytes_down, o.bytes_up])


def write_rates(path: Path, rates: dict[int, list[tuple[int, float]]]) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["node", "block_time", "rate36"])
        for node in sorted(rates):
            for block_time, rate in rates[node]:
                w.writerow([node, block_time, f"{rate:.6f}"])


def write_bandwidth(path: Path, bandwidth: dict) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["node", "kind", "direction", "bytes", "count"])
        for row in bandwidth_rows(bandwidth):
            w.writerow(row)


def write_summary(path: Path, scenario: str, summary: RunSummary) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["scenario", "node", "blocks", "successes", "avg_rate"])
        for ns in (summary.a, summary.b):
            w.writerow([scenario, ns.node, ns.blocks, ns.successes,
                        f"{ns.avg_rate * 100:.2f}"])
        w.writerow([scenario, "gap_pp", "", "", f"{summary.gap_pp:.2f}"])


def read_summary(path: Path) -> tuple[str, dict[str, dict[str, float]]]:
    """Parse a summary.csv back into {node-or-gap_pp: fields}."""
    rows: dict[str, dict[str, float]] = {}
    scenario = ""
    with open(path, newline="") as f:
        for row in csv.DictReader(f):
            scenario = row["scenario"]
            if row["node"] == "gap_pp":
                rows["gap_pp"] = {"avg_rate": float(row["avg_rate"])}
            else:
                rows[row["node"]] = {
                    "blocks": float(row["blocks"]),
                    "successes": float(row["successes"]),
                    "avg_rate": float(row["avg_rate"]),
                }
    if not rows:
        raise LogFormatError(f"{path} holds no summary rows")
    return scenario, rows
