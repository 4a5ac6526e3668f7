"""Experiment runner CLI: execute scenarios to CSV artifacts, compare runs,
list presets."""

from __future__ import annotations

import argparse
import csv
import random
import sys
from dataclasses import replace
from pathlib import Path
from typing import IO, Optional

from . import metrics, netsim
from .config import PRESETS, ConfigError, ScenarioConfig, preset
from .netsim import ArrivalConfig, ChurnSchedule, Topology, World, build_topology
from .relay import GrapheneParams, NodeState
from .txpool import Transaction

MINER = 0

#: calibration pre-run length (simulated) and the timer period being targeted
CALIBRATION_MS = 60_000.0
SYNC_PERIOD_S = 600.0
MIN_TRIGGER = 50


class RunDirError(ValueError):
    """A compare target is missing or holds an incompatible summary."""


# ---------------------------------------------------------------------------
# world construction

def _preload_mempools(cfg: ScenarioConfig, nodes: dict[int, NodeState],
                      seed: int) -> None:
    """Seed warm nodes with a shared unconfirmed set; a joining node instead
    starts from a stale set no block will ever reference."""
    rng = random.Random((seed << 1) ^ 0x77A12)

    def batch(count):
        return [Transaction(id=rng.randbytes(32),
                            size_bytes=rng.randint(500, 800),
                            fee=rng.randint(1, 1000), created_at=0.0)
                for _ in range(count)]

    warm = batch(cfg.warm_mempool_size)
    stale = batch(cfg.stale_mempool_size)
    for node in nodes.values():
        if node.node_id == cfg.joining_node:
            for tx in stale:
                node.mempool.insert(tx)
        else:
            for tx in warm:
                node.mempool.insert(tx)


def build_world(cfg: ScenarioConfig, log: Optional[metrics.RunLog] = None,
                trigger_limit: Optional[int] = None) -> World:
    if cfg.joining_node == MINER or MINER in cfg.churn:
        raise ConfigError(f"node {MINER} is the miner and must stay warm "
                          f"and online")
    topology = build_topology(cfg.n_nodes, cfg.out_degree_range,
                              cfg.latency_ms_range, cfg.seed)
    limit = trigger_limit if trigger_limit is not None else (1 << 30)
    log_fn = log.record if log is not None else None
    nodes = {
        i: NodeState(
            i, relay_mode=cfg.relay_mode,
            sync_enabled=cfg.sync_enabled_for(i),
            trigger_limit=limit,
            graphene_model=cfg.graphene_model,
            graphene_params=GrapheneParams(),
            graphene_threshold=cfg.graphene_threshold,
            sync_outbound_only=cfg.sync_outbound_only,
            sync_filter_seen=cfg.sync_filter_seen,
            score_mode=cfg.score_mode,
            log=log_fn)
        for i in range(cfg.n_nodes)
    }
    _preload_mempools(cfg, nodes, cfg.seed)
    schedules = {
        n: ChurnSchedule(spec.period_s * 1000.0, spec.up_fraction,
                         spec.phase_s * 1000.0)
        for n, spec in cfg.churn.items()
    }
    arrivals = ArrivalConfig(
        tx_rate_per_s=cfg.tx_rate_per_s,
        block_interval_s=cfg.block_interval_s,
        time_scale=cfg.time_scale,
        blocks_to_run=cfg.blocks_to_run,
        max_block_txs=cfg.max_block_txs,
        min_tx_age_ms=cfg.min_tx_age_ms,
        tx_parent_prob=cfg.tx_parent_prob)
    return World(topology, nodes, MINER, arrivals, schedules,
                 seed=cfg.seed, log=log_fn)


def calibrate_trigger(cfg: ScenarioConfig) -> int:
    """Pre-run 60 simulated seconds with the timer disarmed, measure the
    mean incoming message rate at the reference node, and size the counter
    so it fires about every (600 / time_scale) seconds."""
    world = build_world(cfg)
    world.spawn_processes()
    world.run(until_ms=CALIBRATION_MS)
    incoming = sum(bw.count for (node, _, direction), bw
                   in world.bandwidth.items()
                   if node == cfg.stable_node and direction == "down")
    rate_per_s = incoming / (CALIBRATION_MS / 1000.0)
    return max(MIN_TRIGGER,
               round(rate_per_s * SYNC_PERIOD_S / cfg.time_scale))


# ---------------------------------------------------------------------------
# experiment execution

def run_experiment(cfg: ScenarioConfig, out_dir: Path) -> World:
    cfg.validate()
    trigger = cfg.trigger_limit
    if trigger is None and cfg.sync_nodes != "none":
        trigger = calibrate_trigger(cfg)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "run.log", "w") as sink, \
            open(out_dir / "run.detail.log", "w") as detail:
        log = metrics.RunLog(sink, detail)
        world = build_world(cfg, log, trigger)
        netsim.run(world)
    resolved = replace(cfg, trigger_limit=trigger)
    resolved.dump(out_dir / "config.json")
    all_outcomes = [o for i in sorted(world.nodes)
                    for o in world.nodes[i].outcomes]
    metrics.write_outcomes(out_dir / "outcomes.csv", all_outcomes)
    metrics.write_rates(out_dir / "rates.csv", {
        i: metrics.moving_success_rate(world.nodes[i].outcomes)
        for i in sorted(world.nodes) if world.nodes[i].outcomes})
    metrics.write_bandwidth(out_dir / "bandwidth.csv", world.bandwidth)
    summary = metrics.summarize(world.nodes[cfg.stable_node].outcomes,
                                world.nodes[cfg.study_node].outcomes)
    metrics.write_summary(out_dir / "summary.csv", cfg.name, summary)
    return world


def compare_runs(dir_a: Path, dir_b: Path, out: IO[str]) -> None:
    """Per-node rate deltas and the gap change between two summary.csv."""
    try:
        name_a, rows_a = metrics.read_summary(dir_a / "summary.csv")
        name_b, rows_b = metrics.read_summary(dir_b / "summary.csv")
    except OSError as e:
        raise RunDirError(f"cannot read summary: {e}") from e
    if set(rows_a) != set(rows_b):
        raise RunDirError(
            f"summaries are not comparable: nodes {sorted(rows_a)} in "
            f"{dir_a} vs {sorted(rows_b)} in {dir_b}")
    w = csv.writer(out)
    w.writerow(["metric", name_a or "run_a", name_b or "run_b", "delta"])
    for key in sorted(k for k in rows_a if k != "gap_pp"):
        ra = rows_a[key]["avg_rate"]
        rb = rows_b[key]["avg_rate"]
        w.writerow([f"node_{key}_rate", f"{ra:.2f}", f"{rb:.2f}",
                    f"{rb - ra:.2f}"])
    gap_a = rows_a["gap_pp"]["avg_rate"]
    gap_b = rows_b["gap_pp"]["avg_rate"]
    w.writerow(["gap_pp", f"{gap_a:.2f}", f"{gap_b:.2f}",
                f"{gap_a - gap_b:.2f}"])
    rel = (gap_a - gap_b) / gap_a * 100.0 if gap_a else 0.0
    w.writerow(["gap_relative_reduction_pct", "", "", f"{rel:.2f}"])


# ---------------------------------------------------------------------------
# argument handling

def _apply_overrides(cfg: ScenarioConfig, args) -> ScenarioConfig:
    updates: dict = {}
    if args.seed is not None:
        updates["seed"] = args.seed
    if args.blocks is not None:
        updates["blocks_to_run"] = args.blocks
    if args.sync is not None:
        updates["sync_nodes"] = "all" if args.sync == "on" else "none"
    if args.protocol is not None:
        updates["relay_mode"] = args.protocol
    if args.graphene_model is not None:
        updates["graphene_model"] = args.graphene_model
    cfg = replace(cfg, **updates)
    cfg.validate()
    return cfg


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="churnsim",
        description="Deterministic simulator of block and transaction "
                    "propagation under node churn.")
    sub = p.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="execute one scenario")
    src = run_p.add_mutually_exclusive_group(required=True)
    src.add_argument("--config", type=Path, help="scenario JSON file")
    src.add_argument("--preset", choices=sorted(PRESETS),
                     help="built-in scenario")
    run_p.add_argument("--out-dir", type=Path, default=None,
                       help="artifact directory (default runs/<name>)")
    run_p.add_argument("--seed", type=int, default=None)
    run_p.add_argument("--blocks", type=int, default=None,
                       help="override blocks_to_run")
    run_p.add_argument("--sync", choices=["on", "off"], default=None,
                       help="enable mempool sync on all nodes / no nodes")
    run_p.add_argument("--protocol",
                       choices=["legacy", "compact", "graphene"], default=None)
    run_p.add_argument("--graphene-model", choices=["threshold", "iblt"],
                       default=None)

    cmp_p = sub.add_parser("compare", help="compare two run directories")
    cmp_p.add_argument("dir_a", type=Path)
    cmp_p.add_argument("dir_b", type=Path)
    cmp_p.add_argument("--out", type=Path, default=None,
                       help="comparison CSV path (default stdout)")

    sub.add_parser("presets", help="list built-in scenarios")
    return p


def _cmd_run(args) -> int:
    if args.config is not None:
        cfg = ScenarioConfig.load(args.config)
    else:
        cfg = preset(args.preset)
    cfg = _apply_overrides(cfg, args)
    out_dir = args.out_dir if args.out_dir is not None else Path("runs") / cfg.name
    world = run_experiment(cfg, out_dir)
    print(f"{cfg.name}: {world.blocks_mined} blocks, "
          f"{world.events_run} events, artifacts in {out_dir}")
    return 0


def _cmd_compare(args) -> int:
    if args.out is not None:
        with open(args.out, "w", newline="") as f:
            compare_runs(args.dir_a, args.dir_b, f)
    else:
        compare_runs(args.dir_a, args.dir_b, sys.stdout)
    return 0


def _cmd_presets(args) -> int:
    for name in sorted(PRESETS):
        d = PRESETS[name]
        print(f"{name}: {d['n_nodes']} nodes, {d['blocks_to_run']} blocks, "
              f"relay={d['relay_mode']}, sync={d.get('sync_nodes', 'none')}")
    return 0


def main(argv: Optional[list[str]] = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "compare":
            return _cmd_compare(args)
        return _cmd_presets(args)
    except (ConfigError, RunDirError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # noqa: BLE001 - CLI boundary
        print(f"runtime error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
