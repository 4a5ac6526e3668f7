"""Deterministic discrete-event engine: random directed topologies, latency
transport, churn schedules, and the transaction-arrival and block-mining
processes. All times are simulation milliseconds."""

from __future__ import annotations

import heapq
import random
from dataclasses import dataclass, field
from typing import Callable, Optional

from . import relay
from .relay import GRAPHENE, Message, NodeState, TxMempoolSync, handle_message
from .txpool import Transaction


class TopologyError(ValueError):
    """Bad topology parameters."""


# ---------------------------------------------------------------------------
# topology

@dataclass(slots=True)
class Topology:
    nodes: list[int]
    out: dict[int, list[int]]          # directed adjacency, outbound lists
    latency: dict[tuple[int, int], float]  # per directed edge, ms

    def inbound(self, node: int) -> list[int]:
        return [u for u in self.nodes if node in self.out[u]]

    def edge_latency(self, frm: int, to: int) -> float:
        lat = self.latency.get((frm, to))
        if lat is None:
            lat = self.latency[(to, frm)]
        return lat


def _weakly_connected(nodes: list[int], out: dict[int, list[int]]) -> bool:
    undirected: dict[int, set[int]] = {n: set() for n in nodes}
    for u, targets in out.items():
        for v in targets:
            undirected[u].add(v)
            undirected[v].add(u)
    seen = {nodes[0]}
    stack = [nodes[0]]
    while stack:
        for v in undirected[stack.pop()]:
            if v not in seen:
                seen.add(v)
                stack.append(v)
    return len(seen) == len(nodes)


def build_topology(n: int, out_degree_range: tuple[int, int],
                   latency_range_ms: tuple[float, float],
                   seed: int) -> Topology:
    """Each node picks a uniform out-degree and distinct random targets;
    regenerated from the seed until the graph is weakly connected."""
    lo, hi = out_degree_range
    if not 1 <= lo <= hi:
        raise TopologyError(f"bad out_degree_range {out_degree_range}")
    if n <= hi:
        raise TopologyError(f"need more than {hi} nodes, got {n}")
    rng = random.Random(seed)
    nodes = list(range(n))
    while True:
        out: dict[int, list[int]] = {}
        for u in nodes:
            deg = rng.randint(lo, hi)
            out[u] = rng.sample([v for v in nodes if v != u], deg)
        if _weakly_connected(nodes, out):
            break
    lat_lo, lat_hi = latency_range_ms
    latency = {(u, v): rng.uniform(lat_lo, lat_hi)
               for u in nodes for v in out[u]}
    return Topology(nodes, out, latency)


# ---------------------------------------------------------------------------
# churn

@dataclass(frozen=True, slots=True)
class ChurnSchedule:
    period_ms: float
    up_fraction: float
    phase_ms: float = 0.0


def churn_state(schedule: Optional[ChurnSchedule], t: float) -> bool:
    """True while online: ((t + phase) mod period) < up_fraction * period.
    A missing schedule means always online."""
    if schedule is None:
        return True
    return ((t + schedule.phase_ms) % schedule.period_ms
            < schedule.up_fraction * schedule.period_ms)


def first_down_time(schedule: ChurnSchedule) -> float:
    """Earliest t >= 0 at which the down-window begins."""
    up_ms = schedule.up_fraction * schedule.period_ms
    return (up_ms - schedule.phase_ms) % schedule.period_ms


# ---------------------------------------------------------------------------
# arrival processes

@dataclass(slots=True)
class ArrivalConfig:
    tx_rate_per_s: float = 1.0
    block_interval_s: float = 30.0
    time_scale: float = 1.0          # documentation of the compression only
    blocks_to_run: int = 750
    max_block_txs: int = 2000
    min_tx_age_ms: float = 1000.0
    tx_size_range: tuple[int, int] = (500, 800)
    tx_fee_range: tuple[int, int] = (1, 1000)
    tx_parent_prob: float = 0.2

    def validate(self) -> None:
        if self.tx_rate_per_s <= 0:
            raise ValueError("tx_rate_per_s must be positive")
        if self.block_interval_s <= 0:
            raise ValueError("block_interval_s must be positive")
        if self.blocks_to_run < 1:
            raise ValueError("blocks_to_run must be >= 1")
        if self.max_block_txs < 1:
            raise ValueError("max_block_txs must be >= 1")


# ---------------------------------------------------------------------------
# event fabric

DELIVER = "deliver"
NODE_DOWN = "node_down"
MINE = "mine"
TX_ARRIVAL = "tx_arrival"


@dataclass(slots=True)
class Bandwidth:
    bytes: int = 0
    count: int = 0


class World:
    """One simulation run: an event heap over a fixed node population.

    Deterministic in (construction arguments, seed): a single Random drives
    every stochastic choice and events execute in (time, seq) order.
    """

    def __init__(self, topology: Topology, nodes: dict[int, NodeState],
                 miner_id: int, arrivals: ArrivalConfig,
                 schedules: Optional[dict[int, ChurnSchedule]] = None,
                 seed: int = 0,
                 log: Optional[Callable[..., None]] = None):
        arrivals.validate()
        self.topology = topology
        self.nodes = nodes
        self.miner_id = miner_id
        self.arrivals = arrivals
        self.schedules = dict(schedules or {})
        self.rng = random.Random(seed)
        self.log = log
        self.now = 0.0
        self._heap: list[tuple[float, int, str, tuple]] = []
        self._seq = 0
        self.blocks_mined = 0
        self.events_run = 0
        self.dropped = 0
        # (node, message kind, "up"|"down") -> Bandwidth
        self.bandwidth: dict[tuple[int, str, str], Bandwidth] = {}
        for node in nodes.values():
            node.set_peers(topology.out[node.node_id],
                           topology.inbound(node.node_id))

    # -- scheduling -------------------------------------------------------

    def schedule(self, delay_ms: float, tag: str, payload: tuple) -> None:
        self._seq += 1
        heapq.heappush(self._heap,
                       (self.now + delay_ms, self._seq, tag, payload))

    def online(self, node_id: int, t: Optional[float] = None) -> bool:
        return churn_state(self.schedules.get(node_id),
                           self.now if t is None else t)

    def _log(self, node_id: int, kind: str, attrs) -> None:
        if self.log is not None:
            self.log(self.now, node_id, kind, attrs, None)

    def _account(self, node_id: int, msg: Message, direction: str) -> None:
        key = (node_id, relay.message_kind(msg), direction)
        bw = self.bandwidth.get(key)
        if bw is None:
            bw = self.bandwidth[key] = Bandwidth()
        bw.bytes += relay.wire_size(msg)
        bw.count += 1

    def send(self, frm: int, to: int, msg: Message) -> None:
        self._account(frm, msg, "up")
        self.schedule(self.topology.edge_latency(frm, to),
                      DELIVER, (to, frm, msg))

    def _dispatch(self, node: NodeState, frm: int, msg: Message) -> None:
        for peer, out in handle_message(node, frm, msg, self.now):
            self.send(node.node_id, peer, out)

    # -- process seeding --------------------------------------------------

    def spawn_processes(self) -> None:
        self.schedule(self._tx_gap(), TX_ARRIVAL, ())
        self.schedule(self._block_gap(), MINE, ())
        for node_id, sched in self.schedules.items():
            self.schedule(first_down_time(sched), NODE_DOWN, (node_id,))

    def _tx_gap(self) -> float:
        return self.rng.expovariate(self.arrivals.tx_rate_per_s) * 1000.0

    def _block_gap(self) -> float:
        return self.rng.expovariate(1.0 / self.arrivals.block_interval_s) * 1000.0

    # -- event handlers ---------------------------------------------------

    def _on_deliver(self, to: int, frm: int, msg: Message) -> None:
        if not self.online(to):
            self.dropped += 1
            self._log(to, "deliver_dropped",
                      [("from", frm), ("msg", relay.message_kind(msg))])
            return
        node = self.nodes[to]
        self._account(to, msg, "down")
        if node.on_incoming():
            self._dispatch(node, to, TxMempoolSync())
        self._dispatch(node, frm, msg)

    def _on_node_down(self, node_id: int) -> None:
        self.nodes[node_id].clear_inflight()
        self._log(node_id, "node_down", [])
        # the delivery gate reads the closed-form schedule, so the chain can
        # stop once the block budget is mined and the heap is draining
        if self.blocks_mined < self.arrivals.blocks_to_run:
            self.schedule(self.schedules[node_id].period_ms,
                          NODE_DOWN, (node_id,))

    def _make_tx(self, origin: NodeState) -> Transaction:
        cfg = self.arrivals
        parents: tuple = ()
        if (cfg.tx_parent_prob > 0 and origin.mempool.entries
                and self.rng.random() < cfg.tx_parent_prob):
            parents = (self.rng.choice(list(origin.mempool.entries)),)
        return Transaction(
            id=self.rng.randbytes(32),
            size_bytes=self.rng.randint(*cfg.tx_size_range),
            fee=self.rng.randint(*cfg.tx_fee_range),
            parents=parents,
            created_at=self.now)

    def _on_tx_arrival(self) -> None:
        if self.blocks_mined >= self.arrivals.blocks_to_run:
            return  # arrivals cease once the run's block budget is mined
        online = [n for n in self.topology.nodes if self.online(n)]
        if online:
            origin = self.nodes[self.rng.choice(online)]
            tx = self._make_tx(origin)
            for peer, msg in relay.originate_tx(origin, tx):
                self.send(origin.node_id, peer, msg)
        self.schedule(self._tx_gap(), TX_ARRIVAL, ())

    def _on_mine(self) -> None:
        if self.blocks_mined >= self.arrivals.blocks_to_run:
            return
        miner = self.nodes[self.miner_id]
        cutoff = self.now - self.arrivals.min_tx_age_ms
        block = miner.mempool.assemble_block(
            self.arrivals.max_block_txs, miner.tip_id, miner.tip_height + 1,
            eligible=lambda tx: tx.created_at <= cutoff)
        if block.txs:
            self.blocks_mined += 1
            self._log(self.miner_id, "block_mined",
                      [("block", block.block_id.hex()[:16]),
                       ("height", block.height), ("txs", len(block.txs))])
            for peer, msg in miner._accept_block(block, None, self.now):
                self.send(self.miner_id, peer, msg)
        self.schedule(self._block_gap(), MINE, ())

    # -- main loop --------------------------------------------------------

    def run(self, until_ms: Optional[float] = None) -> None:
        """Drain the heap: arrival/mining processes stop scheduling once the
        block budget is mined, so the run terminates when in-flight traffic
        settles. ``until_ms`` stops early (used by calibration pre-runs)."""
        heap = self._heap
        while heap:
            if until_ms is not None and heap[0][0] > until_ms:
                break
            self.now, _, tag, payload = heapq.heappop(heap)
            self.events_run += 1
            if tag == DELIVER:
                self._on_deliver(*payload)
            elif tag == TX_ARRIVAL:
                self._on_tx_arrival()
            elif tag == MINE:
                self._on_mine()
            elif tag == NODE_DOWN:
                self._on_node_down(*payload)
            else:  # pragma: no cover
                raise RuntimeError(f"unknown event tag {tag}")


def run(world: World) -> World:
    """Seed the arrival/mining/churn processes and drain the event loop."""
    world.spawn_processes()
    world.run()
    return world
