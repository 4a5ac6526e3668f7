"""Per-node protocol logic: tx gossip, legacy/compact/Graphene block relay,
and the prioritized mempool-sync protocol, as a message-in/messages-out
state machine."""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

from .sketches import BloomFilter, Iblt, bloom_build
from .txpool import (ACCEPTED, GENESIS_ID, Block, Mempool, Transaction, TxId)

SHORT_ID_BYTES = 6

LEGACY = "legacy"
COMPACT = "compact"
GRAPHENE = "graphene"

THRESHOLD_MODEL = "threshold"
IBLT_MODEL = "iblt"


class MissingTxError(KeyError):
    """A block transaction could not be resolved from the given store."""


class IndexOutOfRangeError(IndexError):
    """A requested block transaction index is out of range."""


class EmptyBlockError(ValueError):
    """Graphene encoding requires a nonempty block."""


# ---------------------------------------------------------------------------
# wire encodings

def short_id(txid: TxId, salt: int, width: int = SHORT_ID_BYTES) -> bytes:
    """Keyed-hash truncation of a full txid under a per-block salt."""
    return hashlib.blake2b(
        txid, digest_size=width,
        key=salt.to_bytes(8, "little", signed=False)).digest()


@dataclass(frozen=True, slots=True)
class CompactBlock:
    block_id: bytes
    height: int
    prev_id: bytes
    salt: int
    short_ids: tuple[bytes, ...]
    prefilled: tuple[tuple[int, Transaction], ...]

    @property
    def tx_count(self) -> int:
        return len(self.short_ids) + len(self.prefilled)

    @property
    def short_id_width(self) -> int:
        return len(self.short_ids[0]) if self.short_ids else SHORT_ID_BYTES


@dataclass(frozen=True, slots=True)
class GrapheneParams:
    fpr: float = 0.001
    cell_multiplier: float = 1.5
    min_cells: int = 30
    diff_slack: int = 10


@dataclass(frozen=True, slots=True)
class GrapheneBlock:
    block_id: bytes
    height: int
    prev_id: bytes
    tx_count: int
    filter: BloomFilter
    sketch: Iblt
    # simulation-side ground truth, used only by the threshold failure model
    # and never priced into the wire-size model
    block: Optional[Block] = None


# ---------------------------------------------------------------------------
# messages

@dataclass(frozen=True, slots=True)
class Inv:
    ids: tuple[TxId, ...]


@dataclass(frozen=True, slots=True)
class GetData:
    ids: tuple[TxId, ...]


@dataclass(frozen=True, slots=True)
class TxMsg:
    tx: Transaction


@dataclass(frozen=True, slots=True)
class BlockAnnounce:
    block_id: bytes


@dataclass(frozen=True, slots=True)
class GetBlock:
    block_id: bytes


@dataclass(frozen=True, slots=True)
class BlockMsg:
    block: Block
    txs: tuple[Transaction, ...]


@dataclass(frozen=True, slots=True)
class CmpctBlock:
    cb: CompactBlock


@dataclass(frozen=True, slots=True)
class GetBlockTxn:
    block_id: bytes
    indexes: tuple[int, ...]


@dataclass(frozen=True, slots=True)
class BlockTxn:
    block_id: bytes
    txs: tuple[Transaction, ...]


@dataclass(frozen=True, slots=True)
class GrapheneMsg:
    gb: GrapheneBlock


@dataclass(frozen=True, slots=True)
class GetGrapheneLarger:
    block_id: bytes
    cell_count: int


@dataclass(frozen=True, slots=True)
class GetGrapheneTxn:
    block_id: bytes
    ids: tuple[TxId, ...]


@dataclass(frozen=True, slots=True)
class GrapheneTxn:
    block_id: bytes
    txs: tuple[Transaction, ...]


@dataclass(frozen=True, slots=True)
class TxMempoolSync:
    pass


Message = (Inv | GetData | TxMsg | BlockAnnounce | GetBlock | BlockMsg
           | CmpctBlock | GetBlockTxn | BlockTxn | GrapheneMsg
           | GetGrapheneLarger | GetGrapheneTxn | GrapheneTxn | TxMempoolSync)


def wire_size(msg: Message) -> int:
    """Authoritative byte-size model for every message variant."""
    if isinstance(msg, Inv):
        return 8 + 32 * len(msg.ids)
    if isinstance(msg, GetData):
        return 8 + 4 * len(msg.ids)
    if isinstance(msg, TxMsg):
        return msg.tx.size_bytes
    if isinstance(msg, BlockMsg):
        return 88 + sum(t.size_bytes for t in msg.txs)
    if isinstance(msg, CmpctBlock):
        return (88 + 8 + SHORT_ID_BYTES * len(msg.cb.short_ids)
                + sum(t.size_bytes for _, t in msg.cb.prefilled))
    if isinstance(msg, GetBlockTxn):
        return 40 + 4 * len(msg.indexes)
    if isinstance(msg, BlockTxn):
        return 40 + sum(t.size_bytes for t in msg.txs)
    if isinstance(msg, GrapheneMsg):
        return 88 + msg.gb.filter.size_bytes + msg.gb.sketch.size_bytes
    if isinstance(msg, GetGrapheneLarger):
        return 44
    if isinstance(msg, GetGrapheneTxn):
        return 40 + 32 * len(msg.ids)
    if isinstance(msg, GrapheneTxn):
        return 40 + sum(t.size_bytes for t in msg.txs)
    if isinstance(msg, (BlockAnnounce, GetBlock)):
        return 40
    if isinstance(msg, TxMempoolSync):
        return 0  # self-injected, never on the wire
    raise TypeError(f"unpriced message type {type(msg).__name__}")


def message_kind(msg: Message) -> str:
    return type(msg).__name__


# ---------------------------------------------------------------------------
# compact block encode/decode

def make_compact_block(block: Block, txs: dict[TxId, Transaction], salt: int,
                       width: int = SHORT_ID_BYTES) -> CompactBlock:
    """Encode a block as one prefilled tx plus short ids in block order."""
    missing = [t for t in block.txs if t not in txs]
    if missing:
        raise MissingTxError(missing[0])
    prefilled: tuple[tuple[int, Transaction], ...] = ()
    if block.txs:
        prefilled = ((0, txs[block.txs[0]]),)
    short_ids = tuple(short_id(t, salt, width) for t in block.txs[1:])
    return CompactBlock(block.block_id, block.height, block.prev_id,
                        salt, short_ids, prefilled)


@dataclass(frozen=True, slots=True)
class Reconstructed:
    block: Block


@dataclass(frozen=True, slots=True)
class NeedTxn:
    indexes: tuple[int, ...]
    #: block positions resolved so far; None at each needed index
    partial: tuple[Optional[TxId], ...]


def reconstruct_compact(cb: CompactBlock, mempool: Mempool
                        ) -> Reconstructed | NeedTxn:
    """Match short ids against the mempool; unmatched or ambiguous
    positions are reported for a getblocktxn round trip."""
    width = cb.short_id_width
    candidates: dict[bytes, list[TxId]] = {}
    for txid in mempool.entries:
        candidates.setdefault(short_id(txid, cb.salt, width), []).append(txid)
    prefilled = dict(cb.prefilled)
    resolved: list[Optional[TxId]] = []
    need: list[int] = []
    sid_iter = iter(cb.short_ids)
    for pos in range(cb.tx_count):
        if pos in prefilled:
            resolved.append(prefilled[pos].id)
            continue
        matches = candidates.get(next(sid_iter))
        if matches and len(matches) == 1:
            resolved.append(matches[0])
        else:
            resolved.append(None)
            need.append(pos)
    if need:
        return NeedTxn(tuple(need), tuple(resolved))
    return Reconstructed(Block(cb.block_id, cb.height, cb.prev_id,
                               tuple(resolved)))


def serve_block_txn(block: Block, txs: dict[TxId, Transaction],
                    indexes: Iterable[int]) -> list[Transaction]:
    out = []
    for i in indexes:
        if not 0 <= i < len(block.txs):
            raise IndexOutOfRangeError(i)
        out.append(txs[block.txs[i]])
    return out


def complete_compact(cb: CompactBlock, need: NeedTxn,
                     served: Iterable[Transaction]) -> Block:
    """Merge a blocktxn answer into a partial reconstruction."""
    resolved = list(need.partial)
    for pos, tx in zip(need.indexes, served):
        resolved[pos] = tx.id
    if any(t is None for t in resolved):
        raise MissingTxError("blocktxn did not cover every needed index")
    return Block(cb.block_id, cb.height, cb.prev_id, tuple(resolved))


# ---------------------------------------------------------------------------
# graphene encode/decode

def _graphene_seed(block_id: bytes) -> int:
    return int.from_bytes(block_id[:8], "little")


def graphene_cell_count(receiver_mempool_size: int,
                        params: GrapheneParams) -> int:
    est_diff = max(1, math.ceil(params.fpr * receiver_mempool_size)
                   ) + params.diff_slack
    return max(params.min_cells,
               math.ceil(params.cell_multiplier * est_diff))


def make_graphene(block: Block, receiver_mempool_size: int,
                  params: GrapheneParams = GrapheneParams(),
                  cell_count: Optional[int] = None) -> GrapheneBlock:
    if not block.txs:
        raise EmptyBlockError("cannot Graphene-encode an empty block")
    seed = _graphene_seed(block.block_id)
    bloom = bloom_build(block.txs, params.fpr, seed)
    if cell_count is None:
        cell_count = graphene_cell_count(receiver_mempool_size, params)
    sketch = Iblt(cell_count, seed=seed)
    for t in block.txs:
        sketch.insert(t)
    return GrapheneBlock(block.block_id, block.height, block.prev_id,
                         len(block.txs), bloom, sketch, block)


@dataclass(frozen=True, slots=True)
class DecodeFail:
    cell_count: int


@dataclass(frozen=True, slots=True)
class NeedTx:
    ids: tuple[TxId, ...]
    #: block txids already present locally
    known: frozenset[TxId]


def reconstruct_graphene(gb: GrapheneBlock, mempool: Mempool
                         ) -> Reconstructed | DecodeFail | NeedTx:
    """Filter the mempool through the block's Bloom filter, subtract the
    block's IBLT from a local one over the candidates, and peel.

    Reconstructed blocks order their txs by ascending txid; sketches carry
    no ordering.
    """
    candidates = [t for t in mempool.entries if t in gb.filter]
    local = Iblt(gb.sketch.cell_count, gb.sketch.hash_count, gb.sketch.seed)
    for t in candidates:
        local.insert(t)
    decoded = local.subtract(gb.sketch).decode()
    if decoded is None:
        return DecodeFail(gb.sketch.cell_count)
    extras, missing = decoded  # candidate-only ids, block-only ids
    block_set = (set(candidates) - extras) | missing
    absent = sorted(t for t in missing if t not in mempool.entries)
    if absent:
        return NeedTx(tuple(absent), frozenset(block_set - set(absent)))
    return Reconstructed(Block(gb.block_id, gb.height, gb.prev_id,
                               tuple(sorted(block_set))))


def graphene_fallback(prior_cells: int) -> int:
    """Doubling rule for the cell count after a decode failure."""
    return 2 * prior_cells


def graphene_threshold_outcome(block: Block, mempool: Mempool,
                               threshold: float = 0.15) -> bool:
    """The measurement-driven failure model: a Graphene block fails iff the
    fraction of its txs absent from the receiving mempool exceeds the
    threshold. Returns True for success."""
    if not block.txs:
        raise EmptyBlockError("threshold outcome needs a nonempty block")
    missing = sum(1 for t in block.txs if t not in mempool.entries)
    return missing / len(block.txs) <= threshold


# ---------------------------------------------------------------------------
# prioritized mempool sync

def falafel_count(mempool_size: int) -> int:
    """Number of ids advertised: the larger of the top 10% and the top
    1000, capped at the mempool size."""
    return min(mempool_size, max(math.ceil(0.10 * mempool_size), 1000))


def falafel_select(mempool: Mempool) -> list[TxId]:
    return mempool.top_ranked(falafel_count(len(mempool)))


# ---------------------------------------------------------------------------
# per-node state machine

@dataclass(slots=True)
class BlockOutcome:
    node_id: int
    block_time: int
    block_id: bytes
    protocol: str
    success: bool
    missing_count: int
    round_trips: int
    bytes_down: int
    bytes_up: int


@dataclass(slots=True)
class _PendingCompact:
    cb: CompactBlock
    need: NeedTxn
    sender: int
    bytes_down: int
    bytes_up: int


@dataclass(slots=True)
class _PendingGraphene:
    gb: GrapheneBlock
    sender: int
    bytes_down: int
    bytes_up: int
    doublings: int = 0
    known: frozenset[TxId] = frozenset()
    need: tuple[TxId, ...] = ()
    threshold_ok: Optional[bool] = None
    missing_count: int = 0


class NodeState:
    """Protocol state of one simulated node.

    ``handle_message`` is a pure transition: it mutates this state and
    returns the messages to send, but performs no I/O and knows nothing
    about the event loop.
    """

    def __init__(self, node_id: int, relay_mode: str = COMPACT,
                 sync_enabled: bool = False, trigger_limit: int = 1 << 30,
                 graphene_model: str = IBLT_MODEL,
                 graphene_params: GrapheneParams = GrapheneParams(),
                 graphene_threshold: float = 0.15,
                 sync_outbound_only: bool = False,
                 sync_filter_seen: bool = False,
                 score_mode: Optional[str] = None,
                 log: Optional[Callable[..., None]] = None):
        self.node_id = node_id
        self.relay_mode = relay_mode
        self.sync_enabled = sync_enabled
        self.trigger_limit = trigger_limit
        self.graphene_model = graphene_model
        self.graphene_params = graphene_params
        self.graphene_threshold = graphene_threshold
        self.sync_outbound_only = sync_outbound_only
        self.sync_filter_seen = sync_filter_seen
        self.log = log
        self.mempool = Mempool(**({"score_mode": score_mode} if score_mode else {}))
        self.tip_id: bytes = GENESIS_ID
        self.tip_height = 0
        self.known_blocks: dict[bytes, Block] = {}
        self.tx_store: dict[TxId, Transaction] = {}
        self.pending_compact: dict[bytes, _PendingCompact] = {}
        self.pending_graphene: dict[bytes, _PendingGraphene] = {}
        self.requested_blocks: set[bytes] = set()
        self.inbound: list[int] = []
        self.outbound: list[int] = []
        self.peers: list[int] = []
        self.seen_inventory: dict[int, set[TxId]] = {}
        self.requested: set[TxId] = set()
        self.msg_counter = 0
        self.outcomes: list[BlockOutcome] = []

    # -- wiring -----------------------------------------------------------

    def set_peers(self, outbound: Iterable[int], inbound: Iterable[int]) -> None:
        self.outbound = list(outbound)
        self.inbound = [p for p in inbound if p not in self.outbound]
        self.peers = self.outbound + self.inbound
        for p in self.peers:
            self.seen_inventory.setdefault(p, set())

    def _log(self, now: float, kind: str, attrs, detail=None) -> None:
        if self.log is not None:
            self.log(now, self.node_id, kind, attrs, detail)

    # -- pseudo-timer -----------------------------------------------------

    def on_incoming(self) -> bool:
        """Advance the incoming-message counter; True when the sync trigger
        fires (only while sync is enabled, though the counter always runs)."""
        self.msg_counter += 1
        if self.msg_counter >= self.trigger_limit:
            self.msg_counter = 0
            return self.sync_enabled
        return False

    # -- connection loss --------------------------------------------------

    def clear_inflight(self) -> None:
        """Abandon reconstruction and request state on connectivity loss."""
        self.pending_compact.clear()
        self.pending_graphene.clear()
        self.requested.clear()
        self.requested_blocks.clear()

    # -- helpers ----------------------------------------------------------

    def holds_tx(self, txid: TxId) -> bool:
        return (txid in self.mempool.entries or txid in self.tx_store
                or txid in self.mempool.orphans)

    def _get_tx(self, txid: TxId) -> Optional[Transaction]:
        tx = self.mempool.entries.get(txid)
        if tx is None:
            tx = self.tx_store.get(txid)
        return tx

    def _stash_block_txs(self, block: Block) -> None:
        for t in block.txs:
            if t not in self.tx_store:
                tx = self.mempool.entries.get(t) or self.mempool.orphans.get(t)
                if tx is not None:
                    self.tx_store[t] = tx

    def _record(self, now: float, block: Block, protocol: str, success: bool,
                missing: int, round_trips: int, down: int, up: int) -> None:
        out = BlockOutcome(self.node_id, len(self.outcomes), block.block_id,
                           protocol, success, missing, round_trips, down, up)
        self.outcomes.append(out)
        self._log(now, f"{protocol}_{'success' if success else 'fail'}",
                  [("block", block.block_id.hex()[:16]),
                   ("height", block.height),
                   ("missing", missing), ("round_trips", round_trips)])

    def _accept_block(self, block: Block, frm: Optional[int],
                      now: float) -> list[tuple[int, Message]]:
        """Adopt a reconstructed block and re-announce it per relay mode."""
        if block.block_id in self.known_blocks:
            return []
        self._stash_block_txs(block)
        self.known_blocks[block.block_id] = block
        self.requested_blocks.discard(block.block_id)
        if block.height > self.tip_height:
            self.tip_height = block.height
            self.tip_id = block.block_id
        self.mempool.remove_confirmed(block)
        # confirmed txs are never gossiped again, so the suppression sets
        # can forget them
        confirmed = set(block.txs)
        for seen in self.seen_inventory.values():
            seen -= confirmed
        targets = [p for p in self.peers if p != frm]
        if not block.txs and self.relay_mode == GRAPHENE:
            announce: Message = BlockAnnounce(block.block_id)
        elif self.relay_mode == LEGACY:
            announce = BlockAnnounce(block.block_id)
        elif self.relay_mode == COMPACT:
            salt = int.from_bytes(block.block_id[8:16], "little")
            cb = make_compact_block(block, self.tx_store, salt)
            announce = CmpctBlock(cb)
        else:
            announce = GrapheneMsg(make_graphene(
                block, len(self.mempool), self.graphene_params))
        return [(p, announce) for p in targets]

    # -- message handlers -------------------------------------------------

    def _on_inv(self, frm, msg: Inv, now):
        seen = self.seen_inventory.setdefault(frm, set())
        seen.update(msg.ids)
        want = tuple(i for i in msg.ids
                     if not self.holds_tx(i) and i not in self.requested)
        if not want:
            return []
        self.requested.update(want)
        return [(frm, GetData(want))]

    def _on_getdata(self, frm, msg: GetData, now):
        out = []
        seen = self.seen_inventory.setdefault(frm, set())
        for i in msg.ids:
            tx = self._get_tx(i)
            if tx is not None:
                seen.add(i)
                out.append((frm, TxMsg(tx)))
        return out

    def _on_tx(self, frm, msg: TxMsg, now):
        tx = msg.tx
        self.requested.discard(tx.id)
        self.seen_inventory.setdefault(frm, set()).add(tx.id)
        if self.mempool.insert(tx) != ACCEPTED:
            return []
        out = []
        for p in self.peers:
            if p == frm:
                continue
            seen = self.seen_inventory.setdefault(p, set())
            if tx.id in seen:
                continue
            seen.add(tx.id)
            out.append((p, Inv((tx.id,))))
        return out

    def _on_block_announce(self, frm, msg: BlockAnnounce, now):
        if (msg.block_id in self.known_blocks
                or msg.block_id in self.requested_blocks):
            return []
        self.requested_blocks.add(msg.block_id)
        return [(frm, GetBlock(msg.block_id))]

    def _on_getblock(self, frm, msg: GetBlock, now):
        block = self.known_blocks.get(msg.block_id)
        if block is None:
            self._log(now, "unknown_block_request",
                      [("block", msg.block_id.hex()[:16])])
            return []
        txs = tuple(self.tx_store[t] for t in block.txs)
        return [(frm, BlockMsg(block, txs))]

    def _on_blockmsg(self, frm, msg: BlockMsg, now):
        if msg.block.block_id in self.known_blocks:
            return []
        for tx in msg.txs:
            self.tx_store.setdefault(tx.id, tx)
        self._record(now, msg.block, LEGACY, True, 0, 0, wire_size(msg), 0)
        return self._accept_block(msg.block, frm, now)

    def _on_cmpctblock(self, frm, msg: CmpctBlock, now):
        cb = msg.cb
        if cb.block_id in self.known_blocks or cb.block_id in self.pending_compact:
            return []
        size = wire_size(msg)
        for _, tx in cb.prefilled:
            self.tx_store.setdefault(tx.id, tx)
        res = reconstruct_compact(cb, self.mempool)
        if isinstance(res, Reconstructed):
            self._record(now, res.block, COMPACT, True, 0, 0, size, 0)
            return self._accept_block(res.block, frm, now)
        req = GetBlockTxn(cb.block_id, res.indexes)
        self.pending_compact[cb.block_id] = _PendingCompact(
            cb, res, frm, size, wire_size(req))
        self._log(now, "cmpct_need_txn",
                  [("block", cb.block_id.hex()[:16]),
                   ("missing", len(res.indexes))],
                  detail=("indexes", list(res.indexes)))
        return [(frm, req)]

    def _on_getblocktxn(self, frm, msg: GetBlockTxn, now):
        block = self.known_blocks.get(msg.block_id)
        if block is None:
            self._log(now, "unknown_block_request",
                      [("block", msg.block_id.hex()[:16])])
            return []
        served = serve_block_txn(block, self.tx_store, msg.indexes)
        return [(frm, BlockTxn(msg.block_id, tuple(served)))]

    def _on_blocktxn(self, frm, msg: BlockTxn, now):
        pending = self.pending_compact.pop(msg.block_id, None)
        if pending is None:
            return []
        for tx in msg.txs:
            self.tx_store.setdefault(tx.id, tx)
        block = complete_compact(pending.cb, pending.need, msg.txs)
        self._record(now, block, COMPACT, False, len(pending.need.indexes), 1,
                     pending.bytes_down + wire_size(msg), pending.bytes_up)
        return self._accept_block(block, frm, now)

    def _on_graphene(self, frm, msg: GrapheneMsg, now):
        gb = msg.gb
        size = wire_size(msg)
        pending = self.pending_graphene.get(gb.block_id)
        if pending is not None:
            # answer to our larger-sketch request
            pending.gb = gb
            pending.bytes_down += size
        elif gb.block_id in self.known_blocks:
            return []
        else:
            pending = _PendingGraphene(gb, frm, size, 0)
            self.pending_graphene[gb.block_id] = pending
        if self.graphene_model == THRESHOLD_MODEL:
            return self._graphene_threshold_path(pending, frm, now)
        return self._graphene_iblt_path(pending, frm, now)

    def _graphene_threshold_path(self, pending: _PendingGraphene, frm, now):
        gb = pending.gb
        block = gb.block
        if block is None:
            raise ValueError("threshold model requires simulation ground truth")
        missing = tuple(t for t in block.txs if t not in self.mempool.entries
                        and t not in self.tx_store)
        pending.threshold_ok = graphene_threshold_outcome(
            block, self.mempool, self.graphene_threshold)
        pending.missing_count = len(missing)
        if not pending.threshold_ok:
            # a failed decode costs one larger-sketch round trip before the
            # receiver can even learn what it is missing
            pending.doublings = 1
        if missing:
            req = GetGrapheneTxn(gb.block_id, missing)
            pending.need = missing
            pending.known = frozenset(set(block.txs) - set(missing))
            pending.bytes_up += wire_size(req)
            return [(frm, req)]
        del self.pending_graphene[gb.block_id]
        self._record(now, block, GRAPHENE, bool(pending.threshold_ok),
                     0, 0 if pending.threshold_ok else pending.doublings,
                     pending.bytes_down, pending.bytes_up)
        return self._accept_block(block, frm, now)

    def _graphene_iblt_path(self, pending: _PendingGraphene, frm, now):
        gb = pending.gb
        res = reconstruct_graphene(gb, self.mempool)
        if isinstance(res, DecodeFail):
            pending.doublings += 1
            req = GetGrapheneLarger(gb.block_id,
                                    graphene_fallback(gb.sketch.cell_count))
            pending.bytes_up += wire_size(req)
            self._log(now, "graphene_decode_fail",
                      [("block", gb.block_id.hex()[:16]),
                       ("cells", gb.sketch.cell_count)])
            return [(frm, req)]
        if isinstance(res, NeedTx):
            req = GetGrapheneTxn(gb.block_id, res.ids)
            pending.need = res.ids
            pending.known = res.known
            pending.missing_count = len(res.ids)
            pending.bytes_up += wire_size(req)
            return [(frm, req)]
        del self.pending_graphene[gb.block_id]
        success = pending.doublings == 0
        self._record(now, res.block, GRAPHENE, success, 0, pending.doublings,
                     pending.bytes_down, pending.bytes_up)
        return self._accept_block(res.block, frm, now)

    def _on_get_graphene_larger(self, frm, msg: GetGrapheneLarger, now):
        block = self.known_blocks.get(msg.block_id)
        if block is None:
            self._log(now, "unknown_block_request",
                      [("block", msg.block_id.hex()[:16])])
            return []
        gb = make_graphene(block, len(self.mempool), self.graphene_params,
                           cell_count=msg.cell_count)
        return [(frm, GrapheneMsg(gb))]

    def _on_get_graphene_txn(self, frm, msg: GetGrapheneTxn, now):
        out = []
        for i in msg.ids:
            tx = self._get_tx(i)
            if tx is not None:
                out.append(tx)
        return [(frm, GrapheneTxn(msg.block_id, tuple(out)))] if out else []

    def _on_graphene_txn(self, frm, msg: GrapheneTxn, now):
        pending = self.pending_graphene.pop(msg.block_id, None)
        if pending is None:
            return []
        for tx in msg.txs:
            self.tx_store.setdefault(tx.id, tx)
        gb = pending.gb
        block_set = set(pending.known) | {tx.id for tx in msg.txs}
        block = Block(gb.block_id, gb.height, gb.prev_id,
                      tuple(sorted(block_set)))
        if self.graphene_model == THRESHOLD_MODEL:
            success = bool(pending.threshold_ok)
            missing = pending.missing_count
        else:
            success = pending.doublings == 0
            missing = pending.missing_count
        self._record(now, block, GRAPHENE, success, missing,
                     pending.doublings,
                     pending.bytes_down + wire_size(msg), pending.bytes_up)
        return self._accept_block(block, frm, now)

    def _on_sync(self, frm, msg: TxMempoolSync, now):
        ids = falafel_select(self.mempool)
        if not ids:
            return []
        targets = self.outbound if self.sync_outbound_only else self.peers
        out = []
        for p in targets:
            seen = self.seen_inventory.setdefault(p, set())
            if self.sync_filter_seen:
                send = tuple(i for i in ids if i not in seen)
            else:
                send = tuple(ids)
            if not send:
                continue
            seen.update(send)
            out.append((p, Inv(send)))
        self._log(now, "mempool_sync",
                  [("advertised", len(ids)), ("peers", len(out))])
        return out


_DISPATCH = {
    Inv: NodeState._on_inv,
    GetData: NodeState._on_getdata,
    TxMsg: NodeState._on_tx,
    BlockAnnounce: NodeState._on_block_announce,
    GetBlock: NodeState._on_getblock,
    BlockMsg: NodeState._on_blockmsg,
    CmpctBlock: NodeState._on_cmpctblock,
    GetBlockTxn: NodeState._on_getblocktxn,
    BlockTxn: NodeState._on_blocktxn,
    GrapheneMsg: NodeState._on_graphene,
    GetGrapheneLarger: NodeState._on_get_graphene_larger,
    GetGrapheneTxn: NodeState._on_get_graphene_txn,
    GrapheneTxn: NodeState._on_graphene_txn,
    TxMempoolSync: NodeState._on_sync,
}


def handle_message(node: NodeState, frm: int, msg: Message,
                   now: float) -> list[tuple[int, Message]]:
    """Apply one message to a node's state; returns (peer, message) sends."""
    return _DISPATCH[type(msg)](node, frm, msg, now)


def originate_tx(node: NodeState, tx: Transaction) -> list[tuple[int, Message]]:
    """Local creation of a transaction followed by its initial announcement."""
    if node.mempool.insert(tx) != ACCEPTED:
        return []
    out = []
    for p in node.peers:
        seen = node.seen_inventory.setdefault(p, set())
        seen.add(tx.id)
        out.append((p, Inv((tx.id,))))
    return out
