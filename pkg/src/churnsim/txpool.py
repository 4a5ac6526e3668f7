"""Transactions, the mempool with ancestor-score ranking, and block assembly."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterable, Optional

TxId = bytes  # 32-byte opaque identifier, ordered lexicographically

GENESIS_ID = b"\x00" * 32

# mempool_insert outcomes
ACCEPTED = "accepted"
DUPLICATE = "duplicate"
ORPHANED = "orphaned"

# ancestor-score readings
FEE_RATE = "fee_rate"
FEE_SUM = "fee_sum"


class UnknownTxError(KeyError):
    """Raised when an operation references a transaction id not in the mempool."""


@dataclass(frozen=True, slots=True)
class Transaction:
    id: TxId
    size_bytes: int
    fee: int
    parents: tuple[TxId, ...] = ()
    created_at: float = 0.0

    def __post_init__(self):
        if self.size_bytes <= 0:
            raise ValueError("size_bytes must be positive")


@dataclass(frozen=True, slots=True)
class Block:
    block_id: bytes
    height: int
    prev_id: bytes
    txs: tuple[TxId, ...]


def block_id_for(prev_id: bytes, height: int, txs: Iterable[TxId]) -> bytes:
    """Deterministic content hash standing in for proof-of-work."""
    h = hashlib.sha256()
    h.update(prev_id)
    h.update(height.to_bytes(8, "big"))
    for t in txs:
        h.update(t)
    return h.digest()


class Mempool:
    """Pool of unconfirmed transactions ranked by ancestor score.

    Every parent of every entry is either itself an entry or already
    confirmed; transactions arriving before their parents wait in a bounded
    orphan buffer and are promoted once the parents show up.
    """

    def __init__(self, score_mode: str = FEE_RATE, orphan_limit: int = 1000):
        if score_mode not in (FEE_RATE, FEE_SUM):
            raise ValueError(f"unknown score_mode {score_mode!r}")
        self.score_mode = score_mode
        self.orphan_limit = orphan_limit
        self.entries: dict[TxId, Transaction] = {}
        self.confirmed: set[TxId] = set()
        self.orphans: dict[TxId, Transaction] = {}  # insertion order = age
        self._children: dict[TxId, set[TxId]] = {}
        self._score_cache: dict[TxId, Fraction] = {}

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, txid: TxId) -> bool:
        return txid in self.entries

    # -- scoring ----------------------------------------------------------

    def ancestor_set(self, txid: TxId) -> set[TxId]:
        """Transitive closure of unconfirmed parents, including txid itself."""
        if txid not in self.entries:
            raise UnknownTxError(txid)
        out: set[TxId] = set()
        stack = [txid]
        while stack:
            cur = stack.pop()
            if cur in out:
                continue
            out.add(cur)
            for p in self.entries[cur].parents:
                if p not in self.confirmed and p not in out:
                    stack.append(p)
        return out

    def ancestor_score(self, txid: TxId) -> Fraction:
        cached = self._score_cache.get(txid)
        if cached is not None:
            return cached
        anc = self.ancestor_set(txid)
        fees = sum(self.entries[a].fee for a in anc)
        if self.score_mode == FEE_SUM:
            score = Fraction(fees)
        else:
            score = Fraction(fees, sum(self.entries[a].size_bytes for a in anc))
        self._score_cache[txid] = score
        return score

    def _invalidate(self, txid: TxId) -> None:
        """Drop cached scores for txid and all of its in-pool descendants."""
        stack = [txid]
        seen = set()
        while stack:
            cur = stack.pop()
            if cur in seen:
                continue
            seen.add(cur)
            self._score_cache.pop(cur, None)
            stack.extend(self._children.get(cur, ()))

    # -- mutation ---------------------------------------------------------

    def insert(self, tx: Transaction) -> str:
        if tx.id in self.entries or tx.id in self.confirmed or tx.id in self.orphans:
            return DUPLICATE
        missing = [p for p in tx.parents
                   if p not in self.entries and p not in self.confirmed]
        if missing:
            self.orphans[tx.id] = tx
            while len(self.orphans) > self.orphan_limit:
                oldest = next(iter(self.orphans))
                del self.orphans[oldest]
            return ORPHANED
        self._admit(tx)
        self._promote_orphans()
        return ACCEPTED

    def _admit(self, tx: Transaction) -> None:
        self.entries[tx.id] = tx
        for p in tx.parents:
            if p in self.entries:
                self._children.setdefault(p, set()).add(tx.id)
        self._invalidate(tx.id)

    def _promote_orphans(self) -> None:
        progressed = True
        while progressed:
            progressed = False
            for oid in list(self.orphans):
                tx = self.orphans[oid]
                if all(p in self.entries or p in self.confirmed for p in tx.parents):
                    del self.orphans[oid]
                    self._admit(tx)
                    progressed = True

    def remove_confirmed(self, block: Block) -> int:
        removed = 0
        for txid in block.txs:
            tx = self.entries.pop(txid, None)
            if tx is not None:
                removed += 1
                for p in tx.parents:
                    kids = self._children.get(p)
                    if kids:
                        kids.discard(txid)
            self.orphans.pop(txid, None)
            self.confirmed.add(txid)
            self._invalidate(txid)
            self._children.pop(txid, None)
        self._promote_orphans()
        return removed

    # -- ranking ----------------------------------------------------------

    def ranked(self) -> list[TxId]:
        """All entry ids in (ancestor score desc, TxId asc) order."""
        return sorted(self.entries, key=lambda i: (-self.ancestor_score(i), i))

    def top_ranked(self, k: int) -> list[TxId]:
        if k < 0:
            raise ValueError("k must be >= 0")
        return self.ranked()[:k]

    # -- block assembly ---------------------------------------------------

    def _topo_package(self, txid: TxId, selected: set[TxId]) -> list[TxId]:
        """Unselected ancestors of txid in parent-before-child order."""
        order: list[TxId] = []
        done: set[TxId] = set()

        def visit(cur: TxId) -> None:
            if cur in done or cur in selected:
                return
            done.add(cur)
            for p in self.entries[cur].parents:
                if p in self.entries:
                    visit(p)
            order.append(cur)

        visit(txid)
        return order

    def assemble_block(self, max_txs: int, prev: bytes, height: int,
                       eligible: Optional[Callable[[Transaction], bool]] = None) -> Block:
        """Greedy selection by ancestor score, pulling ancestors along.

        Packages that would overflow max_txs are skipped; output is in
        topological order. ``eligible`` optionally filters candidate txs
        (their ancestors are still pulled in regardless).
        """
        if max_txs <= 0:
            raise ValueError("max_txs must be positive")
        selected: set[TxId] = set()
        order: list[TxId] = []
        for cand in self.ranked():
            if len(order) >= max_txs:
                break
            if cand in selected:
                continue
            if eligible is not None and not eligible(self.entries[cand]):
                continue
            package = self._topo_package(cand, selected)
            if len(order) + len(package) > max_txs:
                continue
            for t in package:
                selected.add(t)
                order.append(t)
        txs = tuple(order)
        return Block(block_id_for(prev, height, txs), height, prev, txs)
