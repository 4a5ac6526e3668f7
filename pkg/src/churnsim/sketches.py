"""Probabilistic set sketches: Bloom filter and Invertible Bloom Lookup Table."""

from __future__ import annotations

import hashlib
import itertools
import math
from typing import Iterable, Optional

_ID_BITS = 256  # item ids are 32-byte values


class SketchParameterError(ValueError):
    """Bad sketch parameters or a subtraction between incompatible sketches."""


def _keyed_hash(data: bytes, seed: int, salt: bytes) -> int:
    key = seed.to_bytes(8, "little", signed=False) + salt
    return int.from_bytes(
        hashlib.blake2b(data, digest_size=8, key=key).digest(), "little")


class BloomFilter:
    """Fixed-size bit array with k double-hashed probes; no false negatives."""

    __slots__ = ("m", "k", "seed", "bits")

    def __init__(self, m: int, k: int, seed: int):
        if m < 1 or k < 1:
            raise SketchParameterError("m and k must be >= 1")
        self.m = m
        self.k = k
        self.seed = seed
        self.bits = bytearray((m + 7) // 8)

    def _indexes(self, item: bytes) -> list[int]:
        h1 = _keyed_hash(item, self.seed, b"bf1")
        h2 = _keyed_hash(item, self.seed, b"bf2") | 1
        return [(h1 + i * h2) % self.m for i in range(self.k)]

    def add(self, item: bytes) -> None:
        for idx in self._indexes(item):
            self.bits[idx >> 3] |= 1 << (idx & 7)

    def __contains__(self, item: bytes) -> bool:
        return all(self.bits[i >> 3] & (1 << (i & 7)) for i in self._indexes(item))

    @property
    def size_bytes(self) -> int:
        # serialized size model: bit array plus 16 bytes of parameters
        return len(self.bits) + 16


def bloom_build(items: Iterable[bytes], target_fpr: float, seed: int) -> BloomFilter:
    """Size a filter for ``items`` at ``target_fpr`` and insert them all.

    m = ceil(-n ln p / (ln 2)^2), k = max(1, round((m/n) ln 2)). An empty
    item set yields a degenerate 1-bit all-zero filter.
    """
    if not (0.0 < target_fpr < 1.0):
        raise SketchParameterError(f"target_fpr must be in (0, 1), got {target_fpr}")
    items = list(items)
    if not items:
        return BloomFilter(1, 1, seed)
    n = len(items)
    m = math.ceil(-n * math.log(target_fpr) / (math.log(2) ** 2))
    k = max(1, round(m / n * math.log(2)))
    bf = BloomFilter(m, k, seed)
    for it in items:
        bf.add(it)
    return bf


class Iblt:
    """Invertible Bloom Lookup Table over 32-byte ids (keys only).

    Cells hold (signed count, xor of ids, xor of 8-byte checksums). Insert
    and delete are exact involutions, so subtracting two tables built from
    sets A and B leaves a table encoding the symmetric difference.

    Each item maps to a hash-derived number of distinct cells in
    {k, k+1, k+2}. Varying the per-item degree shrinks the probability that
    two items land on the identical cell set, which is the irreducible
    failure mode of peeling on small tables; decode() additionally recovers
    stalled tables by xoring small cell subsets to expose hidden items.
    """

    __slots__ = ("cell_count", "hash_count", "seed", "counts", "id_sums", "check_sums")

    #: search caps for the stalled-decode recovery pass
    _MAX_STALLED_CELLS = {2: 30, 3: 26, 4: 22}
    _SEARCH_BUDGET = 6000
    _SEARCH_DEPTH = 20

    def __init__(self, cell_count: int, hash_count: int = 3, seed: int = 0):
        if cell_count < 1 or hash_count < 1:
            raise SketchParameterError("cell_count and hash_count must be >= 1")
        self.cell_count = cell_count
        self.hash_count = hash_count
        self.seed = seed
        self.counts = [0] * cell_count
        self.id_sums = [0] * cell_count
        self.check_sums = [0] * cell_count

    def params(self) -> tuple[int, int, int]:
        return (self.cell_count, self.hash_count, self.seed)

    def _degree(self, item: bytes) -> int:
        d = self.hash_count + _keyed_hash(item, self.seed, b"deg") % 3
        return min(d, self.cell_count)

    def _cell_indexes(self, item: bytes) -> list[int]:
        want = self._degree(item)
        out: list[int] = []
        j = 0
        while len(out) < want:
            idx = _keyed_hash(item, self.seed, b"ic%d" % j) % self.cell_count
            if idx not in out:
                out.append(idx)
            j += 1
        return out

    def _checksum(self, item: bytes) -> int:
        return _keyed_hash(item, self.seed, b"chk")

    def _apply(self, item: bytes, sign: int) -> None:
        iid = int.from_bytes(item, "big")
        chk = self._checksum(item)
        for idx in self._cell_indexes(item):
            self.counts[idx] += sign
            self.id_sums[idx] ^= iid
            self.check_sums[idx] ^= chk

    def insert(self, item: bytes) -> None:
        self._apply(item, 1)

    def delete(self, item: bytes) -> None:
        self._apply(item, -1)

    def is_zero(self) -> bool:
        return (not any(self.counts) and not any(self.id_sums)
                and not any(self.check_sums))

    def subtract(self, other: "Iblt") -> "Iblt":
        if self.params() != other.params():
            raise SketchParameterError(
                f"cannot subtract sketches with parameters {other.params()} "
                f"from {self.params()}")
        out = Iblt(self.cell_count, self.hash_count, self.seed)
        out.counts = [a - b for a, b in zip(self.counts, other.counts)]
        out.id_sums = [a ^ b for a, b in zip(self.id_sums, other.id_sums)]
        out.check_sums = [a ^ b for a, b in zip(self.check_sums, other.check_sums)]
        return out

    # -- decoding ---------------------------------------------------------

    def _peel(self, counts: list[int], id_sums: list[int], check_sums: list[int],
              a_only: set[bytes], b_only: set[bytes]) -> None:
        stack = list(range(self.cell_count))
        while stack:
            idx = stack.pop()
            cnt = counts[idx]
            if cnt not in (1, -1):
                continue
            item = id_sums[idx].to_bytes(_ID_BITS // 8, "big")
            if check_sums[idx] != self._checksum(item):
                continue  # impure cell that merely looks pure
            (a_only if cnt == 1 else b_only).add(item)
            iid = id_sums[idx]
            chk = self._checksum(item)
            for t in self._cell_indexes(item):
                counts[t] -= cnt
                id_sums[t] ^= iid
                check_sums[t] ^= chk
                stack.append(t)

    def _stall_candidates(self, stalled: list[int], counts: list[int],
                          id_sums: list[int], check_sums: list[int]):
        """Checksum-verified items hidden in a stalled table.

        Xoring the id/checksum sums of a small cell subset exposes any item
        whose occurrences outside that subset cancel; candidates whose cells
        are not all stalled are rejected, and the likely sign is taken from
        the majority count sign over the item's cells.
        """
        stalled_set = set(stalled)
        seen: set[int] = set()
        out = []

        def consider(z: int, c: int) -> None:
            if not z or z in seen:
                return
            seen.add(z)
            item = z.to_bytes(_ID_BITS // 8, "big")
            if c != self._checksum(item):
                return
            cells = self._cell_indexes(item)
            if not all(t in stalled_set for t in cells):
                return
            vote = sum((counts[t] > 0) - (counts[t] < 0) for t in cells)
            signs = (1,) if vote > 0 else (-1,) if vote < 0 else (1, -1)
            out.append((item, cells, signs))

        for i in stalled:
            consider(id_sums[i], check_sums[i])
        for r in (2, 3, 4):
            if len(stalled) > self._MAX_STALLED_CELLS[r]:
                break
            for comb in itertools.combinations(stalled, r):
                z = c = 0
                for t in comb:
                    z ^= id_sums[t]
                    c ^= check_sums[t]
                consider(z, c)
        return out

    def _decode_rec(self, counts, id_sums, check_sums, a_only, b_only,
                    depth: int, budget: list[int]) -> bool:
        self._peel(counts, id_sums, check_sums, a_only, b_only)
        stalled = [i for i in range(self.cell_count)
                   if counts[i] or id_sums[i] or check_sums[i]]
        if not stalled:
            return True
        if depth <= 0 or budget[0] <= 0:
            return False
        for item, cells, signs in self._stall_candidates(
                stalled, counts, id_sums, check_sums):
            for sign in signs:
                budget[0] -= 1
                if budget[0] <= 0:
                    return False
                c2, i2, k2 = list(counts), list(id_sums), list(check_sums)
                a2, b2 = set(a_only), set(b_only)
                iid = int.from_bytes(item, "big")
                chk = self._checksum(item)
                for t in cells:
                    c2[t] -= sign
                    i2[t] ^= iid
                    k2[t] ^= chk
                (a2 if sign == 1 else b2).add(item)
                if self._decode_rec(c2, i2, k2, a2, b2, depth - 1, budget):
                    a_only.clear()
                    a_only.update(a2)
                    b_only.clear()
                    b_only.update(b2)
                    return True
        return False

    def decode(self) -> Optional[tuple[set[bytes], set[bytes]]]:
        """Recover the encoded sets; returns (a_only, b_only) or None.

        For a table ``a.subtract(b)``, a_only holds items inserted only on
        the a side (count +1) and b_only the b side (count -1). Failure is
        a normal outcome, not an exception path.
        """
        counts = list(self.counts)
        id_sums = list(self.id_sums)
        check_sums = list(self.check_sums)
        a_only: set[bytes] = set()
        b_only: set[bytes] = set()
        if self._decode_rec(counts, id_sums, check_sums, a_only, b_only,
                            self._SEARCH_DEPTH, [self._SEARCH_BUDGET]):
            return a_only, b_only
        return None

    @property
    def size_bytes(self) -> int:
        # serialized size model: 4 + 32 + 8 bytes per cell plus 16 bytes params
        return self.cell_count * (4 + 32 + 8) + 16
