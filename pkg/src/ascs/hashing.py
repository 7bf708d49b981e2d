"""Seeded bucket and sign hash families for signed count sketches.

Each of the K tables gets two independent sub-seeds derived from the
master seed with a splitmix64-style mixer.  Bucket and sign values are
then finalized per item, so the family is pure: the same
(seed, table, item) triple always maps to the same bucket and sign, and
no state is kept between calls.

The bucket value is the mixed 64-bit word reduced mod R.  For
non-power-of-two R this carries a modulo bias of at most R/2**64,
which is negligible for any realistic table size.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB

# numpy copies of the constants so array arithmetic stays in uint64
_U_GOLDEN = np.uint64(_GOLDEN)
_U_MIX1 = np.uint64(_MIX1)
_U_MIX2 = np.uint64(_MIX2)


def _mix64(z: int) -> int:
    """splitmix64 finalizer on a python int (wraps at 64 bits)."""
    z &= _MASK64
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK64
    return z ^ (z >> 31)


def _mix64_array(z: np.ndarray) -> np.ndarray:
    z = z ^ (z >> np.uint64(30))
    z = z * _U_MIX1
    z = z ^ (z >> np.uint64(27))
    z = z * _U_MIX2
    return z ^ (z >> np.uint64(31))


def _stream(seed: int, position: int) -> int:
    """k-th word of the splitmix64 stream started at ``seed``."""
    return _mix64((seed + (position + 1) * _GOLDEN) & _MASK64)


class HashFamily:
    """K independent bucket hashes h_e: items -> [0, R) plus sign hashes
    s_e: items -> {+1, -1}, all derived from one 64-bit master seed.

    Parameters
    ----------
    master_seed : seed shared by every table; stored in sketch snapshots.
    tables : number of tables K (>= 1).
    buckets : buckets per table R (>= 1).
    """

    def __init__(self, master_seed: int, tables: int, buckets: int):
        if tables < 1:
            raise ValueError(f"table count must be positive, got {tables}")
        if buckets < 1:
            raise ValueError(f"bucket count must be positive, got {buckets}")
        self.master_seed = int(master_seed) & _MASK64
        self.tables = int(tables)
        self.buckets = int(buckets)
        self._bucket_seeds = [
            _stream(self.master_seed, 2 * e) for e in range(self.tables)
        ]
        self._sign_seeds = [
            _stream(self.master_seed, 2 * e + 1) for e in range(self.tables)
        ]

    # -- scalar interface ------------------------------------------------

    def bucket_of(self, table: int, item: int) -> int:
        """Bucket index of ``item`` in table ``table``."""
        self._check_table(table)
        return _stream(self._bucket_seeds[table], item) % self.buckets

    def sign_of(self, table: int, item: int) -> int:
        """Sign (+1 or -1) of ``item`` in table ``table``."""
        self._check_table(table)
        return 1 - 2 * (_stream(self._sign_seeds[table], item) & 1)

    # -- vectorized interface ---------------------------------------------

    def bucket_array(self, table: int, items: np.ndarray) -> np.ndarray:
        """Vectorized ``bucket_of`` over an int array of items."""
        self._check_table(table)
        z = self._positions(items, self._bucket_seeds[table])
        return (_mix64_array(z) % np.uint64(self.buckets)).astype(np.int64)

    def sign_array(self, table: int, items: np.ndarray) -> np.ndarray:
        """Vectorized ``sign_of``; returns float64 +-1 for direct multiplies."""
        self._check_table(table)
        z = self._positions(items, self._sign_seeds[table])
        bit = (_mix64_array(z) & np.uint64(1)).astype(np.int64)
        return (1.0 - 2.0 * bit).astype(np.float64)

    def bucket_matrix(self, item_count: int) -> np.ndarray:
        """(K, item_count) int64 bucket table for items 0..item_count-1."""
        items = np.arange(item_count, dtype=np.uint64)
        return np.stack([self.bucket_array(e, items) for e in range(self.tables)])

    def sign_matrix(self, item_count: int) -> np.ndarray:
        """(K, item_count) float64 sign table for items 0..item_count-1."""
        items = np.arange(item_count, dtype=np.uint64)
        return np.stack([self.sign_array(e, items) for e in range(self.tables)])

    # -- helpers -----------------------------------------------------------

    def _positions(self, items: np.ndarray, seed: int) -> np.ndarray:
        items = np.asarray(items)
        if items.dtype != np.uint64:
            items = items.astype(np.uint64)
        return np.uint64(seed) + (items + np.uint64(1)) * _U_GOLDEN

    def _check_table(self, table: int) -> None:
        if not 0 <= table < self.tables:
            raise ValueError(
                f"table index {table} out of range for {self.tables} tables"
            )

    def __repr__(self) -> str:  # pragma: no cover
        return (
            f"HashFamily(master_seed={self.master_seed}, "
            f"tables={self.tables}, buckets={self.buckets})"
        )
