"""Signed count sketch over a stream of scaled increments.

The sketch is a K x R array of float64 accumulators.  Inserting an
increment x for item i adds (x / T) * s_e(i) to bucket h_e(i) of every
table e, where T is the total sample count declared at construction.
The estimate of an item's mean is the median over tables of the signed
bucket values; for an even table count the mean of the two middle
order statistics is used.

Because the 1/T scaling happens inside ``insert``, reading the sketch
after t < T samples yields (t/T) times the running mean, and no
rescaling is needed at retrieval time once the full stream has been
consumed.
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import DataError, FormatError, StreamLengthError
from .hashing import HashFamily

SNAPSHOT_MAGIC = b"ASCS"
SNAPSHOT_VERSION = 1

#: header layout: magic, version u32, K u32, R u32, master_seed u64,
#: T u64, inserted_t u64, mode u8 -- all little-endian
_HEADER = struct.Struct("<4sIIIQQQB")

_MODE_CODES = {"cov": 0, "corr": 1}
_MODE_NAMES = {v: k for k, v in _MODE_CODES.items()}


class CountSketch:
    """Vanilla signed count sketch (insert / estimate / top_k).

    Parameters
    ----------
    family : hash family supplying buckets and signs for every table.
    total_samples : declared stream length T; increments are scaled by 1/T.
    mode : "cov" or "corr"; metadata only, persisted in snapshots.
    item_count : when given, bucket/sign rows for items 0..item_count-1
        are precomputed so batch calls skip hashing.

    A sketch instance is single-writer.  Reads are safe whenever no
    insert is in flight.
    """

    def __init__(
        self,
        family: HashFamily,
        total_samples: int,
        mode: str = "cov",
        item_count: int | None = None,
    ):
        if total_samples < 1:
            raise ValueError(f"total_samples must be positive, got {total_samples}")
        if mode not in _MODE_CODES:
            raise ValueError(f"mode must be 'cov' or 'corr', got {mode!r}")
        self.family = family
        self.total_samples = int(total_samples)
        self.mode = mode
        self.samples_seen = 0
        self.table = np.zeros((family.tables, family.buckets), dtype=np.float64)
        self._rows = np.arange(family.tables)[:, None]
        self._buckets: np.ndarray | None = None
        self._signs: np.ndarray | None = None
        if item_count is not None:
            self.prepare(item_count)

    # -- cached hash tables -------------------------------------------------

    def prepare(self, item_count: int) -> None:
        """Precompute bucket/sign rows for items 0..item_count-1."""
        self._buckets = self.family.bucket_matrix(item_count)
        self._signs = self.family.sign_matrix(item_count)

    def _lookup(self, items: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        if self._buckets is not None and (
            len(items) == 0 or int(items.max()) < self._buckets.shape[1]
        ):
            return self._buckets[:, items], self._signs[:, items]
        buckets = np.stack(
            [self.family.bucket_array(e, items) for e in range(self.family.tables)]
        )
        signs = np.stack(
            [self.family.sign_array(e, items) for e in range(self.family.tables)]
        )
        return buckets, signs

    # -- insertion ------------------------------------------------------------

    def insert(self, item: int, value: float) -> None:
        """Add one raw increment for ``item``; the 1/T scaling is applied here."""
        self.insert_batch(np.asarray([item]), np.asarray([float(value)]))

    def insert_batch(self, items: np.ndarray, values: np.ndarray) -> None:
        """Add raw increments for several items of the current sample."""
        items = np.asarray(items, dtype=np.int64)
        values = np.asarray(values, dtype=np.float64)
        if not np.all(np.isfinite(values)):
            raise DataError("non-finite increment value rejected")
        buckets, signs = self._lookup(items)
        scaled = values / self.total_samples
        for e in range(self.family.tables):
            np.add.at(self.table, (e, buckets[e]), scaled * signs[e])

    def advance(self, count: int = 1) -> None:
        """Mark ``count`` samples as processed (keeps inserted_t <= T)."""
        if self.samples_seen + count > self.total_samples:
            raise StreamLengthError(
                f"stream longer than declared T={self.total_samples}"
            )
        self.samples_seen += count

    # -- retrieval --------------------------------------------------------------

    def estimate(self, item: int) -> float:
        """Median over tables of the signed bucket values for ``item``."""
        return float(self.estimate_batch(np.asarray([item]))[0])

    def estimate_batch(self, items: np.ndarray) -> np.ndarray:
        items = np.asarray(items, dtype=np.int64)
        buckets, signs = self._lookup(items)
        values = self.table[self._rows, buckets] * signs
        return _median_over_tables(values)

    def estimate_all(self, item_count: int) -> np.ndarray:
        """Estimates for every item in [0, item_count)."""
        if self._buckets is None or self._buckets.shape[1] < item_count:
            self.prepare(item_count)
        values = (
            self.table[self._rows, self._buckets[:, :item_count]]
            * self._signs[:, :item_count]
        )
        return _median_over_tables(values)

    def top_k(self, k: int, candidates: np.ndarray) -> list[tuple[int, float]]:
        """The k candidates with the largest (signed) estimates.

        Ties are broken toward the smaller item index; output is sorted
        descending by estimate.
        """
        candidates = np.asarray(candidates, dtype=np.int64)
        if k > len(candidates):
            raise ValueError(
                f"k={k} exceeds candidate count {len(candidates)}"
            )
        order = np.argsort(candidates, kind="stable")
        candidates = candidates[order]  # ascending index, so stable sort ties break low
        estimates = self.estimate_batch(candidates)
        top = np.argsort(-estimates, kind="stable")[:k]
        return [(int(candidates[j]), float(estimates[j])) for j in top]

    # -- persistence -----------------------------------------------------------

    def save(self, path) -> None:
        """Write the binary snapshot (bit-exact round trip)."""
        header = _HEADER.pack(
            SNAPSHOT_MAGIC,
            SNAPSHOT_VERSION,
            self.family.tables,
            self.family.buckets,
            self.family.master_seed,
            self.total_samples,
            self.samples_seen,
            _MODE_CODES[self.mode],
        )
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(np.ascontiguousarray(self.table, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path) -> "CountSketch":
        with open(path, "rb") as fh:
            raw = fh.read()
        if len(raw) < _HEADER.size:
            raise FormatError(f"snapshot too short: {path}")
        magic, version, k, r, seed, total, seen, mode_code = _HEADER.unpack_from(raw)
        if magic != SNAPSHOT_MAGIC:
            raise FormatError(f"bad snapshot magic {magic!r} in {path}")
        if version != SNAPSHOT_VERSION:
            raise FormatError(f"unsupported snapshot version {version}")
        if mode_code not in _MODE_NAMES:
            raise FormatError(f"unknown mode code {mode_code}")
        expected = _HEADER.size + k * r * 8
        if len(raw) != expected:
            raise FormatError(
                f"snapshot size {len(raw)} != expected {expected} for K={k} R={r}"
            )
        sketch = cls(HashFamily(seed, k, r), total, mode=_MODE_NAMES[mode_code])
        sketch.samples_seen = seen
        sketch.table = (
            np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
            .reshape(k, r)
            .astype(np.float64)
        )
        return sketch


def _median_over_tables(values: np.ndarray) -> np.ndarray:
    """Median along axis 0; even counts average the two middle values."""
    k = values.shape[0]
    if k == 1:
        return values[0].copy()
    mid = k // 2
    if k % 2:
        return np.partition(values, mid, axis=0)[mid]
    part = np.partition(values, (mid - 1, mid), axis=0)
    return 0.5 * (part[mid - 1] + part[mid])
