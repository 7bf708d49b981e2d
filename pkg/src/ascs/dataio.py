"""Dataset ingestion: LIBSVM text parsing and shuffle buffering.

LIBSVM lines look like ``label idx:value idx:value ...`` with 1-based,
strictly increasing indices.  Labels are parsed and discarded; this
package is unsupervised and only reuses the file format.
"""

from __future__ import annotations

import numpy as np

from .errors import FormatError


def parse_libsvm(
    line: str, dim: int | None = None, lineno: int | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Parse one LIBSVM line into 0-based (indices, values) arrays.

    Raises FormatError for malformed tokens, non-increasing indices or
    indices beyond ``dim``; ``lineno`` is woven into the message when given.
    """

    def fail(msg: str):
        where = f" on line {lineno}" if lineno is not None else ""
        raise FormatError(f"{msg}{where}: {line.strip()!r}")

    tokens = line.split()
    if not tokens:
        fail("empty LIBSVM record")
    # tokens[0] is the label; validate it is numeric, then drop it
    try:
        float(tokens[0])
    except ValueError:
        fail(f"bad label token {tokens[0]!r}")
    indices: list[int] = []
    values: list[float] = []
    last = 0
    for tok in tokens[1:]:
        idx_s, sep, val_s = tok.partition(":")
        if not sep:
            fail(f"bad feature token {tok!r}")
        try:
            idx = int(idx_s)
            val = float(val_s)
        except ValueError:
            fail(f"bad feature token {tok!r}")
        if idx <= last:
            fail(f"feature index {idx} not strictly increasing")
        if idx < 1:
            fail(f"feature index {idx} must be 1-based")
        if dim is not None and idx > dim:
            fail(f"feature index {idx} exceeds dimension {dim}")
        last = idx
        indices.append(idx - 1)
        values.append(val)
    return np.asarray(indices, dtype=np.int64), np.asarray(values, dtype=np.float64)


def format_libsvm(
    indices: np.ndarray, values: np.ndarray, label: float | int = 0
) -> str:
    """Inverse of ``parse_libsvm`` (0-based input, 1-based output)."""
    if isinstance(label, (int, np.integer)):
        parts = [str(int(label))]
    else:
        parts = [repr(float(label))]
    for idx, val in zip(indices, values):
        parts.append(f"{int(idx) + 1}:{float(val)!r}")
    return " ".join(parts)


def iter_libsvm(path, dim: int | None = None):
    """Yield (indices, values) for every non-blank line of a LIBSVM file."""
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            yield parse_libsvm(line, dim=dim, lineno=lineno)


def scan_libsvm(path) -> tuple[int, int]:
    """Pre-scan pass returning (sample_count, max_feature_index) with the
    max index already converted to a dimension (1-based count)."""
    count = 0
    dim = 0
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            indices, _ = parse_libsvm(line, lineno=lineno)
            count += 1
            if len(indices):
                dim = max(dim, int(indices[-1]) + 1)
    return count, dim


class ShuffleBuffer:
    """Bounded shuffle of a stream: fill a buffer of ``capacity`` samples,
    then emit a uniformly chosen buffered sample for each new arrival and
    finally drain the remainder in random order.

    Every ingested sample is emitted exactly once; capacity 1 is the
    identity stream and capacity >= stream length yields a uniform
    permutation.
    """

    def __init__(self, capacity: int, seed: int = 0):
        if capacity < 1:
            raise ValueError(f"capacity must be >= 1, got {capacity}")
        self.capacity = capacity
        self.seed = seed

    def shuffle(self, source):
        rng = np.random.default_rng(self.seed)
        buffer: list = []
        for sample in source:
            if len(buffer) < self.capacity:
                buffer.append(sample)
                continue
            slot = int(rng.integers(self.capacity))
            out, buffer[slot] = buffer[slot], sample
            yield out
        while buffer:
            slot = int(rng.integers(len(buffer)))
            buffer[slot], buffer[-1] = buffer[-1], buffer[slot]
            yield buffer.pop()


def shuffled_stream(source, buffer: ShuffleBuffer):
    """Apply a ShuffleBuffer to any sample iterable."""
    return buffer.shuffle(source)
