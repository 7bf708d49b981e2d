"""Turn d-dimensional samples into the p = d(d-1)/2 pair-increment stream.

Feeding sample t emits, for each feature pair (a, b), an increment
whose running sum matches t times the empirical covariance of that
pair.  The main term is the product of deviations from the running
means (updated to include the current sample); the optional mean-drift
correction makes the telescoping exact:

    X(t) = (y_a - m_a(t)) (y_b - m_b(t)) + (t-1) (m_a(t-1) - m_a(t)) (m_b(t-1) - m_b(t))

so that sum_{k<=t} X(k) = sum_{k<=t} (y_a(k) - m_a(t)) (y_b(k) - m_b(t))
holds at every t.  The correction decays like 1/t and is off by
default; it matters only when exact finite-stream covariances are
required.

Correlation mode standardizes each feature with mean and standard
deviation frozen from a pilot prefix instead of re-centering on the
fly, which keeps the increments identically distributed across the
stream.  The sparse fast path applies to features whose pilot
|mean|/std falls under a cutoff: for pairs of such features the raw
product is the increment, and zero entries emit nothing at all.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError

logger = logging.getLogger(__name__)


class PairIndexer:
    """Bijection between pair index i < d(d-1)/2 and ordered pairs (a, b), a < b.

    Index order is row-major over the upper triangle:
    (0,1), (0,2), ..., (0,d-1), (1,2), ...
    """

    def __init__(self, dim: int):
        if dim < 2:
            raise ValueError(f"need at least 2 features, got dim={dim}")
        self.dim = dim
        self.pair_count = dim * (dim - 1) // 2
        self.rows, self.cols = np.triu_indices(dim, k=1)

    def pair_to_index(self, a: int, b: int) -> int:
        if not 0 <= a < b < self.dim:
            raise ValueError(f"need 0 <= a < b < d, got ({a}, {b}) with d={self.dim}")
        return a * self.dim - a * (a + 1) // 2 + (b - a - 1)

    def index_to_pair(self, index: int) -> tuple[int, int]:
        if not 0 <= index < self.pair_count:
            raise ValueError(f"pair index {index} out of range [0, {self.pair_count})")
        return int(self.rows[index]), int(self.cols[index])


class StreamMoments:
    """Running per-feature mean and variance (Welford recurrence).

    Keeps the previous mean vector around so increment emission can form
    the exact mean-drift correction without re-deriving it.
    """

    def __init__(self, dim: int):
        self.dim = dim
        self.count = 0
        self.mean = np.zeros(dim)
        self.prev_mean = np.zeros(dim)
        self._m2 = np.zeros(dim)

    def update(self, y: np.ndarray) -> None:
        y = np.asarray(y, dtype=np.float64)
        if y.shape != (self.dim,):
            raise ValueError(f"sample shape {y.shape} != ({self.dim},)")
        self.count += 1
        np.copyto(self.prev_mean, self.mean)
        delta = y - self.mean
        self.mean += delta / self.count
        self._m2 += delta * (y - self.mean)

    def variance(self) -> np.ndarray:
        """Population variance (matches the two-pass estimate /count)."""
        if self.count == 0:
            return np.zeros(self.dim)
        return self._m2 / self.count

    def std(self) -> np.ndarray:
        return np.sqrt(self.variance())


@dataclass
class StreamConfig:
    """Emission policy for the pair-increment transform.

    mode : "cov" (running-mean centering) or "corr" (pilot-frozen
        standardization, no re-centering).
    adjustment : add the mean-drift correction (cov mode only; makes the
        running sums telescope to the exact empirical covariance).
    fast_path : use raw products and zero-skipping for low-mean features.
    sparse_eps : |pilot mean| / pilot std cutoff below which a feature
        counts as low-mean for the fast path.
    """

    mode: str = "cov"
    adjustment: bool = False
    fast_path: bool = False
    sparse_eps: float = 0.01

    def __post_init__(self):
        if self.mode not in ("cov", "corr"):
            raise ValueError(f"mode must be 'cov' or 'corr', got {self.mode!r}")
        if self.sparse_eps < 0:
            raise ValueError(f"sparse_eps must be >= 0, got {self.sparse_eps}")
        if self.adjustment and self.mode == "corr":
            raise ValueError("the mean-drift adjustment applies to cov mode only")


@dataclass
class PilotStats:
    """Per-feature mean/std frozen after the pilot prefix."""

    mean: np.ndarray
    std: np.ndarray
    dropped: np.ndarray = field(init=False)
    low_mean: np.ndarray = field(init=False)

    def finalize(self, sparse_eps: float) -> None:
        self.dropped = self.std == 0.0
        if self.dropped.any():
            logger.warning(
                "%d zero-variance features dropped from correlation pairs",
                int(self.dropped.sum()),
            )
        safe_std = np.where(self.dropped, 1.0, self.std)
        self.low_mean = (np.abs(self.mean) / safe_std) < sparse_eps
        # a constant zero feature emits nothing either way; keep it on the
        # fast path so its zeros are skipped rather than densified
        self.low_mean |= self.dropped & (self.mean == 0.0)

    @classmethod
    def from_moments(cls, moments: StreamMoments, sparse_eps: float) -> "PilotStats":
        stats = cls(mean=moments.mean.copy(), std=moments.std())
        stats.finalize(sparse_eps)
        return stats


class PairStream:
    """Stateful transform from samples to per-pair increments.

    Call ``process(y)`` once per sample in stream order.  The moments are
    updated first and emission uses the post-update means (cov mode).
    Dense emission returns the full length-p increment vector; the fast
    path returns a sparse (items, values) pair.
    """

    def __init__(
        self,
        dim: int,
        config: StreamConfig | None = None,
        pilot: PilotStats | None = None,
    ):
        self.indexer = PairIndexer(dim)
        self.config = config or StreamConfig()
        self.moments = StreamMoments(dim)
        self.pilot = pilot
        if self.config.mode == "corr" and pilot is None:
            raise ValueError("correlation mode needs pilot statistics")
        if self.config.fast_path and pilot is None:
            raise ValueError("the fast path needs pilot statistics")
        if pilot is not None:
            # pairs touching a non-low-mean feature need the exact product
            self._dense_features = np.nonzero(~pilot.low_mean & ~pilot.dropped)[0]

    @property
    def dim(self) -> int:
        return self.indexer.dim

    @property
    def pair_count(self) -> int:
        return self.indexer.pair_count

    def process(self, y: np.ndarray):
        """Consume one dense sample; returns (items, values).

        ``items`` is None for dense emission (values covers every pair in
        index order).
        """
        y = np.asarray(y, dtype=np.float64)
        self.moments.update(y)
        if self.config.fast_path:
            return self._fast_increments(y)
        return None, self._dense_increments(y)

    # -- dense path ------------------------------------------------------------

    def _centered(self, y: np.ndarray) -> np.ndarray:
        if self.config.mode == "corr":
            dev = (y - self.pilot.mean) / np.where(
                self.pilot.dropped, 1.0, self.pilot.std
            )
            dev[self.pilot.dropped] = 0.0
            return dev
        return y - self.moments.mean

    def _dense_increments(self, y: np.ndarray) -> np.ndarray:
        ia, ib = self.indexer.rows, self.indexer.cols
        dev = self._centered(y)
        values = dev[ia] * dev[ib]
        if self.config.adjustment:
            drift = self.moments.prev_mean - self.moments.mean
            values += (self.moments.count - 1) * drift[ia] * drift[ib]
        return values

    # -- sparse fast path --------------------------------------------------------

    def _fast_increments(self, y: np.ndarray):
        low = self.pilot.low_mean
        nz = np.nonzero((y != 0.0) & low)[0]
        active = np.union1d(nz, self._dense_features)
        n = len(active)
        if n < 2:
            return np.empty(0, dtype=np.int64), np.empty(0)
        dev = self._centered(y)
        is_low = low[active]
        raw = y[active]
        cen = dev[active]
        # low-mean x low-mean pairs use raw products; anything touching a
        # dense feature uses the centered product
        ii, jj = np.triu_indices(n, k=1)
        both_low = is_low[ii] & is_low[jj]
        values = np.where(both_low, raw[ii] * raw[jj], cen[ii] * cen[jj])
        keep = ~both_low | (values != 0.0)
        a = active[ii[keep]]
        b = active[jj[keep]]
        items = a * self.dim - a * (a + 1) // 2 + (b - a - 1)
        return items.astype(np.int64), values[keep]
