"""Active sampling on top of a count sketch.

The stream is split into an exploration period (samples 1..T0, every
increment inserted) and a sampling period (samples T0+1..T) during
which an item is inserted only when its current estimate clears a
threshold that rises linearly with time.

The gate for sample t reads the sketch as of sample t-1 and compares
against tau(t-1).  Two gate modes exist: "absolute" (default) keeps an
item when |estimate| >= tau, which also retains strongly negative
means; "signed" keeps it when estimate >= tau.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import StreamLengthError
from .sketch import CountSketch

GATE_MODES = ("absolute", "signed")


@dataclass(frozen=True)
class ThresholdSchedule:
    """Linear threshold tau(t) = tau0 + (theta / T) * (t - T0) for t in [T0, T]."""

    tau0: float
    theta: float
    exploration_end: int   # T0
    total_samples: int     # T

    def __post_init__(self):
        if self.tau0 < 0:
            raise ValueError(f"tau0 must be >= 0, got {self.tau0}")
        if self.theta < 0:
            raise ValueError(f"theta must be >= 0, got {self.theta}")
        if not 1 <= self.exploration_end <= self.total_samples:
            raise ValueError(
                f"need 1 <= T0 <= T, got T0={self.exploration_end}, "
                f"T={self.total_samples}"
            )

    def tau_at(self, t: int) -> float:
        """Threshold value at sample index t (defined for T0 <= t <= T)."""
        if t < self.exploration_end:
            raise ValueError(
                f"tau is undefined before the exploration end "
                f"(t={t} < T0={self.exploration_end})"
            )
        if t > self.total_samples:
            raise ValueError(f"t={t} beyond declared stream length {self.total_samples}")
        return self.tau0 + self.theta / self.total_samples * (t - self.exploration_end)


class ActiveSketch:
    """Count sketch fed through the explore-then-gate sampling loop.

    ``process_increments`` consumes one sample worth of increments and
    returns the boolean mask of items that were actually inserted,
    which callers can use for trace-based diagnostics.
    """

    def __init__(
        self,
        sketch: CountSketch,
        schedule: ThresholdSchedule,
        gate_mode: str = "absolute",
    ):
        if schedule.total_samples != sketch.total_samples:
            raise ValueError(
                "schedule and sketch disagree on stream length: "
                f"{schedule.total_samples} != {sketch.total_samples}"
            )
        if gate_mode not in GATE_MODES:
            raise ValueError(f"gate_mode must be one of {GATE_MODES}, got {gate_mode!r}")
        self.sketch = sketch
        self.schedule = schedule
        self.gate_mode = gate_mode

    @property
    def t(self) -> int:
        """Samples processed so far."""
        return self.sketch.samples_seen

    def process_increments(
        self, values: np.ndarray, items: np.ndarray | None = None
    ) -> np.ndarray:
        """Consume one sample.

        Parameters
        ----------
        values : raw increments X_i for this sample.
        items : item indices matching ``values``; ``None`` means values
            cover items 0..len(values)-1 densely.  Items absent from a
            sparse sample are neither queried nor gated (their increment
            is zero, so insertion would be a no-op either way).

        Returns the inserted mask aligned with ``values``.
        """
        values = np.asarray(values, dtype=np.float64)
        if items is None:
            items = np.arange(len(values), dtype=np.int64)
        else:
            items = np.asarray(items, dtype=np.int64)
        prev_t = self.sketch.samples_seen
        if prev_t >= self.schedule.total_samples:
            raise StreamLengthError(
                f"stream longer than declared T={self.schedule.total_samples}"
            )

        if prev_t + 1 <= self.schedule.exploration_end:
            mask = np.ones(len(values), dtype=bool)
        else:
            tau = self.schedule.tau_at(prev_t)
            estimates = self.sketch.estimate_batch(items)
            if self.gate_mode == "absolute":
                mask = np.abs(estimates) >= tau
            else:
                mask = estimates >= tau

        if mask.any():
            self.sketch.insert_batch(items[mask], values[mask])
        self.sketch.advance()
        return mask
