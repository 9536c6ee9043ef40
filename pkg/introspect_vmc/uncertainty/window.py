"""Sliding-window sum over per-tick uncertainties."""

import math
from fractions import Fraction
from typing import Iterable, List, Optional

from introspect_vmc.exceptions import InsufficientSamplesError, NonFiniteError

DEFAULT_WINDOW = 20


class UncertaintyTrace:
    """
    Per-tick uncertainties with a running window sum of length ``window``.

    The running sum is carried as an exact rational, so every reported window
    sum is the correctly rounded value of the true sum of the last
    ``min(t, window)`` entries, and consecutive sums telescope exactly.
    """

    def __init__(self, window: int = DEFAULT_WINDOW):
        if window < 1:
            raise ValueError("window must be positive")
        self.window = window
        self.values: List[float] = []
        self._sums: List[Fraction] = []

    def __len__(self) -> int:
        return len(self.values)

    def append(self, value: float) -> float:
        value = float(value)
        if not math.isfinite(value):
            raise NonFiniteError("Uncertainty values must be finite")
        running = self._sums[-1] if self._sums else Fraction(0)
        running += Fraction(value)
        if len(self.values) >= self.window:
            running -= Fraction(self.values[-self.window])
        self.values.append(value)
        self._sums.append(running)
        return float(running)

    def exact_window_sum(self, t: Optional[int] = None) -> Fraction:
        if not self.values:
            raise InsufficientSamplesError("The uncertainty trace is empty")
        t = len(self.values) if t is None else t
        if not 1 <= t <= len(self.values):
            raise IndexError(f"t must lie in [1, {len(self.values)}]")
        return self._sums[t - 1]

    def window_sum(self, t: Optional[int] = None) -> float:
        """Sum of the last ``min(t, window)`` entries up to tick ``t`` (1-based, default latest)."""
        return float(self.exact_window_sum(t))

    def max_window_sum(self) -> float:
        if not self._sums:
            raise InsufficientSamplesError("The uncertainty trace is empty")
        return float(max(self._sums))


def window_sum(trace: UncertaintyTrace, t: Optional[int] = None) -> float:
    return trace.window_sum(t)


def max_window_sum(uncertainties: Iterable[Optional[float]], window: int = DEFAULT_WINDOW) -> float:
    """Maximum sliding-window sum over a rollout's recorded uncertainties (``None`` skipped)."""
    trace = UncertaintyTrace(window)
    for value in uncertainties:
        if value is not None:
            trace.append(value)
    return trace.max_window_sum() if len(trace) else 0.0
