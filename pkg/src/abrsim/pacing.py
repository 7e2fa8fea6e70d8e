"""Cell-rate limiting on the integer nanosecond clock."""

from __future__ import annotations

import math

from .params import NS_PER_S


def cell_interval_ns(rate: float) -> int | None:
    """Inter-cell gap for ``rate`` cells/s, rounded up; None when rate is 0."""
    if rate <= 0:
        return None
    return math.ceil(NS_PER_S / rate)


class Gcra:
    """Generic cell rate algorithm, virtual-scheduling form.

    With the default zero tolerance this admits at most one cell per
    ``1/rate`` seconds.
    """

    def __init__(self, rate: float, tolerance_ns: int = 0):
        if rate <= 0:
            raise ValueError("rate must be positive")
        self.increment = cell_interval_ns(rate)
        self.tolerance = tolerance_ns
        self.tat: int | None = None

    def conforms(self, now: int) -> bool:
        return self.tat is None or now >= self.tat - self.tolerance

    def consume(self, now: int) -> bool:
        if not self.conforms(now):
            return False
        self.tat = max(now, self.tat or now) + self.increment
        return True
