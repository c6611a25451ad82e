"""Free-running oscillator model shared by the transmitter and the ADC."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ClockModel:
    """A clock of ``nominal_rate`` Hz that runs ``ppm_offset`` fast.

    ``jitter_std`` is the standard deviation (seconds) of independent Gaussian
    jitter on every tick, truncated at 4 sigma and at 45 % of a period so that
    ticks stay strictly increasing.  ``phase`` is the time of tick 0.
    """

    nominal_rate: float
    ppm_offset: float = 0.0
    jitter_std: float = 0.0
    phase: float = 0.0

    def __post_init__(self):
        if not self.nominal_rate > 0:
            raise ValueError("nominal_rate must be positive")
        if not self.effective_rate > 0:
            raise ValueError("ppm_offset makes the effective rate non-positive")
        if self.jitter_std < 0:
            raise ValueError("jitter_std must be >= 0")

    @property
    def effective_rate(self) -> float:
        return self.nominal_rate * (1.0 + self.ppm_offset * 1e-6)

    @property
    def period(self) -> float:
        return 1.0 / self.effective_rate

    def ticks(self, start: int, stop: int, rng: np.random.Generator | None = None) -> np.ndarray:
        """Times of ticks ``start .. stop-1``."""
        k = np.arange(start, stop, dtype=np.float64)
        t = self.phase + k / self.effective_rate
        if self.jitter_std > 0:
            if rng is None:
                raise ValueError("a random generator is required when jitter_std > 0")
            limit = min(4.0 * self.jitter_std, 0.45 * self.period)
            t = t + np.clip(rng.normal(0.0, self.jitter_std, t.size), -limit, limit)
        return t

    def count_before(self, t_end: float) -> int:
        """Number of nominal ticks strictly earlier than ``t_end``."""
        n = np.ceil((t_end - self.phase) * self.effective_rate - 1e-9)
        return max(int(n), 0)
