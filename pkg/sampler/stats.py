"""
Summary statistics of repeated timings.
"""

import math
from dataclasses import asdict, dataclass

import numpy as np

from common.errors import ToolkitError

STATISTICS = ('min', 'med', 'max', 'mean', 'std')


class EmptySampleError(ToolkitError):
    """Raised when summarizing an empty list of timings"""
    pass


@dataclass(frozen=True)
class SummaryStats:
    """min, median, max, mean and (population) standard deviation"""
    min: float = 0.0
    med: float = 0.0
    max: float = 0.0
    mean: float = 0.0
    std: float = 0.0

    def get(self, statistic):
        return getattr(self, statistic)

    def as_dict(self):
        return asdict(self)

    def is_ordered(self, tolerance=0.0):
        return (self.min <= self.med + tolerance and self.med <= self.max + tolerance
                and self.min <= self.mean + tolerance and self.mean <= self.max + tolerance
                and self.std >= 0)

    def scaled(self, factor):
        return SummaryStats(*(factor * value for value in self.values()))

    def values(self):
        return [self.min, self.med, self.max, self.mean, self.std]

    def __add__(self, other):
        """Sum of independent estimates: std adds in quadrature"""
        return SummaryStats(
            self.min + other.min, self.med + other.med, self.max + other.max,
            self.mean + other.mean, math.hypot(self.std, other.std),
        )

    @classmethod
    def constant(cls, value):
        return cls(value, value, value, value, 0.0)

    @classmethod
    def from_dict(cls, data):
        return cls(**{name: float(data[name]) for name in STATISTICS})


def summarize(timings):
    """
    Reduce repeated timings to summary statistics

    Args:
        timings: Sequence of runtimes in seconds

    Returns:
        SummaryStats: min, median, max, mean, population std
    """
    sample = np.asarray(list(timings), dtype=np.float64)
    if sample.size == 0:
        raise EmptySampleError("Cannot summarize an empty sample")
    low, high = float(np.min(sample)), float(np.max(sample))
    # rounding can push the mean of equal values just outside [min, max]
    mean = min(max(float(np.mean(sample)), low), high)
    return SummaryStats(
        min=low,
        med=float(np.median(sample)),
        max=high,
        mean=mean,
        std=float(np.std(sample)),
    )
