"""
Model domains, sampling grids and domain splitting.

All sampled sizes are multiples of 8, which keeps vectorized kernel code
paths comparable across the grid.
"""

import itertools
import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from common.errors import ToolkitError
from common.utils import round_to_multiple

from .config import GridKind

STEP = 8


class GridError(ToolkitError):
    """Raised when a grid cannot be placed in a domain"""
    pass


class UnsplittableDomainError(ToolkitError):
    """Raised when no dimension of a domain is wider than the minimum width"""
    pass


@dataclass(frozen=True)
class Domain:
    """Hyper-cuboid of size values: one inclusive [lower, upper] interval per size argument"""
    bounds: Tuple[Tuple[int, int], ...]

    def __post_init__(self):
        object.__setattr__(self, 'bounds', tuple((int(l), int(u)) for l, u in self.bounds))
        for lower, upper in self.bounds:
            if lower > upper:
                raise GridError(f"Empty interval [{lower}, {upper}]")
            if lower < STEP or lower % STEP or upper % STEP:
                raise GridError(
                    f"Interval [{lower}, {upper}] must lie on multiples of {STEP} from {STEP} up"
                )

    @property
    def dimensions(self):
        return len(self.bounds)

    @property
    def lower(self):
        return tuple(l for l, _ in self.bounds)

    @property
    def upper(self):
        return tuple(u for _, u in self.bounds)

    @property
    def widths(self):
        return tuple(u - l for l, u in self.bounds)

    @property
    def volume(self):
        return math.prod(self.widths)

    def contains(self, point):
        return all(l <= x <= u for x, (l, u) in zip(point, self.bounds))

    def as_list(self):
        return [list(bound) for bound in self.bounds]

    @classmethod
    def parse(cls, text, dimensions=None):
        """
        Domain from text like '24:536' or '24:4152,24:536'

        A single interval is repeated for every dimension when `dimensions`
        is given.
        """
        bounds = []
        for part in text.split(','):
            lower, _, upper = part.partition(':')
            bounds.append((int(lower), int(upper or lower)))
        if dimensions and len(bounds) == 1:
            bounds = bounds * dimensions
        if dimensions and len(bounds) != dimensions:
            raise GridError(f"Expected {dimensions} intervals, got {len(bounds)}")
        return cls(tuple(bounds))

    def __str__(self):
        return ' x '.join(f"[{l}, {u}]" for l, u in self.bounds)


def chebyshev_nodes(count):
    """Boundary-including Chebyshev nodes cos(i*pi/(count-1)), from 1 down to -1"""
    if count == 1:
        return np.zeros(1)
    return np.cos(np.arange(count) * np.pi / (count - 1))


def distinct_steps(lower, upper):
    """Number of multiples of 8 in [lower, upper]"""
    return max(0, upper // STEP - math.ceil(lower / STEP) + 1)


def grid_nodes(lower, upper, count, kind=GridKind.CHEBYSHEV):
    """
    Sample values along one dimension

    Args:
        lower: Interval lower bound
        upper: Interval upper bound
        count: Number of nodes requested
        kind: GridKind

    Returns:
        list: Sorted distinct multiples of 8 in [lower, upper]
    """
    kind = GridKind(kind)
    if lower == upper:
        return [round_to_multiple(lower, STEP)]
    if count < 2:
        raise GridError(f"At least 2 grid points are needed on [{lower}, {upper}], got {count}")
    if count > distinct_steps(lower, upper):
        raise GridError(
            f"{count} points do not fit on the multiples of {STEP} in [{lower}, {upper}]"
        )
    if kind is GridKind.CHEBYSHEV:
        unit = chebyshev_nodes(count)
    else:
        unit = np.linspace(-1.0, 1.0, count)
    values = lower + (unit + 1.0) / 2.0 * (upper - lower)
    return sorted({round_to_multiple(float(value), STEP) for value in values})


def grid_points(domain, counts, kind=GridKind.CHEBYSHEV):
    """
    Grid of sample points over a domain

    Args:
        domain: Domain, or a sequence of (lower, upper) intervals
        counts: Number of nodes per dimension
        kind: GridKind

    Returns:
        list: Point tuples, the cartesian product of the per-dimension nodes
    """
    bounds = getattr(domain, 'bounds', domain)
    axes = [grid_nodes(l, u, count, kind) for (l, u), count in zip(bounds, counts)]
    return list(itertools.product(*axes))


def split_point(lower, upper):
    """Rounded midpoint 8*floor((lower + upper + 8) / 16)"""
    return STEP * ((lower + upper + STEP) // (2 * STEP))


def split_domain(domain, min_width=STEP):
    """
    Split a domain in its relatively largest dimension

    Only dimensions wider than `min_width` are candidates; among them the
    one with the largest upper/lower ratio is split (lowest index on ties).

    Returns:
        tuple: (dimension, left Domain, right Domain)
    """
    candidates = [i for i, width in enumerate(domain.widths) if width > min_width]
    if not candidates:
        raise UnsplittableDomainError(f"No dimension of {domain} is wider than {min_width}")
    dimension = max(candidates, key=lambda i: (domain.upper[i] / domain.lower[i], -i))
    lower, upper = domain.bounds[dimension]
    middle = split_point(lower, upper)
    left = list(domain.bounds)
    right = list(domain.bounds)
    left[dimension] = (lower, middle)
    right[dimension] = (middle, upper)
    return dimension, Domain(tuple(left)), Domain(tuple(right))
