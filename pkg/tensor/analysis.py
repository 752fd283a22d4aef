"""
Access distances inside a contraction algorithm's loop nest.

Every kernel or copy in the nest touches memory regions: tensor slices
with some indices fixed by the surrounding loops, or whole copy buffers.
The distance of a region is the amount of data touched since its previous
use, found by walking outward from the kernel through the enclosing loops:

- if the region does not change across a loop, it was used in the previous
  iteration of the loop below and the walk stops;
- otherwise everything inside that loop (joined across it) was touched in
  between, and the walk continues one loop further out;
- past the outermost loop the region was never used before.

Distances and sizes are in elements.
"""

import itertools
import logging
import math
from dataclasses import dataclass
from typing import Dict, FrozenSet, Optional, Tuple

from common.utils import DOUBLE_BYTES

from .algorithms import MatrixOperand

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Region:
    tensor: str
    indices: Tuple[str, ...]
    fixed: FrozenSet[str] = frozenset()

    def varies(self, index):
        return index in self.fixed

    def join(self, loops):
        """The region covered across all iterations of `loops`"""
        return Region(self.tensor, self.indices, self.fixed - frozenset(loops))

    def size(self, extents):
        return math.prod(extents[index] for index in self.indices if index not in self.fixed)


@dataclass(frozen=True)
class AccessNode:
    """A kernel or copy placed `depth` loops deep, with its regions by label"""
    name: str
    depth: int
    regions: Dict[str, Region]


def slice_region(piece):
    return Region(piece.tensor, piece.indices, frozenset(piece.fixed))


def buffer_region(operand):
    return Region(operand.buffer, (operand.rows, operand.cols))


def kernel_regions(algorithm):
    """Kernel argument -> Region; copied matrices are their copy buffers"""
    regions = {}
    for argument, operand in algorithm.operands.items():
        if isinstance(operand, MatrixOperand) and operand.copied:
            regions[argument] = buffer_region(operand)
        else:
            regions[argument] = slice_region(algorithm.slice(argument))
    return regions


def access_nodes(algorithm):
    nodes = [AccessNode('kernel', len(algorithm.loops), kernel_regions(algorithm))]
    for copy in algorithm.copies:
        regions = {'source': slice_region(copy.operand.slice),
                   'buffer': buffer_region(copy.operand)}
        nodes.append(AccessNode(f"copy {copy.operand.buffer}", copy.depth, regions))
    return nodes


def union_size(regions, extents):
    """Number of distinct elements covered by regions taken at one loop point"""
    groups = {}
    for region in regions:
        groups.setdefault((region.tensor, region.indices), set()).add(region.fixed)
    total = 0
    for (_, indices), fixed_sets in groups.items():
        fixed_sets = list(fixed_sets)
        for count in range(1, len(fixed_sets) + 1):
            sign = 1 if count % 2 else -1
            for subset in itertools.combinations(fixed_sets, count):
                fixed = frozenset().union(*subset)
                total += sign * math.prod(extents[index] for index in indices
                                          if index not in fixed)
    return total


def _members(nodes, loops, level):
    inner = loops[level:]
    return [region.join(inner) for node in nodes if node.depth > level
            for region in node.regions.values()]


def traverse(algorithm, region, depth, members=()):
    """
    Distance of a region accessed `depth` loops deep

    Args:
        algorithm: ContractionAlgorithm
        region: Region at the access
        depth: Number of loops enclosing the access
        members: Regions already known to be touched since the access

    Returns:
        int: Distance in elements
    """
    nodes = access_nodes(algorithm)
    loops = algorithm.loops
    members = list(members)
    for level in range(depth - 1, -1, -1):
        index = loops[level]
        if not region.varies(index):
            break
        members = _members(nodes, loops, level)
        region = region.join((index,))
    return union_size(members, algorithm.spec.extents)


def _resolve(algorithm, operand):
    regions = kernel_regions(algorithm)
    if operand in regions:
        return operand, regions[operand]
    for argument in regions:
        if algorithm.label(argument) == operand:
            return argument, regions[argument]
    raise KeyError(f"{algorithm.name} has no operand {operand}")


def access_distance_ast(algorithm, operand):
    """
    Distance of a kernel operand in the steady state of the loop nest

    Args:
        algorithm: ContractionAlgorithm
        operand: Kernel argument ('A', 'x', ...) or slice text ('B[:,:,c]')

    Returns:
        int: Distance in elements
    """
    _, region = _resolve(algorithm, operand)
    return traverse(algorithm, region, len(algorithm.loops))


def first_iteration_distance(algorithm, operand, level):
    """
    Distance of a kernel operand in the first iteration of loop `level`

    The walk starts at that loop with everything inside it already touched.
    """
    _, region = _resolve(algorithm, operand)
    inner = algorithm.loops[level:]
    members = _members(access_nodes(algorithm), algorithm.loops, level)
    return traverse(algorithm, region.join(inner), level, members)


def copy_distances(algorithm, copy, back=False):
    """
    Distances of a copy's slice and buffer

    A copy-back finds its slice touched by the copy at the start of the same
    iteration and its buffer by the last kernel call.
    """
    source, buffer = slice_region(copy.operand.slice), buffer_region(copy.operand)
    if back:
        members = _members(access_nodes(algorithm), algorithm.loops, copy.depth)
        return {'source': union_size(members, algorithm.spec.extents), 'buffer': 0}
    return {'source': traverse(algorithm, source, copy.depth),
            'buffer': traverse(algorithm, buffer, copy.depth)}


@dataclass(frozen=True)
class Prefetch:
    """
    A kernel operand brought into cache by the hardware prefetcher.

    `elements` is the part prefetched (one cache line along the operand's
    contiguous dimension); `shares_lines` marks operands whose successive
    slices lie in the same cache lines.
    """
    argument: str
    distance: int
    elements: int
    rows: Optional[int]
    shares_lines: bool


def detect_prefetch(algorithm, operand, line_bytes=64):
    """
    Whether an operand is prefetched across the innermost loop

    The operand must change across the loop that directly surrounds the
    kernel, and that loop must run along its contiguous dimension or along
    the next one while the contiguous one is accessed whole or fits in a
    cache line.

    Returns:
        Prefetch or None
    """
    argument, region = _resolve(algorithm, operand)
    if not algorithm.loops:
        return None
    index = algorithm.loops[-1]
    if not region.varies(index):
        return None
    extents = algorithm.spec.extents
    line_doubles = max(1, line_bytes // DOUBLE_BYTES)
    first = region.indices[0]
    distance = traverse(algorithm, region.join((index,)), len(algorithm.loops))
    size = region.size(extents)
    if index == first:
        return Prefetch(argument, distance, size, None, True)
    if len(region.indices) < 2 or index != region.indices[1]:
        return None
    if region.varies(first):
        if extents[first] > line_doubles:
            return None
        return Prefetch(argument, distance, size, None, False)
    rows = min(extents[first], line_doubles)
    return Prefetch(argument, distance, size // extents[first] * rows, rows, False)


def operand_distances(algorithm):
    """Kernel argument -> steady-state distance"""
    return {argument: access_distance_ast(algorithm, argument)
            for argument in kernel_regions(algorithm)}
