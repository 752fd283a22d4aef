"""
Micro-benchmarks reproducing the cache state of a kernel inside a
contraction algorithm.

A benchmark is one representative kernel call plus a setup: operand
accesses interleaved with remote accesses so that, when the call starts,
every operand was last touched at its access distance. Variants of a call
(first iterations of a loop, prefetch failures) get their own benchmarks,
weighted by the share of invocations they stand for.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import List, Optional, Tuple

from django.conf import settings

from common.errors import ToolkitError
from common.utils import DOUBLE_BYTES
from kernels.machines import load_machine
from sampler.plans import MeasurementPlan, WarmPolicy, run_plan
from sampler.preconditions import CachePrecondition, OperandAccess, RemoteAccess

from .analysis import (copy_distances, detect_prefetch, first_iteration_distance,
                       kernel_regions, operand_distances)
from .execution import copy_calls, copy_invocations, invocations, kernel_call

logger = logging.getLogger(__name__)

REMOTE = 'remote'
TRUNCATION_FACTOR = 1.25
FIRST_ITERATION_SHARE = 0.01


class UnrealizableSetupError(ToolkitError):
    """Raised when access distances cannot be turned into a setup"""
    pass


class PredictionLevel(Enum):
    """How much of the in-algorithm cache state the benchmarks reproduce"""
    REPEAT = 'repeat'
    CACHE = 'cache'
    PREFETCH = 'prefetch'
    FULL = 'full'


@dataclass(frozen=True)
class SetupEntry:
    label: str
    elements: int
    distance: float
    accesses: Tuple[OperandAccess, ...] = ()


@dataclass(frozen=True)
class SetupItem:
    label: str
    elements: int
    accesses: Tuple[OperandAccess, ...] = ()

    @property
    def remote(self):
        return self.label == REMOTE


@dataclass
class Setup:
    items: List[SetupItem] = field(default_factory=list)

    @property
    def elements(self):
        return sum(item.elements for item in self.items)

    def summary(self):
        return [(item.label, item.elements) for item in self.items]

    def precondition(self):
        """CachePrecondition performing the setup, None when empty"""
        if not self.items:
            return None
        accesses = []
        for item in self.items:
            if item.remote:
                accesses.append(RemoteAccess(item.elements * DOUBLE_BYTES))
            else:
                accesses.extend(item.accesses)
        return CachePrecondition(accesses)

    def __len__(self):
        return len(self.items)


def _merge_remote(items):
    merged = []
    for item in items:
        if merged and item.remote and merged[-1].remote:
            merged[-1] = SetupItem(REMOTE, merged[-1].elements + item.elements)
        else:
            merged.append(item)
    return merged


def build_setup(entries, cache_bytes, factor=TRUNCATION_FACTOR):
    """
    Order operand accesses and remote accesses by access distance

    Operands are accessed from the largest distance down; after each one a
    remote access fills the gap to the next, and the nearest operand is
    followed by a remote access of its own distance. Setups longer than
    `factor` times the cache are cut at the front: only the last
    `factor * cache` elements matter, and an operand straddling the cut is
    replaced by a remote access of the part that remains.

    Args:
        entries: SetupEntries
        cache_bytes: Size of the cache the setup fills
        factor: Truncation threshold relative to the cache

    Returns:
        Setup
    """
    for entry in entries:
        if not math.isfinite(entry.distance) or entry.distance < 0:
            raise UnrealizableSetupError(f"{entry.label}: invalid access distance {entry.distance}")
    if all(entry.distance == 0 for entry in entries):
        return Setup()
    ordered = sorted(entries, key=lambda entry: -entry.distance)
    items = []
    for position, entry in enumerate(ordered):
        items.append(SetupItem(entry.label, entry.elements, entry.accesses))
        following = ordered[position + 1] if position + 1 < len(ordered) else None
        gap = entry.distance - (following.distance + following.elements if following else 0)
        if gap < 0:
            logger.debug(f"{entry.label} is {-gap:.0f} elements nearer than its successors allow")
        elif gap > 0:
            items.append(SetupItem(REMOTE, int(gap)))
    budget = int(factor * cache_bytes // DOUBLE_BYTES)
    if ordered[0].distance > budget:
        kept, total = [], 0
        for item in reversed(items):
            if total + item.elements > budget:
                if budget > total:
                    kept.append(SetupItem(REMOTE, budget - total))
                break
            kept.append(item)
            total += item.elements
        items = list(reversed(kept))
    return Setup(_merge_remote(items))


@dataclass
class MicroBenchmark:
    """
    One call to time, with its setup.

    `count` is how often the node runs in the algorithm and `weight` the
    share of those runs this variant stands for.
    """
    node: str
    call: object
    setup: Setup
    weight: float
    count: int
    variant: str = 'base'
    loop: Optional[str] = None

    def __str__(self):
        where = f" ({self.loop})" if self.loop else ''
        return f"{self.node} {self.variant}{where} x{self.count} w={self.weight:.4g}"


def _label(algorithm, argument):
    operand = algorithm.operands[argument]
    buffer = getattr(operand, 'buffer', None)
    return buffer or algorithm.label(argument)


def _kernel_entries(algorithm, call, distances):
    extents = algorithm.spec.extents
    regions = kernel_regions(algorithm)
    return [
        SetupEntry(_label(algorithm, argument), regions[argument].size(extents),
                   distances[argument], (OperandAccess.of(call, argument),))
        for argument in call.operands
    ]


def _with_prefetch(algorithm, call, entries, prefetches):
    """Entries with prefetched parts of operands at their prefetch distances"""
    by_label = {entry.label: entry for entry in entries}
    result = list(entries)
    for prefetch in prefetches:
        label = _label(algorithm, prefetch.argument)
        entry = by_label[label]
        if prefetch.elements >= entry.elements:
            result[result.index(entry)] = replace(entry, distance=min(entry.distance,
                                                                      prefetch.distance))
            continue
        access = OperandAccess.of(call, prefetch.argument)
        if prefetch.rows is not None:
            access = replace(access, rows=min(access.rows, prefetch.rows))
        result.append(SetupEntry(f"{label} prefetch", prefetch.elements, prefetch.distance,
                                 (access,)))
    return result


def first_iteration_levels(algorithm, share=FIRST_ITERATION_SHARE):
    """
    Loops whose first iterations get their own benchmark, with weights

    A loop qualifies when the invocations at its first iteration (and the
    first iteration of every loop inside it) exceed `share` of all
    invocations. Loops of extent 1 are skipped.

    Returns:
        list: (loop position, weight), innermost first
    """
    spec = algorithm.spec
    fractions = []
    fraction = 1.0
    for level in range(len(algorithm.loops) - 1, -1, -1):
        extent = spec.extent(algorithm.loops[level])
        if extent == 1:
            continue
        fraction /= extent
        if fraction <= share:
            break
        fractions.append((level, fraction))
    return [(level, fraction - (fractions[position + 1][1] if position + 1 < len(fractions) else 0))
            for position, (level, fraction) in enumerate(fractions)]


def kernel_benchmarks(algorithm, cache_bytes, level=PredictionLevel.FULL, line_bytes=64):
    level = PredictionLevel(level)
    call = kernel_call(algorithm, {})
    count = invocations(algorithm)
    if level is PredictionLevel.REPEAT:
        return [MicroBenchmark('kernel', call, Setup(), 1.0, count)]
    distances = operand_distances(algorithm)
    entries = _kernel_entries(algorithm, call, distances)
    if level is PredictionLevel.CACHE:
        return [MicroBenchmark('kernel', call, build_setup(entries, cache_bytes), 1.0, count)]
    prefetches = [prefetch for prefetch in
                  (detect_prefetch(algorithm, argument, line_bytes) for argument in call.operands)
                  if prefetch is not None]
    base = build_setup(_with_prefetch(algorithm, call, entries, prefetches), cache_bytes)
    if level is PredictionLevel.PREFETCH:
        return [MicroBenchmark('kernel', call, base, 1.0, count)]
    benchmarks = []
    for position, weight in first_iteration_levels(algorithm):
        first = {argument: first_iteration_distance(algorithm, argument, position)
                 for argument in call.operands}
        setup = build_setup(_kernel_entries(algorithm, call, first), cache_bytes)
        benchmarks.append(MicroBenchmark('kernel', call, setup, weight, count,
                                         'first-iteration', algorithm.loops[position]))
    remaining = 1.0 - sum(benchmark.weight for benchmark in benchmarks)
    if any(prefetch.shares_lines for prefetch in prefetches):
        failure_share = DOUBLE_BYTES / line_bytes
        kept = [prefetch for prefetch in prefetches if not prefetch.shares_lines]
        failure = build_setup(_with_prefetch(algorithm, call, entries, kept), cache_bytes)
        benchmarks.insert(0, MicroBenchmark('kernel', call, failure, remaining * failure_share,
                                            count, 'prefetch-failure'))
        remaining *= 1 - failure_share
    benchmarks.insert(0, MicroBenchmark('kernel', call, base, remaining, count))
    return benchmarks


def copy_benchmarks(algorithm, cache_bytes, level=PredictionLevel.FULL):
    spec = algorithm.spec
    benchmarks = []
    for copy in algorithm.copies:
        runs = copy_invocations(algorithm, copy) // (2 if copy.back else 1)
        for back in ((False, True) if copy.back else (False,)):
            call = copy_calls(spec, copy, {}, back)[0]
            node = f"{'copy-back' if back else 'copy'} {copy.operand.buffer}"
            setup = Setup()
            if PredictionLevel(level) is not PredictionLevel.REPEAT:
                distances = copy_distances(algorithm, copy, back)
                slice_side, buffer_side = ('y', 'x') if back else ('x', 'y')
                source = copy.operand.slice
                entries = [
                    SetupEntry(source.text(spec.name(source.tensor)),
                               spec.extent(copy.operand.rows), distances['source'],
                               (OperandAccess.of(call, slice_side),)),
                    SetupEntry(copy.operand.buffer, spec.extent(copy.operand.rows),
                               distances['buffer'], (OperandAccess.of(call, buffer_side),)),
                ]
                setup = build_setup(entries, cache_bytes)
            benchmarks.append(MicroBenchmark(node, call, setup, 1.0, runs))
    return benchmarks


def build_benchmarks(algorithm, cache_bytes=None, level=PredictionLevel.FULL, line_bytes=None):
    """
    All micro-benchmarks of an algorithm

    Args:
        algorithm: ContractionAlgorithm
        cache_bytes: Size of the modeled cache
        level: PredictionLevel
        line_bytes: Cache line size (default DLAPERF_CACHE_LINE)

    Returns:
        list: MicroBenchmarks; the weights of each node's benchmarks sum to 1
    """
    line_bytes = line_bytes or settings.DLAPERF_CACHE_LINE
    if cache_bytes is None:
        cache_bytes = load_machine(settings.DLAPERF_MACHINE).cache_bytes
    benchmarks = (kernel_benchmarks(algorithm, cache_bytes, level, line_bytes)
                  + copy_benchmarks(algorithm, cache_bytes, level))
    logger.debug(
        f"{algorithm.name}: {len(benchmarks)} benchmarks at level {PredictionLevel(level).value}"
    )
    return benchmarks


def measure_benchmarks(sampler, benchmarks, repetitions=10, statistic='med'):
    """
    Time every benchmark with its setup applied before each repetition

    Returns:
        list: One timing in seconds per benchmark
    """
    plan = MeasurementPlan(
        [benchmark.call for benchmark in benchmarks], repetitions, sampler.shuffle,
        WarmPolicy.EXPLICIT_WARM, sampler.timer, sampler.next_seed(),
        [benchmark.setup.precondition() for benchmark in benchmarks],
    )
    stats = run_plan(plan, sampler.backend, sampler.machine).stats()
    return [summary.get(statistic) for summary in stats]
