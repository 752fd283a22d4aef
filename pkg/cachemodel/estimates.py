"""
In-algorithm runtime estimates from in-cache and out-of-cache timings.

Each operand of a call is associated with the cache according to its
relative access distance r = (cache - distance) / cache; the call's
estimate weights its in-cache and out-of-cache timings by the operand
bytes on either side.
"""

import logging
from dataclasses import dataclass, field
from typing import List

import numpy as np
import pandas as pd
from django.conf import settings

from common.errors import ToolkitError
from kernels.machines import load_machine
from kernels.signatures import Role
from predictor.algorithms import call_sequence, get_algorithm, problem_sizes, traversal_steps
from predictor.measurement import expand_inline
from sampler.preconditions import CachePrecondition, OperandAccess, RemoteAccess
from sampler.stats import SummaryStats

from .distances import DEFAULT_SPLIT_THRESHOLD, AccessHistory, region_bytes

logger = logging.getLogger(__name__)

ESTIMATE_COLUMNS = ['index', 'kernel', 'flags', 'sizes', 's_ic', 's_oc', 't_est']


class MissingTimingError(ToolkitError):
    """Raised when a call has no in-cache or out-of-cache timing"""
    pass


class ZeroWeightError(ToolkitError):
    """Raised when an estimate is requested with no operand bytes on either side"""
    pass


@dataclass(frozen=True)
class SmoothingParams:
    alpha: float = 4.0
    beta: float = 2.0

    def __post_init__(self):
        if self.alpha <= 0 or self.beta <= 0:
            raise ValueError(
                f"Smoothing coefficients must be positive, got alpha={self.alpha}, beta={self.beta}"
            )

    @classmethod
    def from_settings(cls):
        return cls(settings.DLAPERF_SMOOTHING_ALPHA, settings.DLAPERF_SMOOTHING_BETA)


def relative_distance(distance, cache_bytes):
    """(cache - distance) / cache; positive while the operand fits"""
    if cache_bytes <= 0:
        raise ValueError(f"Cache size must be positive, got {cache_bytes}")
    return (cache_bytes - np.asarray(distance, dtype=float)) / cache_bytes


def association(r, params=None, hard=False):
    """
    Cache association of relative distances: +1 in cache, -1 out of cache

    The hard rule is sign(r); the smooth one is tanh(alpha r) for r >= 0 and
    tanh(beta r) below.
    """
    r = np.asarray(r, dtype=float)
    if hard:
        return np.sign(r)
    params = params or SmoothingParams()
    return np.where(r >= 0, np.tanh(params.alpha * r), np.tanh(params.beta * r))


def smooth_weights(sizes, distances, cache_bytes, params=None, hard=False):
    """
    In-cache and out-of-cache operand bytes of one call

    Args:
        sizes: Operand sizes in bytes
        distances: Matching access distances in bytes
        cache_bytes: Cache size
        params: SmoothingParams (default alpha=4, beta=2)
        hard: Use the sign function instead of the smooth association

    Returns:
        tuple: (s_ic, s_oc), summing to the total operand bytes
    """
    sizes = np.asarray(sizes, dtype=float)
    if sizes.size == 0:
        return 0.0, 0.0
    f = association(relative_distance(distances, cache_bytes), params, hard)
    s_ic = float(np.sum((1 + f) / 2 * sizes))
    return s_ic, float(np.sum(sizes)) - s_ic


def initial_estimate(s_ic, s_oc, t_ic, t_oc):
    """(s_ic t_ic + s_oc t_oc) / (s_ic + s_oc)"""
    total = s_ic + s_oc
    if total <= 0:
        raise ZeroWeightError("No operand bytes to weight the timings with")
    return (s_ic * t_ic + s_oc * t_oc) / total


def in_cache_setup(call):
    """Precondition loading every input-only operand right before the call"""
    return CachePrecondition([
        OperandAccess.of(call, data.name) for data in call.descriptor.data
        if data.role is Role.INPUT
    ])


def out_of_cache_setup(call, machine):
    """Precondition streaming through twice the machine's largest cache"""
    machine = load_machine(machine)
    return CachePrecondition([RemoteAccess(2 * machine.cache_bytes)])


def measure_timings(sampler, calls, machine, repetitions=10, statistic='med'):
    """
    In-cache and out-of-cache timings of every distinct call signature

    Returns:
        tuple: (ic, oc), dicts of call signature -> seconds
    """
    unique = {}
    for call in calls:
        if not call.is_pseudo and all(call.sizes.values()):
            unique.setdefault(call.signature(), call)
    representatives = list(unique.values())
    ic = sampler.measure(representatives, repetitions, [in_cache_setup(c) for c in representatives])
    oc = sampler.measure(
        representatives, repetitions, [out_of_cache_setup(c, machine) for c in representatives],
    )
    logger.info(f"Measured in- and out-of-cache timings of {len(representatives)} call(s)")
    return ({key: stats.get(statistic) for key, stats in zip(unique, ic)},
            {key: stats.get(statistic) for key, stats in zip(unique, oc)})


def _timing(timings, call, statistic):
    try:
        value = timings[call.signature()]
    except KeyError:
        raise MissingTimingError(f"No timing for {call}")
    return value.get(statistic) if isinstance(value, SummaryStats) else float(value)


@dataclass
class CallEstimate:
    index: int
    call: object
    s_ic: float
    s_oc: float
    t_est: float

    def as_row(self):
        return {
            'index': self.index,
            'kernel': self.call.kernel,
            'flags': self.call.flag_string,
            'sizes': ' '.join(str(size) for size in self.call.sizes.values()),
            's_ic': self.s_ic,
            's_oc': self.s_oc,
            't_est': self.t_est,
        }


@dataclass
class CacheEstimates:
    estimates: List[CallEstimate] = field(default_factory=list)

    @property
    def total(self):
        return sum(estimate.t_est for estimate in self.estimates)

    def __len__(self):
        return len(self.estimates)

    def as_frame(self):
        return pd.DataFrame([e.as_row() for e in self.estimates], columns=ESTIMATE_COLUMNS)


def estimate_sequence(calls, ic, oc, cache_bytes, params=None, hard=False, history=None,
                      total_bytes=None, threshold=DEFAULT_SPLIT_THRESHOLD, line_bytes=None,
                      statistic='med'):
    """
    Per-call estimates of a call sequence

    Args:
        calls: Call sequence without pseudo-calls
        ic: Call signature -> in-cache timing (seconds or SummaryStats)
        oc: Call signature -> out-of-cache timing
        cache_bytes: Cache size
        params: SmoothingParams
        hard: Use the sign association
        history: Preceding calls scanned for access distances (None: all)
        total_bytes: Distance of operands not found in the history

    Returns:
        CacheEstimates
    """
    history = AccessHistory(calls, cache_bytes, history, total_bytes, threshold, line_bytes)
    estimates = []
    for index, call in enumerate(history.calls):
        records = history.records[index]
        sizes = [record.nbytes for record in records]
        if not any(sizes) or not all(call.sizes.values()):
            estimates.append(CallEstimate(index, call, 0.0, 0.0, 0.0))
            continue
        distances = [history.distance(index, record.operand) for record in records]
        s_ic, s_oc = smooth_weights(sizes, distances, cache_bytes, params, hard)
        t_est = initial_estimate(
            s_ic, s_oc, _timing(ic, call, statistic), _timing(oc, call, statistic),
        )
        logger.debug(f"{index} {call}: s_ic={s_ic:.0f} s_oc={s_oc:.0f} t_est={t_est:.3e}")
        estimates.append(CallEstimate(index, call, s_ic, s_oc, t_est))
    return CacheEstimates(estimates)


def calls_per_step(algorithm, sizes, b, calls):
    """Average number of calls per traversal step, rounded up"""
    algorithm = get_algorithm(algorithm)
    m, n = problem_sizes(sizes, algorithm.square)
    steps = len(traversal_steps(algorithm.traversal, m, n, int(b)))
    return max(1, -(-len(calls) // max(1, steps)))


def algorithm_bytes(algorithm, sizes, b, line_bytes=None):
    """Size of all of an algorithm's operands"""
    algorithm = get_algorithm(algorithm)
    m, n = problem_sizes(sizes, algorithm.square)
    return sum(
        region_bytes(OperandAccess(name, 0, region.rows, region.cols, region.ld), line_bytes)
        for name, region in algorithm.bases(m, n, b).items()
    )


def combined_estimates(algorithm, sizes, b, ic, oc, machine, params=None, hard=False,
                       threshold=DEFAULT_SPLIT_THRESHOLD, line_bytes=None, statistic='med'):
    """
    Cache-aware per-call estimates of a blocked algorithm

    Access distances look back one traversal step's worth of calls; operands
    not found there are taken to be as far away as all of the algorithm's
    operands together. Pseudo-calls are replaced by their inline calls.

    Args:
        algorithm: BlockedAlgorithm or name
        sizes: n, or {'m': m, 'n': n}
        b: Block size
        ic: Call signature -> in-cache timing
        oc: Call signature -> out-of-cache timing
        machine: MachineSpec or name; its largest cache is the one modeled
        params: SmoothingParams
        hard: Sign association ("splitting estimates") instead of smoothing

    Returns:
        CacheEstimates
    """
    algorithm = get_algorithm(algorithm)
    machine = load_machine(machine)
    calls = expand_inline(call_sequence(algorithm, sizes, b))
    estimates = estimate_sequence(
        calls, ic, oc, machine.cache_bytes, params, hard,
        history=calls_per_step(algorithm, sizes, b, calls),
        total_bytes=algorithm_bytes(algorithm, sizes, b, line_bytes),
        threshold=threshold, line_bytes=line_bytes, statistic=statistic,
    )
    logger.info(
        f"{algorithm.name} b={b}: cache-aware estimate {estimates.total:.4e} s "
        f"over {len(estimates)} calls ({'hard' if hard else 'smooth'} association)"
    )
    return estimates
