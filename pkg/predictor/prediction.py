"""
Runtime, performance and efficiency predictions for blocked algorithms,
built by summing per-call kernel estimates, plus accuracy scoring,
algorithm ranking and block-size optimization.
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional

import pandas as pd

from common.errors import ToolkitError
from kernels.costs import blocked_cost
from modelgen.piecewise import OutOfDomainError, UnmodeledCaseError
from sampler.stats import STATISTICS, SummaryStats

from .algorithms import call_sequence, get_algorithm, problem_sizes

logger = logging.getLogger(__name__)

EXPORT_COLUMNS = ['algorithm', 'n', 'b', 'statistic', 'runtime_s', 'perf_flops_s', 'efficiency']


class UnmodeledCallError(ToolkitError):
    """Raised when a call in a sequence has no applicable model"""
    pass


class ZeroRuntimeError(ToolkitError):
    """Raised when a performance is requested for a nonpositive runtime"""
    pass


class ZeroMeasurementError(ToolkitError):
    """Raised when a relative error is requested against a zero measurement"""
    pass


class BlocksizeRangeError(ToolkitError):
    """Raised for an empty block size range"""
    pass


class RuntimeEstimator:
    """
    Estimator from a plain runtime function, e.g. a synthetic flop-rate model

    Args:
        runtime: Callable(call) -> seconds
    """

    def __init__(self, runtime):
        self.runtime = runtime

    def estimate(self, call):
        if call.is_pseudo or any(size == 0 for size in call.sizes.values()):
            return SummaryStats()
        return SummaryStats.constant(self.runtime(call))


def predict_runtime(estimator, calls):
    """
    Sum the estimates of a call sequence

    min, med, max and mean add up; std adds in quadrature (uncorrelated
    estimates). Pseudo-calls are estimated at zero, as are unmodeled row
    interchanges (dlaswp), which do no floating-point work.

    Args:
        estimator: Object with estimate(call) -> SummaryStats (e.g. a ModelSet)
        calls: Call sequence

    Returns:
        SummaryStats: Predicted runtime statistics in seconds
    """
    total = SummaryStats()
    skipped = 0
    for call in calls:
        if call.is_pseudo:
            skipped += 1
            continue
        try:
            estimate = estimator.estimate(call)
        except UnmodeledCaseError as e:
            if call.kernel == 'dlaswp':
                skipped += 1
                continue
            raise UnmodeledCallError(f"{call}: {str(e)}")
        except OutOfDomainError as e:
            raise UnmodeledCallError(f"{call}: {str(e)}")
        logger.debug(f"{call}: med {estimate.med:.3e} s")
        total = total + estimate
    if skipped:
        logger.warning(f"{skipped} call(s) without a kernel model were estimated at 0")
    return total


def predict_performance(runtime, cost):
    """
    Performance statistics from runtime statistics

    min and max swap roles (the fastest run has the highest performance);
    mean and std use the second- and first-order Taylor approximations of
    cost / t.

    Args:
        runtime: SummaryStats in seconds
        cost: Flop count

    Returns:
        SummaryStats: flops/s
    """
    if cost == 0:
        return SummaryStats()
    if min(runtime.min, runtime.med, runtime.max, runtime.mean) <= 0:
        raise ZeroRuntimeError(f"Cannot derive performance from runtime {runtime}")
    mean, std = runtime.mean, runtime.std
    return SummaryStats(
        min=cost / runtime.max,
        med=cost / runtime.med,
        max=cost / runtime.min,
        mean=cost / mean * (1 + std ** 2 / mean ** 2),
        std=cost * std / mean ** 2,
    )


def predict_efficiency(performance, machine, threads=1):
    """Performance statistics as fractions of the machine's peak"""
    return performance.scaled(1.0 / machine.peak(threads))


@dataclass
class AccuracyReport:
    """Prediction minus measurement, absolute and relative, per statistic"""
    err: Dict[str, float]
    re: Dict[str, float]
    are: Dict[str, float]

    def as_frame(self):
        rows = [{
            'statistic': statistic,
            'err': self.err[statistic],
            'RE': self.re.get(statistic),
            'ARE': self.are.get(statistic),
        } for statistic in STATISTICS]
        return pd.DataFrame(rows, columns=['statistic', 'err', 'RE', 'ARE'])


def accuracy(prediction, measurement, statistics=STATISTICS):
    """
    Errors of predicted statistics against measured ones

    Args:
        prediction: SummaryStats
        measurement: SummaryStats
        statistics: Statistics to report relative errors for, all five by default

    Returns:
        AccuracyReport
    """
    err = {s: prediction.get(s) - measurement.get(s) for s in STATISTICS}
    re = {}
    for statistic in statistics:
        measured = measurement.get(statistic)
        if measured == 0:
            raise ZeroMeasurementError(f"Measured {statistic} is zero")
        re[statistic] = err[statistic] / measured
    return AccuracyReport(err, re, {s: abs(value) for s, value in re.items()})


@dataclass
class Prediction:
    algorithm: str
    sizes: Dict[str, int]
    b: int
    runtime: SummaryStats
    performance: SummaryStats
    efficiency: Optional[SummaryStats] = None
    cost: int = 0
    calls: int = 0
    pseudo_calls: int = 0

    def as_dict(self):
        return {
            'algorithm': self.algorithm,
            'sizes': dict(self.sizes),
            'b': self.b,
            'cost': self.cost,
            'calls': self.calls,
            'pseudo_calls': self.pseudo_calls,
            'runtime': self.runtime.as_dict(),
            'performance': self.performance.as_dict(),
            'efficiency': self.efficiency.as_dict() if self.efficiency else None,
        }

    @classmethod
    def from_dict(cls, data):
        efficiency = data.get('efficiency')
        return cls(
            data['algorithm'], dict(data['sizes']), int(data['b']),
            SummaryStats.from_dict(data['runtime']), SummaryStats.from_dict(data['performance']),
            SummaryStats.from_dict(efficiency) if efficiency else None,
            int(data.get('cost', 0)), int(data.get('calls', 0)), int(data.get('pseudo_calls', 0)),
        )

    def rows(self):
        """One export row per statistic"""
        n = self.sizes.get('n')
        return [{
            'algorithm': self.algorithm,
            'n': n,
            'b': self.b,
            'statistic': statistic,
            'runtime_s': self.runtime.get(statistic),
            'perf_flops_s': self.performance.get(statistic),
            'efficiency': self.efficiency.get(statistic) if self.efficiency else None,
        } for statistic in STATISTICS]


def algorithm_cost(algorithm, sizes):
    """Closed-form minimal cost of the operation an algorithm computes"""
    algorithm = get_algorithm(algorithm)
    m, n = problem_sizes(sizes, algorithm.square)
    return blocked_cost(algorithm.operation, {'m': m, 'n': n})


def predict(estimator, algorithm, sizes, b, machine=None, threads=1):
    """
    Predict one blocked algorithm run

    Args:
        estimator: Object with estimate(call) -> SummaryStats
        algorithm: BlockedAlgorithm or name
        sizes: n, or {'m': m, 'n': n}
        b: Block size
        machine: MachineSpec for the efficiency (optional)
        threads: Thread count for the peak

    Returns:
        Prediction
    """
    algorithm = get_algorithm(algorithm)
    m, n = problem_sizes(sizes, algorithm.square)
    calls = call_sequence(algorithm, {'m': m, 'n': n}, b)
    runtime = predict_runtime(estimator, calls)
    cost = algorithm_cost(algorithm, {'m': m, 'n': n})
    performance = predict_performance(runtime, cost)
    efficiency = predict_efficiency(performance, machine, threads) if machine else None
    pseudo = sum(1 for call in calls if call.is_pseudo)
    logger.info(f"{algorithm.name} m={m} n={n} b={b}: predicted {runtime.med:.4e} s")
    return Prediction(
        algorithm.name, {'m': m, 'n': n}, int(b), runtime, performance, efficiency, cost,
        len(calls) - pseudo, pseudo,
    )


def rank_algorithms(estimator, algorithms, sizes, b, machine=None, threads=1):
    """
    Predictions of several algorithms, fastest predicted median first

    Ties keep the input order.
    """
    predictions = [predict(estimator, a, sizes, b, machine, threads) for a in algorithms]
    return sorted(predictions, key=lambda prediction: prediction.runtime.med)


def blocksize_range(lower, upper, step=8):
    """Block sizes lower, lower + step, ... up to upper inclusive"""
    if step < 1:
        raise BlocksizeRangeError(f"Block size step must be at least 1, got {step}")
    blocksizes = list(range(max(1, int(lower)), int(upper) + 1, int(step)))
    if not blocksizes:
        raise BlocksizeRangeError(f"Empty block size range [{lower}, {upper}]")
    return blocksizes


def optimize_blocksize(estimator, algorithm, sizes, blocksizes, machine=None, threads=1):
    """
    Block size with the smallest predicted median runtime

    Args:
        estimator: Object with estimate(call) -> SummaryStats
        algorithm: BlockedAlgorithm or name
        sizes: n, or {'m': m, 'n': n}
        blocksizes: Candidate block sizes, in order (the first minimizer wins)

    Returns:
        tuple: (b_pred, [(b, Prediction), ...])
    """
    blocksizes = list(blocksizes)
    if not blocksizes:
        raise BlocksizeRangeError("No candidate block sizes")
    sweep = [(b, predict(estimator, algorithm, sizes, b, machine, threads)) for b in blocksizes]
    best = min(sweep, key=lambda item: item[1].runtime.med)
    logger.info(f"{get_algorithm(algorithm).name}: predicted optimal block size {best[0]}")
    return best[0], sweep


def performance_yield(optimal, predicted):
    """
    Measured median runtime at the empirically optimal block size over the
    one at the predicted block size (1 when the prediction is optimal)
    """
    if predicted.med <= 0:
        raise ZeroMeasurementError("Measured runtime at the predicted block size is zero")
    return optimal.med / predicted.med


def export_frame(predictions: List[Prediction]):
    """Tabular form of predictions for plotting"""
    rows = [row for prediction in predictions for row in prediction.rows()]
    return pd.DataFrame(rows, columns=EXPORT_COLUMNS)
