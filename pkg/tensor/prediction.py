"""
Runtime predictions of contraction algorithms from micro-benchmarks, and
ranking of all algorithms for a contraction.
"""

import logging
from dataclasses import dataclass, field
from typing import List

import pandas as pd
from django.conf import settings

from common.errors import ToolkitError
from common.utils import safe_divide
from kernels.machines import load_machine

from .algorithms import KERNELS, generate_algorithms
from .benchmarks import PredictionLevel, build_benchmarks, measure_benchmarks
from .contractions import parse_spec
from .execution import algorithm_flops, copy_invocations

logger = logging.getLogger(__name__)

RANKING_COLUMNS = ['rank', 'algorithm', 'kernel', 'runtime', 'flops', 'performance', 'benchmarks']


class MissingBenchmarkTimingError(ToolkitError):
    """Raised when a benchmark has no timing"""
    pass


def predict_contraction(benchmarks, timings):
    """
    Predicted algorithm runtime: sum of weight x count x timing

    Args:
        benchmarks: MicroBenchmarks of one algorithm
        timings: One timing in seconds per benchmark, in the same order

    Returns:
        float: Runtime in seconds
    """
    timings = list(timings)
    if len(timings) != len(benchmarks):
        raise MissingBenchmarkTimingError(
            f"{len(benchmarks)} benchmarks but {len(timings)} timings"
        )
    total = 0.0
    for benchmark, timing in zip(benchmarks, timings):
        if timing is None:
            raise MissingBenchmarkTimingError(f"No timing for {benchmark}")
        total += benchmark.weight * benchmark.count * float(timing)
    return total


@dataclass
class ContractionPrediction:
    algorithm: object
    runtime: float
    flops: int
    level: PredictionLevel
    benchmarks: List = field(default_factory=list)
    timings: List[float] = field(default_factory=list)

    @property
    def performance(self):
        """Flops per second"""
        return safe_divide(self.flops, self.runtime)

    def as_row(self):
        return {
            'algorithm': self.algorithm.name,
            'kernel': self.algorithm.routine,
            'runtime': self.runtime,
            'flops': self.flops,
            'performance': self.performance,
            'benchmarks': len(self.benchmarks),
        }


def predict_algorithm(sampler, algorithm, cache_bytes, level=PredictionLevel.FULL,
                      repetitions=10, line_bytes=None, statistic='med'):
    """
    Build, time and combine one algorithm's micro-benchmarks

    Returns:
        ContractionPrediction
    """
    level = PredictionLevel(level)
    benchmarks = build_benchmarks(algorithm, cache_bytes, level, line_bytes)
    timings = measure_benchmarks(sampler, benchmarks, repetitions, statistic)
    runtime = predict_contraction(benchmarks, timings)
    copies = sum(copy_invocations(algorithm, copy) for copy in algorithm.copies)
    logger.debug(
        f"{algorithm.name}: {runtime:.4e} s from {len(benchmarks)} benchmarks "
        f"({copies} copy calls)"
    )
    return ContractionPrediction(algorithm, runtime, algorithm_flops(algorithm), level,
                                 benchmarks, timings)


def rank_contractions(spec, sampler, machine=None, level=PredictionLevel.FULL, repetitions=10,
                      kernels=KERNELS, cache_bytes=None, line_bytes=None):
    """
    Predict every algorithm of a contraction and order them by runtime

    Args:
        spec: ContractionSpec or contraction text with extents
        sampler: Sampler timing the micro-benchmarks
        machine: MachineSpec or name (default DLAPERF_MACHINE); its largest
            cache is the one modeled unless cache_bytes is given
        level: PredictionLevel
        repetitions: Repetitions per benchmark
        kernels: Kernels to consider

    Returns:
        list: ContractionPredictions, fastest first; ties by fewer flops
    """
    spec = parse_spec(spec) if isinstance(spec, str) else spec
    if cache_bytes is None:
        cache_bytes = load_machine(machine or settings.DLAPERF_MACHINE).cache_bytes
    predictions = [
        predict_algorithm(sampler, algorithm, cache_bytes, level, repetitions, line_bytes)
        for algorithm in generate_algorithms(spec, kernels)
    ]
    ranked = sorted(predictions, key=lambda prediction: (prediction.runtime, prediction.flops))
    if ranked:
        logger.info(
            f"{spec}: best of {len(ranked)} is {ranked[0].algorithm.name} "
            f"({ranked[0].runtime:.4e} s, {ranked[0].performance / 1e9:.2f} GFLOPs/s)"
        )
    return ranked


def ranking_frame(predictions):
    rows = [dict(prediction.as_row(), rank=rank)
            for rank, prediction in enumerate(predictions, start=1)]
    return pd.DataFrame(rows, columns=RANKING_COLUMNS)
