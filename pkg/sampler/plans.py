"""
Measurement plans: repeated, optionally shuffled timing of kernel calls.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Tuple

import numpy as np

from common.errors import ToolkitError

from .preconditions import CachePrecondition, OperandAccess
from .stats import summarize
from .timers import TimerKind, make_timer

logger = logging.getLogger(__name__)


class PlanError(ToolkitError):
    """Raised for malformed measurement plans"""
    pass


class WarmPolicy(Enum):
    """What happens right before every timed run"""
    DOUBLE_EXECUTION = 'double-execution'
    EXPLICIT_WARM = 'explicit-warm'
    COLD = 'cold'


@dataclass
class MeasurementPlan:
    calls: list
    repetitions: int = 10
    shuffle: bool = True
    warm_policy: WarmPolicy = WarmPolicy.DOUBLE_EXECUTION
    timer: TimerKind = TimerKind.MONOTONIC
    seed: int = 0
    # one optional CachePrecondition per call, applied after the warm step
    preconditions: Optional[List[Optional[CachePrecondition]]] = None

    def __post_init__(self):
        self.warm_policy = WarmPolicy(self.warm_policy)
        self.timer = TimerKind(self.timer)
        if self.repetitions < 1:
            raise PlanError(f"repetitions must be at least 1, got {self.repetitions}")
        if self.preconditions is not None and len(self.preconditions) != len(self.calls):
            raise PlanError("One precondition (or None) is required per call")


@dataclass
class PlanResult:
    timings: List[List[float]]
    order: List[Tuple[int, int]] = field(default_factory=list)
    seed: int = 0

    def stats(self):
        return [summarize(timings) for timings in self.timings]


def execution_order(count, repetitions, shuffle, seed):
    """Flat (call, repetition) order, permuted with a seeded generator when shuffling"""
    order = [(call, repetition) for call in range(count) for repetition in range(repetitions)]
    if shuffle and order:
        permutation = np.random.default_rng(seed).permutation(len(order))
        order = [order[int(i)] for i in permutation]
    return order


def warm_up(call, backend, policy):
    if policy is WarmPolicy.DOUBLE_EXECUTION:
        backend.execute(call)
    elif policy is WarmPolicy.EXPLICIT_WARM:
        for name in call.operands:
            backend.toucher.touch_operand(OperandAccess.of(call, name))
    else:
        backend.toucher.flush()


def run_plan(plan, backend, machine=None):
    """
    Time every call of a plan `repetitions` times

    Args:
        plan: MeasurementPlan
        backend: Backend executing the calls
        machine: MachineSpec, needed for the cycle timer

    Returns:
        PlanResult: timings[call][repetition] in seconds, plus the order run
    """
    backend.prepare(plan.calls)
    timer = make_timer(plan.timer, machine)
    order = execution_order(len(plan.calls), plan.repetitions, plan.shuffle, plan.seed)
    timings = [[0.0] * plan.repetitions for _ in plan.calls]
    logger.info(
        f"Running plan: {len(plan.calls)} calls x {plan.repetitions} repetitions "
        f"on {backend.name} ({plan.warm_policy.value}, seed {plan.seed})"
    )
    for index, repetition in order:
        call = plan.calls[index]
        warm_up(call, backend, plan.warm_policy)
        if plan.preconditions and plan.preconditions[index]:
            backend.apply_precondition(plan.preconditions[index])
        timings[index][repetition] = backend.timed(call, timer)
    return PlanResult(timings, order, plan.seed)


def run_sequence(calls, backend, repetitions=1, warm_policy=WarmPolicy.COLD,
                 timer=TimerKind.MONOTONIC, machine=None, precondition=None, setup=None):
    """
    Time a whole call sequence (e.g. one blocked algorithm run) as one measurement

    `setup(store)` re-initializes the operands before every repetition; dry
    backends skip it.

    Returns:
        list: One runtime in seconds per repetition
    """
    calls = [call for call in calls if not call.is_pseudo]
    backend.prepare(calls)
    timer = make_timer(timer, machine)
    warm_policy = WarmPolicy(warm_policy)
    runtimes = []
    for _ in range(repetitions):
        if setup is not None and not backend.dry:
            setup(backend.store)
        if warm_policy is WarmPolicy.DOUBLE_EXECUTION:
            for call in calls:
                backend.execute(call)
            if setup is not None and not backend.dry:
                setup(backend.store)
        elif warm_policy is WarmPolicy.EXPLICIT_WARM:
            for call in calls:
                warm_up(call, backend, warm_policy)
        else:
            backend.toucher.flush()
        if precondition:
            backend.apply_precondition(precondition)
        runtimes.append(backend.timed_sequence(calls, timer))
    logger.info(f"Timed sequence of {len(calls)} calls x {repetitions} on {backend.name}")
    return runtimes


@dataclass
class Sampler:
    """
    Measurement handle used by model generation and algorithm measurement.

    Every plan it runs gets the next seed, so a sequence of measurements is
    reproducible from the initial seed alone.
    """
    backend: object
    machine: object = None
    timer: TimerKind = TimerKind.MONOTONIC
    warm_policy: WarmPolicy = WarmPolicy.DOUBLE_EXECUTION
    shuffle: bool = True
    seed: int = 0
    plans_run: int = 0

    def next_seed(self):
        seed = self.seed + self.plans_run
        self.plans_run += 1
        return seed

    def measure(self, calls, repetitions=10, preconditions=None):
        """Summary statistics per call"""
        plan = MeasurementPlan(
            list(calls), repetitions, self.shuffle, self.warm_policy, self.timer,
            self.next_seed(), preconditions,
        )
        return run_plan(plan, self.backend, self.machine).stats()

    def measure_sequence(self, calls, repetitions=10, warm_policy=WarmPolicy.COLD,
                         precondition=None, setup=None):
        """Summary statistics of whole-sequence runtimes"""
        self.next_seed()
        runtimes = run_sequence(calls, self.backend, repetitions, warm_policy, self.timer,
                                self.machine, precondition, setup)
        return summarize(runtimes)
