"""
Timers used by the sampler.

Python has no portable access to the time-stamp counter, so the cycle timer
derives cycles from the nanosecond performance counter and the machine's
base frequency (the counter the hardware timer would tick at).
"""

import time
from enum import Enum


class TimerKind(Enum):
    MONOTONIC = 'monotonic'
    CYCLES = 'cycles'


class MonotonicTimer:
    kind = TimerKind.MONOTONIC

    def __init__(self, clock=time.perf_counter):
        self.clock = clock

    def start(self):
        return self.clock()

    def stop(self, started):
        return self.clock() - started

    def quantize(self, seconds):
        return seconds


class CycleTimer:
    kind = TimerKind.CYCLES

    def __init__(self, frequency, clock=time.perf_counter_ns):
        self.frequency = frequency
        self.clock = clock

    def start(self):
        return self.clock()

    def stop(self, started):
        return self.quantize((self.clock() - started) * 1e-9)

    def cycles(self, seconds):
        return int(round(seconds * self.frequency))

    def quantize(self, seconds):
        return self.cycles(seconds) / self.frequency


def make_timer(kind, machine=None):
    """Timer for a TimerKind; the cycle timer needs the machine's base frequency"""
    kind = TimerKind(kind)
    if kind is TimerKind.CYCLES:
        if machine is None:
            raise ValueError("The cycle timer needs a machine (base frequency)")
        return CycleTimer(machine.base_frequency)
    return MonotonicTimer()
