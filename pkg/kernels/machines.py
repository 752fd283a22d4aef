"""
Machine descriptions: frequencies, peak performance, bandwidth and caches.

Shipped machines live as JSON files next to this module; any other JSON
file with the same fields can be loaded by path.
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

from common.errors import ToolkitError

logger = logging.getLogger(__name__)

MACHINES_DIR = Path(__file__).resolve().parent / 'machines'


class MachineSpecError(ToolkitError):
    """Raised for unknown machines or invalid machine descriptions"""
    pass


@dataclass(frozen=True)
class CacheLevel:
    level: str
    capacity: int
    line: int = 64
    associativity: int = 8


@dataclass(frozen=True)
class MachineSpec:
    name: str
    base_frequency: float
    flops_per_cycle: int
    cores: int
    peak_bandwidth: float
    caches: List[CacheLevel] = field(default_factory=list)
    turbo_frequency: Optional[float] = None
    turbo_enabled: bool = False
    processor: str = ''

    def __post_init__(self):
        numbers = [self.base_frequency, self.flops_per_cycle, self.cores, self.peak_bandwidth]
        if any(value <= 0 for value in numbers):
            raise MachineSpecError(f"{self.name}: all machine values must be positive")
        for cache in self.caches:
            if cache.capacity <= 0 or cache.line <= 0 or cache.associativity <= 0:
                raise MachineSpecError(f"{self.name}: invalid cache {cache.level}")
            if cache.capacity % cache.line:
                raise MachineSpecError(
                    f"{self.name}: line size {cache.line} does not divide {cache.capacity}"
                )

    def frequency(self, threads=1):
        """Clock frequency in effect: turbo only applies to single-threaded runs"""
        if threads == 1 and self.turbo_enabled and self.turbo_frequency:
            return self.turbo_frequency
        return self.base_frequency

    def peak(self, threads=1):
        """Peak floating-point performance in flops/s"""
        return self.flops_per_cycle * self.frequency(threads) * threads

    @property
    def last_level_cache(self) -> CacheLevel:
        if not self.caches:
            raise MachineSpecError(f"{self.name} has no caches")
        return max(self.caches, key=lambda cache: cache.capacity)

    @property
    def cache_bytes(self) -> int:
        return self.last_level_cache.capacity

    @property
    def cache_line(self) -> int:
        return self.last_level_cache.line

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        data['caches'] = [CacheLevel(**cache) for cache in data.get('caches', [])]
        return cls(**data)


def available_machines():
    return sorted(path.stem for path in MACHINES_DIR.glob('*.json'))


def load_machine(name_or_path):
    """
    Load a machine by shipped name or JSON path

    Args:
        name_or_path: e.g. 'sandybridge' or '/path/to/machine.json'

    Returns:
        MachineSpec: Parsed machine
    """
    if isinstance(name_or_path, MachineSpec):
        return name_or_path
    path = Path(str(name_or_path))
    if not path.suffix:
        path = MACHINES_DIR / f"{name_or_path}.json"
    if not path.exists():
        raise MachineSpecError(
            f"Unknown machine {name_or_path}; shipped: {', '.join(available_machines())}"
        )
    try:
        data = json.loads(path.read_text())
        machine = MachineSpec.from_dict(data)
    except (ValueError, TypeError) as e:
        raise MachineSpecError(f"Invalid machine file {path}: {str(e)}")
    logger.debug(f"Loaded machine {machine.name} from {path}")
    return machine


def roofline_limit(machine, intensity, threads=1, bandwidth=None):
    """
    Attainable performance for a given arithmetic intensity

    Args:
        machine: MachineSpec
        intensity: Flops per byte
        threads: Thread count for the peak
        bandwidth: Bandwidth override in bytes/s (e.g. a measured value)

    Returns:
        float: min(bandwidth * intensity, peak) in flops/s
    """
    bandwidth = machine.peak_bandwidth if bandwidth is None else bandwidth
    return min(bandwidth * intensity, machine.peak(threads))
