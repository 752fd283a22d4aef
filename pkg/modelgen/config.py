"""
Model generation configuration.
"""

from dataclasses import asdict, dataclass
from enum import Enum

from common.errors import ToolkitError


class ModelConfigError(ToolkitError):
    """Raised when a model configuration violates its constraints"""
    pass


class GridKind(Enum):
    CARTESIAN = 'cartesian'
    CHEBYSHEV = 'chebyshev'


class ReferenceStatistic(Enum):
    MIN = 'min'
    MEDIAN = 'median'

    @property
    def statistic(self):
        return 'min' if self is ReferenceStatistic.MIN else 'med'


class ErrorMeasure(Enum):
    AVERAGE = 'average'
    MAXIMUM = 'maximum'
    P90 = 'p90'


@dataclass(frozen=True)
class ModelConfig:
    overfitting: int = 2
    oversampling: int = 4
    grid: GridKind = GridKind.CHEBYSHEV
    repetitions: int = 10
    reference_statistic: ReferenceStatistic = ReferenceStatistic.MIN
    error_measure: ErrorMeasure = ErrorMeasure.MAXIMUM
    error_bound: float = 0.01
    min_width: int = 32
    reduce_degree: bool = False

    def __post_init__(self):
        # accept plain strings for the enum fields
        object.__setattr__(self, 'grid', GridKind(self.grid))
        object.__setattr__(self, 'reference_statistic', ReferenceStatistic(self.reference_statistic))
        object.__setattr__(self, 'error_measure', ErrorMeasure(self.error_measure))
        if not 0 <= self.overfitting <= 2:
            raise ModelConfigError(f"overfitting must be 0, 1 or 2, got {self.overfitting}")
        if self.oversampling < 1:
            raise ModelConfigError(f"oversampling must be at least 1, got {self.oversampling}")
        if self.repetitions < 1:
            raise ModelConfigError(f"repetitions must be at least 1, got {self.repetitions}")
        if self.error_bound <= 0:
            raise ModelConfigError(f"error bound must be positive, got {self.error_bound}")
        if self.min_width < 8 or self.min_width % 8:
            raise ModelConfigError(
                f"minimum width must be a multiple of 8 and at least 8, got {self.min_width}"
            )

    def replace(self, **changes):
        values = self.as_dict()
        values.update({key: value for key, value in changes.items() if value is not None})
        return ModelConfig(**values)

    def as_dict(self):
        values = asdict(self)
        for key in ('grid', 'reference_statistic', 'error_measure'):
            values[key] = values[key].value
        return values

    @classmethod
    def from_dict(cls, data):
        return cls(**data)


def default_config(kernel, threads=1):
    """
    Default model configuration for a kernel

    Args:
        kernel: Kernel name or descriptor
        threads: Number of threads the backend runs with

    Returns:
        ModelConfig: Defaults, with the dgemm and multi-threading adjustments
    """
    name = getattr(kernel, 'name', kernel)
    config = ModelConfig()
    if name == 'dgemm':
        config = config.replace(overfitting=0, min_width=64)
    if threads > 1:
        config = config.replace(min_width=256 if name == 'dgemm' else 64)
    return config
