"""
Run configuration shared by all toolkit commands.

Values come from the DLAPERF_* settings and are overridden by the global
command-line flags.
"""

import logging
from dataclasses import dataclass, field, replace
from functools import cached_property

from django.conf import settings

from cachemodel.estimates import SmoothingParams
from common.errors import ToolkitError
from kernels.machines import load_machine
from modelgen.store import ModelStore
from sampler.backends import load_backend
from sampler.plans import Sampler
from sampler.timers import TimerKind

logger = logging.getLogger(__name__)


class InvalidConfigError(ToolkitError):
    """Raised for configuration values outside their valid range"""
    pass


@dataclass(frozen=True)
class ToolkitConfig:
    """
    Setup of one toolkit run

    Args:
        machine: Shipped machine name or path to a machine JSON file
        backend: 'reference', 'synthetic' or a shared-library path
        threads: Thread count of the backend (at least 1)
        seed: Seed of the first measurement plan
        models_dir: Root directory of the model store
        smoothing: Cache-model smoothing coefficients
        cache_line: Cache line size in bytes
        backend_env: Thread environment template for library backends
    """
    machine: str
    backend: str
    threads: int = 1
    seed: int = 0
    models_dir: str = 'models'
    smoothing: SmoothingParams = field(default_factory=SmoothingParams)
    cache_line: int = 64
    backend_env: str = ''

    def __post_init__(self):
        if int(self.threads) < 1:
            raise InvalidConfigError(f"Thread count must be at least 1, got {self.threads}")
        if int(self.cache_line) < 8:
            raise InvalidConfigError(f"Cache line must be at least 8 bytes, got {self.cache_line}")

    @classmethod
    def from_settings(cls, **overrides):
        """Configuration from settings; None-valued overrides are ignored"""
        config = cls(
            machine=settings.DLAPERF_MACHINE,
            backend=settings.DLAPERF_BACKEND,
            threads=settings.DLAPERF_THREADS,
            seed=settings.DLAPERF_SEED,
            models_dir=settings.DLAPERF_MODELS_DIR,
            smoothing=SmoothingParams.from_settings(),
            cache_line=settings.DLAPERF_CACHE_LINE,
            backend_env=settings.DLAPERF_BACKEND_ENV,
        )
        return config.override(**overrides)

    def override(self, **changes):
        return replace(self, **{key: value for key, value in changes.items() if value is not None})

    @cached_property
    def machine_spec(self):
        return load_machine(self.machine)

    def make_backend(self, runtime=None):
        return load_backend(self.backend, self.threads, self.backend_env, self.machine_spec,
                            runtime)

    def make_sampler(self, timer=TimerKind.MONOTONIC, backend=None):
        backend = backend or self.make_backend()
        logger.debug(
            f"Sampler on {self.machine_spec.name}/{self.backend} with {self.threads} thread(s), "
            f"seed {self.seed}"
        )
        return Sampler(backend, self.machine_spec, TimerKind(timer), seed=self.seed)

    def model_store(self):
        return ModelStore(self.models_dir, self.machine_spec.name, self.backend, self.threads)
