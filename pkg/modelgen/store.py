"""
Model files and the model store.

One JSON file per kernel holds the models of every generated case:

    models_dir/<machine>_<backend>_<threads>t/<kernel>.json
"""

import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

from common.errors import ToolkitError
from kernels.signatures import get_kernel
from sampler.stats import SummaryStats

from .config import ModelConfig
from .piecewise import PiecewiseModel, UnmodeledCaseError, evaluate

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1


class ModelFormatError(ToolkitError):
    """Raised when a model file cannot be read"""
    pass


@dataclass
class KernelModel:
    """All case models of one kernel on one setup (machine, backend, threads)"""
    kernel: str
    machine: str = ''
    backend: str = ''
    threads: int = 1
    config: Optional[ModelConfig] = None
    seed: int = 0
    models: List[PiecewiseModel] = field(default_factory=list)

    def for_case(self, case):
        for model in self.models:
            if model.case == case:
                return model
        raise UnmodeledCaseError(f"{self.kernel}: case {case.label} is not modeled")

    def as_dict(self):
        return {
            'format_version': FORMAT_VERSION,
            'machine': self.machine,
            'backend': self.backend,
            'threads': self.threads,
            'kernel': self.kernel,
            'cases': [model.as_dict() for model in self.models],
            'config': self.config.as_dict() if self.config else None,
            'seed': self.seed,
        }

    def to_json(self):
        return json.dumps(self.as_dict(), indent=2) + '\n'

    @classmethod
    def from_json(cls, text):
        try:
            data = json.loads(text)
            if data.get('format_version') != FORMAT_VERSION:
                raise ModelFormatError(
                    f"Unsupported model format version {data.get('format_version')}"
                )
            config = ModelConfig.from_dict(data['config']) if data.get('config') else None
            kernel = get_kernel(data['kernel']).name
            return cls(
                kernel, data['machine'], data['backend'], int(data['threads']), config,
                int(data.get('seed', 0)),
                [PiecewiseModel.from_dict(kernel, case, config) for case in data['cases']],
            )
        except (KeyError, TypeError, ValueError) as e:
            raise ModelFormatError(f"Malformed model file: {str(e)}")


def backend_id(backend):
    """Directory-safe name of a backend ('reference', 'synthetic' or a library file stem)"""
    name = Path(str(backend)).name
    name = re.sub(r'\.(so|dylib|dll)(\.\d+)*$', '', name)
    return re.sub(r'[^A-Za-z0-9.+-]+', '-', name) or 'backend'


class ModelStore:
    """Directory of model files for one setup"""

    def __init__(self, root, machine, backend, threads=1):
        self.root = Path(root)
        self.machine = machine
        self.backend = backend_id(backend)
        self.threads = int(threads)

    @property
    def directory(self):
        return self.root / f"{self.machine}_{self.backend}_{self.threads}t"

    def path(self, kernel):
        return self.directory / f"{get_kernel(kernel).name}.json"

    def kernels(self):
        if not self.directory.is_dir():
            return []
        return sorted(path.stem for path in self.directory.glob('*.json'))

    def save(self, model):
        """Write a kernel model, replacing cases that are generated again"""
        path = self.path(model.kernel)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(model.to_json())
        logger.info(f"Wrote {len(model.models)} case model(s) to {path}")
        return path

    def load(self, kernel):
        path = self.path(kernel)
        if not path.exists():
            raise UnmodeledCaseError(f"No model of {get_kernel(kernel).name} in {self.directory}")
        return KernelModel.from_json(path.read_text())

    def merge(self, model):
        """Save a model, keeping previously stored cases that it does not cover"""
        try:
            stored = self.load(model.kernel)
        except UnmodeledCaseError:
            return self.save(model)
        cases = {m.case for m in model.models}
        model.models = [m for m in stored.models if m.case not in cases] + model.models
        return self.save(model)

    def model_set(self):
        return ModelSet(store=self)


class ModelSet:
    """
    Estimator over many kernel models, loaded lazily from a store.

    Calls with a zero size do no work and are estimated at zero time;
    pseudo-calls are likewise free.
    """

    def __init__(self, models=None, store=None):
        self.models: Dict[str, KernelModel] = {m.kernel: m for m in (models or [])}
        self.store = store

    def __getitem__(self, kernel):
        name = get_kernel(kernel).name
        if name not in self.models:
            if self.store is None:
                raise UnmodeledCaseError(f"No model of {name}")
            self.models[name] = self.store.load(name)
        return self.models[name]

    def add(self, model):
        self.models[model.kernel] = model

    def estimate(self, call):
        if call.is_pseudo or any(size == 0 for size in call.sizes.values()):
            return SummaryStats()
        return evaluate(self[call.kernel], call)
