"""
Execution backends for the sampler.

- ReferenceBackend: the numpy reference kernels
- SyntheticBackend: a deterministic runtime function on a virtual clock,
  for reproducible tests and model-generation dry runs
- SharedLibraryBackend: any BLAS/LAPACK shared library following the
  Fortran calling convention (every argument by reference), via ctypes
"""

import ctypes
import logging
import os
import re

from common.errors import ToolkitError
from kernels.buffers import BufferStore
from kernels.calls import validate_call
from kernels.reference import execute
from kernels.signatures import Data, Flag, Inc, Info, Ld, Scalar, Size

from .preconditions import CacheToucher, apply_precondition

logger = logging.getLogger(__name__)

DEFAULT_SCRATCH_BYTES = 64 * 1024 * 1024


class BackendError(ToolkitError):
    """Raised when a backend cannot be loaded or cannot run a call"""
    pass


class Backend:
    """Base backend: owns the buffer store and the cache toucher"""
    name = 'base'
    dry = False

    def __init__(self, scratch_bytes=DEFAULT_SCRATCH_BYTES, line_bytes=64):
        self.store = BufferStore()
        self.toucher = CacheToucher(self.store, scratch_bytes, line_bytes, dry=self.dry)

    def prepare(self, calls):
        """Validate calls and allocate any buffers they need"""
        for call in calls:
            validate_call(call)
        self.store.ensure_for(call for call in calls if not call.is_pseudo)

    def execute(self, call):
        raise NotImplementedError

    def timed(self, call, timer):
        """Execute one call and return its runtime in seconds"""
        started = timer.start()
        self.execute(call)
        return timer.stop(started)

    def timed_sequence(self, calls, timer):
        """Execute calls back to back and return the total runtime in seconds"""
        started = timer.start()
        for call in calls:
            self.execute(call)
        return timer.stop(started)

    def apply_precondition(self, precondition):
        apply_precondition(precondition, self.toucher)

    def clock(self):
        return 0.0


class ReferenceBackend(Backend):
    name = 'reference'

    def execute(self, call):
        return execute(call, self.store)


class SyntheticBackend(Backend):
    """
    Backend whose "runtime" is a function of the call.

    Args:
        runtime: Callable(call) -> seconds
        scratch_bytes: Size of the (logged, never allocated) scratch area

    Every run is appended to `trace` as (event, call name); the virtual
    clock advances by each timed runtime.
    """
    name = 'synthetic'
    dry = True

    def __init__(self, runtime, scratch_bytes=DEFAULT_SCRATCH_BYTES, line_bytes=64):
        super().__init__(scratch_bytes, line_bytes)
        self.runtime = runtime
        self.trace = []
        self.now = 0.0

    def prepare(self, calls):
        for call in calls:
            validate_call(call)

    def execute(self, call):
        self.trace.append(('run', call.name()))
        self.now += self.runtime(call)

    def timed(self, call, timer):
        self.trace.append(('timed', call.name()))
        seconds = self.runtime(call)
        self.now += seconds
        return timer.quantize(seconds)

    def timed_sequence(self, calls, timer):
        return timer.quantize(sum(self.timed(call, timer) for call in calls))

    def clock(self):
        return self.now


def parse_environment(template, threads):
    """Expand an assignment template such as 'OPENBLAS_NUM_THREADS={threads}'"""
    assignments = {}
    for item in template.format(threads=threads).split():
        name, _, value = item.partition('=')
        if not name or not value:
            raise BackendError(f"Malformed environment assignment: {item}")
        assignments[name] = value
    return assignments


class SharedLibraryBackend(Backend):
    """
    Calls kernels in a shared library with the Fortran calling convention.

    Routine symbols are looked up as `<kernel>_`; flags are passed as
    single characters followed by the hidden string lengths.
    """
    name = 'library'

    def __init__(self, path, threads=1, environment='', **kwargs):
        super().__init__(**kwargs)
        for name, value in parse_environment(environment, threads).items():
            os.environ[name] = value
        try:
            self.library = ctypes.CDLL(str(path))
        except OSError as e:
            raise BackendError(f"Cannot load backend library {path}: {str(e)}")
        self.path = str(path)
        self.name = os.path.basename(self.path)
        self._routines = {}
        logger.info(f"Loaded backend {self.path} with {threads} thread(s)")

    def _routine(self, kernel):
        if kernel not in self._routines:
            for symbol in (f"{kernel}_", kernel):
                routine = getattr(self.library, symbol, None)
                if routine is not None:
                    routine.restype = ctypes.c_double if kernel == 'ddot' else None
                    self._routines[kernel] = routine
                    break
            else:
                raise BackendError(f"{self.path} does not export {kernel}")
        return self._routines[kernel]

    def execute(self, call):
        arguments = []
        hidden = []
        keep = []
        for arg in call.descriptor.args:
            if isinstance(arg, Flag):
                value = ctypes.c_char(call.values[arg.name][-1:].encode())
                # isgn is an integer in the Fortran interface
                if arg.name in ('isgn', 'itype'):
                    value = ctypes.c_int(int(call.values[arg.name]))
                else:
                    hidden.append(ctypes.c_size_t(1))
            elif isinstance(arg, (Size, Ld, Inc)):
                value = ctypes.c_int(int(call.values[arg.name]))
            elif isinstance(arg, Scalar):
                value = ctypes.c_double(float(call.values[arg.name]))
            elif isinstance(arg, Data):
                operand = call.values[arg.name]
                buffer = self.store[operand.buffer]
                address = buffer.ctypes.data + operand.offset * buffer.itemsize
                arguments.append(ctypes.c_void_p(address))
                continue
            elif isinstance(arg, Info):
                value = ctypes.c_int(0)
            keep.append(value)
            arguments.append(ctypes.byref(value))
        return self._routine(call.kernel)(*arguments, *hidden)


def load_backend(name, threads=1, environment='', machine=None, runtime=None):
    """
    Create a backend from its configured name

    Args:
        name: 'reference', 'synthetic' or a shared-library path
        threads: Thread count forwarded to a library backend
        environment: Thread environment template for a library backend
        machine: MachineSpec sizing the flush scratch area (2x the largest cache)
        runtime: Runtime function for the synthetic backend

    Returns:
        Backend: Ready-to-use backend
    """
    kwargs = {}
    if machine is not None:
        kwargs['scratch_bytes'] = 2 * machine.cache_bytes
        kwargs['line_bytes'] = machine.cache_line
    if name == 'reference':
        return ReferenceBackend(**kwargs)
    if name == 'synthetic':
        if runtime is None:
            from .synthetic import flop_rate_runtime
            runtime = flop_rate_runtime(machine.peak(threads) if machine else 1e10)
        return SyntheticBackend(runtime, **kwargs)
    if not re.search(r'\.(so|dylib|dll)(\.\d+)*$', str(name)):
        raise BackendError(f"Unknown backend {name}; use reference, synthetic or a library path")
    return SharedLibraryBackend(name, threads=threads, environment=environment, **kwargs)
