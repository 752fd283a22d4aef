"""
Cache preconditions: ordered memory accesses performed before a timed call.

An operand access touches every element of a (rows x cols) block of a
buffer; a remote access writes one double per cache line of a scratch area
that is never used by any kernel, evicting whatever it displaces.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Union

import numpy as np
from numpy.lib.stride_tricks import as_strided

from common.errors import ToolkitError
from common.utils import DOUBLE_BYTES, ceil_div

logger = logging.getLogger(__name__)


class ScratchTooSmallError(ToolkitError):
    """Raised when a remote access exceeds the scratch buffer"""
    pass


@dataclass(frozen=True)
class OperandAccess:
    buffer: str
    offset: int = 0
    rows: int = 1
    cols: int = 1
    ld: int = 1

    @property
    def nbytes(self):
        return DOUBLE_BYTES * self.rows * self.cols

    @classmethod
    def of(cls, call, name):
        """Access covering one data argument of a call"""
        operand = call.values[name]
        rows, cols = call.dims(name)
        if call.descriptor.arg(name).vector:
            inc = abs(call.inc(name))
            if inc == 1:
                return cls(operand.buffer, operand.offset, rows, 1, max(1, rows))
            return cls(operand.buffer, operand.offset, 1, rows, inc)
        return cls(operand.buffer, operand.offset, rows, cols, call.ld(name))


@dataclass(frozen=True)
class RemoteAccess:
    nbytes: int

    def __post_init__(self):
        if self.nbytes <= 0:
            raise ValueError(f"Remote access size must be positive, got {self.nbytes}")


@dataclass
class CachePrecondition:
    accesses: List[Union[OperandAccess, RemoteAccess]] = field(default_factory=list)

    def __iter__(self):
        return iter(self.accesses)

    def __len__(self):
        return len(self.accesses)

    @property
    def nbytes(self):
        return sum(access.nbytes for access in self.accesses)


class CacheToucher:
    """
    Performs precondition accesses on a buffer store.

    With `dry=True` (synthetic backends) accesses are only logged.
    """

    def __init__(self, store, scratch_bytes, line_bytes=64, dry=False):
        self.store = store
        self.line_doubles = max(1, line_bytes // DOUBLE_BYTES)
        self.scratch_size = int(scratch_bytes) // DOUBLE_BYTES
        self.scratch = None if dry else np.zeros(self.scratch_size)
        self.dry = dry
        self._cursor = 0
        self.log = []
        self.touched_bytes = 0

    def touch_operand(self, access):
        self.log.append(('operand', access.buffer))
        if access.rows == 0 or access.cols == 0:
            return
        self.touched_bytes += access.nbytes
        if self.dry:
            return
        buffer = self.store[access.buffer]
        view = as_strided(
            buffer[access.offset:], shape=(access.rows, access.cols),
            strides=(buffer.itemsize, access.ld * buffer.itemsize),
        )
        view *= 1.0

    def touch_remote(self, access):
        count = ceil_div(access.nbytes, DOUBLE_BYTES)
        if count > self.scratch_size:
            raise ScratchTooSmallError(
                f"Remote access of {access.nbytes} bytes exceeds scratch of "
                f"{self.scratch_size * DOUBLE_BYTES} bytes"
            )
        self.log.append(('remote', access.nbytes))
        self.touched_bytes += access.nbytes
        start = self._cursor if self._cursor + count <= self.scratch_size else 0
        if not self.dry:
            # writes, one per cache line
            self.scratch[start:start + count:self.line_doubles] += 1.0
        self._cursor = (start + count) % self.scratch_size

    def touch(self, access):
        if isinstance(access, RemoteAccess):
            self.touch_remote(access)
        else:
            self.touch_operand(access)

    def flush(self):
        """Evict the caches by writing the whole scratch area"""
        self.touch_remote(RemoteAccess(self.scratch_size * DOUBLE_BYTES))


def apply_precondition(precondition, toucher):
    """
    Perform a precondition's accesses in order

    Args:
        precondition: CachePrecondition (or any iterable of accesses)
        toucher: CacheToucher bound to the backend's buffers
    """
    for access in precondition:
        toucher.touch(access)
