"""
Named flat double-precision buffers holding column-major operands.
"""

import numpy as np

from .calls import BindingError


class BufferStore:
    """Buffers addressed by name; matrices live inside them at (offset, ld)"""

    def __init__(self):
        self._buffers = {}

    def allocate(self, name, count):
        """Allocate (or replace) a zero-filled buffer of `count` doubles"""
        self._buffers[name] = np.zeros(int(count), dtype=np.float64)
        return self._buffers[name]

    def ensure(self, name, count):
        """Allocate a buffer unless an equally large or larger one exists"""
        current = self._buffers.get(name)
        if current is None or current.size < count:
            return self.allocate(name, count)
        return current

    def ensure_for(self, calls):
        """Allocate every buffer the calls reference, large enough for their extents"""
        required = {}
        for call in calls:
            for name, operand in call.operands.items():
                extent = call.extent(name)
                required[operand.buffer] = max(required.get(operand.buffer, 1), extent)
        for name, count in required.items():
            self.ensure(name, count)
        return required

    def snapshot(self):
        return {name: buffer.copy() for name, buffer in self._buffers.items()}

    def __getitem__(self, name):
        try:
            return self._buffers[name]
        except KeyError:
            raise BindingError(f"Buffer {name} is not allocated")

    def __contains__(self, name):
        return name in self._buffers

    def __len__(self):
        return len(self._buffers)
