"""
Access distances: how many bytes a call sequence touched since an operand's
previous use.

Every call leaves one or two batches of access records in a history. A
backward scan over that history sums the sizes of the batches it passes
until it meets the batch holding the operand's previous access.
"""

import logging
from dataclasses import dataclass
from typing import List

from common.errors import ToolkitError
from common.utils import DOUBLE_BYTES, ceil_div
from kernels.signatures import Role
from sampler.preconditions import OperandAccess

logger = logging.getLogger(__name__)

DEFAULT_SPLIT_THRESHOLD = 0.25


class UnknownOperandError(ToolkitError):
    """Raised when a call has no data argument of the requested name"""
    pass


@dataclass(frozen=True)
class AccessRecord:
    """
    One operand region accessed by a call.

    Records of a call with the same `part` form one batch; a split call
    puts its output-side operands into a trailing batch (part 1).
    """
    operand: str
    access: OperandAccess
    nbytes: int
    role: Role
    part: int = 0

    def __post_init__(self):
        if self.nbytes < 0:
            raise ValueError(f"Region size must be nonnegative, got {self.nbytes}")

    @property
    def input_only(self):
        return self.role is Role.INPUT


def region_bytes(access, line_bytes=None):
    """
    Bytes covered by an operand access

    Args:
        access: OperandAccess
        line_bytes: Cache line size; when given, every touched line counts whole

    Returns:
        int: Region size in bytes
    """
    if access.rows == 0 or access.cols == 0:
        return 0
    if not line_bytes:
        return access.nbytes
    if access.cols == 1 or access.rows >= access.ld or access.ld * DOUBLE_BYTES < line_bytes:
        span = ((access.cols - 1) * access.ld + access.rows) * DOUBLE_BYTES
        return ceil_div(span, line_bytes) * line_bytes
    return access.cols * ceil_div(access.rows * DOUBLE_BYTES, line_bytes) * line_bytes


def _extent(access):
    return access.offset, access.offset + (access.cols - 1) * access.ld + access.rows


def overlaps(first, second):
    """Whether two operand accesses share any buffer element"""
    if first.buffer != second.buffer:
        return False
    if 0 in (first.rows, first.cols, second.rows, second.cols):
        return False
    if first.ld == second.ld:
        col0, row0 = divmod(first.offset, first.ld)
        col1, row1 = divmod(second.offset, second.ld)
        return (row0 < row1 + second.rows and row1 < row0 + first.rows
                and col0 < col1 + second.cols and col1 < col0 + first.cols)
    start0, stop0 = _extent(first)
    start1, stop1 = _extent(second)
    return start0 < stop1 and start1 < stop0


def split_records(call, cache_bytes, threshold=DEFAULT_SPLIT_THRESHOLD, line_bytes=None):
    """
    Access records of one call

    When the output-side operands take at most `threshold` of the
    input-only operands' bytes and the inputs alone exceed the cache, the
    output side is moved into a separate trailing batch: it is expected to
    stay cached after the call.

    Args:
        call: Kernel call
        cache_bytes: Cache size
        threshold: Output-to-input ratio at or below which a call is split
        line_bytes: Cache line size for region rounding (optional)

    Returns:
        list: AccessRecords in access order
    """
    records = []
    for data in call.descriptor.data:
        access = OperandAccess.of(call, data.name)
        records.append(AccessRecord(data.name, access, region_bytes(access, line_bytes), data.role))
    inputs = sum(record.nbytes for record in records if record.input_only)
    outputs = sum(record.nbytes for record in records if not record.input_only)
    if inputs > cache_bytes and 0 < outputs <= threshold * inputs:
        logger.debug(f"{call}: output side ({outputs} B) split from inputs ({inputs} B)")
        records = ([record for record in records if record.input_only]
                   + [AccessRecord(record.operand, record.access, record.nbytes, record.role, 1)
                      for record in records if not record.input_only])
    return records


def batches(records):
    """Records grouped by part, last batch first"""
    parts = sorted({record.part for record in records}, reverse=True)
    return [[record for record in records if record.part == part] for part in parts]


def sequence_bytes(calls, line_bytes=None):
    """Total size of the buffers a call sequence touches"""
    extents = {}
    for call in calls:
        for name in call.operands:
            access = OperandAccess.of(call, name)
            if access.rows and access.cols:
                extents[access.buffer] = max(extents.get(access.buffer, 0), _extent(access)[1])
    if line_bytes:
        return sum(ceil_div(extent * DOUBLE_BYTES, line_bytes) * line_bytes
                   for extent in extents.values())
    return DOUBLE_BYTES * sum(extents.values())


class AccessHistory:
    """
    Access records of a call sequence, built once and scanned per operand

    Args:
        calls: Call sequence
        cache_bytes: Cache size (decides splitting)
        history: Number of preceding calls a scan may look at (None: all)
        total_bytes: Distance for operands without a previous access
            (default: the size of every buffer the sequence touches)
        threshold: Split threshold
        line_bytes: Cache line size for region rounding (optional)
    """

    def __init__(self, calls, cache_bytes, history=None, total_bytes=None,
                 threshold=DEFAULT_SPLIT_THRESHOLD, line_bytes=None):
        self.calls = list(calls)
        self.history = history
        self.line_bytes = line_bytes
        self.total_bytes = (sequence_bytes(self.calls, line_bytes)
                            if total_bytes is None else int(total_bytes))
        self.records: List[List[AccessRecord]] = [
            split_records(call, cache_bytes, threshold, line_bytes) for call in self.calls
        ]

    def distance(self, index, operand):
        """Bytes accessed since the previous use of `operand` of call `index`"""
        if not 0 <= index < len(self.calls):
            raise IndexError(f"Call index {index} outside a sequence of {len(self.calls)}")
        call = self.calls[index]
        if operand not in call.operands:
            raise UnknownOperandError(f"{call} has no operand {operand}")
        target = OperandAccess.of(call, operand)
        if target.rows == 0 or target.cols == 0:
            return 0
        start = index - 1
        stop = -1 if self.history is None else max(-1, index - 1 - self.history)
        distance = 0
        for previous in range(start, stop, -1):
            for batch in batches(self.records[previous]):
                hits = [record for record in batch if overlaps(record.access, target)]
                if hits:
                    return distance + sum(record.nbytes for record in batch if record not in hits)
                distance += sum(record.nbytes for record in batch)
        return self.total_bytes

    def distances(self, index):
        """Distances of all operands of call `index`"""
        return {name: self.distance(index, name) for name in self.calls[index].operands}


def access_distance(calls, index, operand, cache_bytes, history=None, total_bytes=None,
                    threshold=DEFAULT_SPLIT_THRESHOLD, line_bytes=None):
    """
    Access distance of one operand of one call in a sequence

    Args:
        calls: Call sequence
        index: Position of the call in the sequence
        operand: Data argument name, e.g. 'A'
        cache_bytes: Cache size
        history: Number of preceding calls scanned (None: all)
        total_bytes: Fallback distance when no previous access is found

    Returns:
        int: Distance in bytes
    """
    return AccessHistory(
        calls, cache_bytes, history, total_bytes, threshold, line_bytes,
    ).distance(index, operand)
