"""
Contraction algorithms: a BLAS kernel applied to tensor slices inside a
nest of loops over the remaining indices.

Every way of assigning the contraction's indices to a kernel's dimensions
is combined with every order of the loops over the others. A matrix slice
whose indices both have non-unit stride is copied into a contiguous
buffer first, and output slices are copied back afterwards.
"""

import itertools
import logging
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

from common.errors import ToolkitError

from .contractions import parse_spec

logger = logging.getLogger(__name__)

KERNELS = ('dot', 'axpy', 'gemv', 'ger', 'gemm')
BLAS = {'dot': 'ddot', 'axpy': 'daxpy', 'gemv': 'dgemv', 'ger': 'dger', 'gemm': 'dgemm'}


class UnknownAlgorithmError(ToolkitError):
    """Raised when no generated algorithm has the requested name"""
    pass


@dataclass(frozen=True)
class Slice:
    """
    The part of a tensor a kernel works on.

    `free` holds the tensor's indices kept whole, in storage order; all
    other indices are fixed by the surrounding loops.
    """
    tensor: str
    indices: Tuple[str, ...]
    free: Tuple[str, ...]

    @property
    def fixed(self):
        return tuple(index for index in self.indices if index not in self.free)

    @property
    def contiguous(self):
        """Whether the tensor's unit-stride index is kept whole"""
        return bool(self.indices) and self.indices[0] in self.free

    def text(self, name=None):
        entries = [':' if index in self.free else index for index in self.indices]
        return f"{name or self.tensor}[{','.join(entries)}]"


@dataclass(frozen=True)
class MatrixOperand:
    """
    A two-index slice as the kernel sees it: stored (rows x cols), either
    in place or in the copy buffer `buffer`.
    """
    slice: Slice
    rows: str
    cols: str
    buffer: Optional[str] = None

    @property
    def copied(self):
        return self.buffer is not None


@dataclass(frozen=True)
class Copy:
    """Copy of a matrix slice into its buffer, placed `depth` loops deep"""
    operand: MatrixOperand
    depth: int
    back: bool = False


@dataclass(frozen=True)
class ContractionAlgorithm:
    name: str
    spec: object
    kernel: str
    loops: Tuple[str, ...]
    kernel_indices: Tuple[str, ...]
    # kernel argument -> Slice (vectors, scalars) or MatrixOperand
    operands: Dict[str, object]
    flags: Dict[str, str]
    # kernel size argument -> index
    sizes: Dict[str, str]
    copies: Tuple[Copy, ...] = ()

    @property
    def routine(self):
        return BLAS[self.kernel]

    def slice(self, argument):
        operand = self.operands[argument]
        return operand.slice if isinstance(operand, MatrixOperand) else operand

    def copies_at(self, depth):
        return [copy for copy in self.copies if copy.depth == depth]

    def label(self, argument):
        """Slice text of a kernel argument, e.g. A[a,:]"""
        piece = self.slice(argument)
        return piece.text(self.spec.name(piece.tensor))

    def __str__(self):
        return self.name


def _slice(spec, role, free):
    indices = spec.indices(role)
    return Slice(role, indices, tuple(index for index in indices if index in free))


def _matrix(spec, role, pair):
    """Storage of a two-index slice: in place when one index has unit stride"""
    piece = _slice(spec, role, pair)
    rows, cols = piece.free
    if piece.contiguous:
        return MatrixOperand(piece, rows, cols)
    return MatrixOperand(piece, rows, cols, f"{role}_copy")


def _trans(operand, rows):
    return 'N' if operand.rows == rows else 'T'


def _other(role):
    return 'B' if role == 'A' else 'A'


def _owner(spec, index):
    return 'A' if index in spec.left else 'B'


def _dot(spec, k):
    return {'x': _slice(spec, 'A', (k,)), 'y': _slice(spec, 'B', (k,)),
            'result': _slice(spec, 'C', ())}, {}, {'n': k}


def _axpy(spec, f):
    owner = _owner(spec, f)
    return {'x': _slice(spec, owner, (f,)), 'y': _slice(spec, 'C', (f,)),
            'alpha': _slice(spec, _other(owner), ())}, {}, {'n': f}


def _gemv(spec, k, f):
    owner = _owner(spec, f)
    matrix = _matrix(spec, owner, (f, k))
    operands = {'A': matrix, 'x': _slice(spec, _other(owner), (k,)),
                'y': _slice(spec, 'C', (f,))}
    return operands, {'trans': _trans(matrix, f)}, {'m': matrix.rows, 'n': matrix.cols}


def _ger(spec, fa, fb):
    matrix = _matrix(spec, 'C', (fa, fb))
    x, y = (_slice(spec, 'A', (fa,)), _slice(spec, 'B', (fb,)))
    if matrix.rows == fb:
        x, y = y, x
    return {'x': x, 'y': y, 'A': matrix}, {}, {'m': matrix.rows, 'n': matrix.cols}


def _gemm(spec, k, fa, fb):
    c = _matrix(spec, 'C', (fa, fb))
    first, second = ('A', 'B') if c.rows == fa else ('B', 'A')
    a = _matrix(spec, first, (c.rows, k))
    b = _matrix(spec, second, (k, c.cols))
    flags = {'transA': _trans(a, c.rows), 'transB': _trans(b, k)}
    return {'A': a, 'B': b, 'C': c}, flags, {'m': c.rows, 'n': c.cols, 'k': k}


def _mappings(spec):
    """(kernel, kernel indices, builder arguments) for every index assignment"""
    for k in spec.contracted:
        yield 'dot', (k,), (k,)
    for f in spec.free:
        yield 'axpy', (f,), (f,)
    for k in spec.contracted:
        for f in spec.free:
            yield 'gemv', (k, f), (k, f)
    for fa in spec.free_left:
        for fb in spec.free_right:
            yield 'ger', (fa, fb), (fa, fb)
    for k in spec.contracted:
        for fa in spec.free_left:
            for fb in spec.free_right:
                yield 'gemm', (k, fa, fb), (k, fa, fb)


_BUILDERS = {'dot': _dot, 'axpy': _axpy, 'gemv': _gemv, 'ger': _ger, 'gemm': _gemm}


def _copies(operands, loops):
    copies = []
    for argument, operand in operands.items():
        if isinstance(operand, MatrixOperand) and operand.copied:
            depth = max((loops.index(index) + 1 for index in operand.slice.fixed), default=0)
            copies.append(Copy(operand, depth, back=operand.slice.tensor == 'C'))
    return tuple(copies)


def algorithm_name(kernel, loops, copies=()):
    """Loop indices outer to inner, a prime after the loop holding each copy, then the kernel"""
    marks = [0] * (len(loops) + 1)
    for copy in copies:
        marks[copy.depth] += 1
    head = "'" * marks[0] + ''.join(index + "'" * marks[depth + 1]
                                    for depth, index in enumerate(loops))
    return f"{head}-{kernel}" if head else kernel


def generate_algorithms(spec, kernels=KERNELS):
    """
    Every kernel mapping and loop order of a contraction

    Args:
        spec: ContractionSpec or contraction text
        kernels: Kernels to consider, subset of KERNELS

    Returns:
        list: ContractionAlgorithms, grouped by kernel in the order of KERNELS
    """
    spec = parse_spec(spec) if isinstance(spec, str) else spec
    algorithms = []
    for kernel, kernel_indices, arguments in _mappings(spec):
        if kernel not in kernels:
            continue
        operands, flags, sizes = _BUILDERS[kernel](spec, *arguments)
        sliced = [index for index in spec.all_indices if index not in kernel_indices]
        for loops in itertools.permutations(sliced):
            copies = _copies(operands, loops)
            algorithms.append(ContractionAlgorithm(
                algorithm_name(kernel, loops, copies), spec, kernel, tuple(loops),
                kernel_indices, operands, flags, sizes, copies,
            ))
    logger.info(f"{spec}: {len(algorithms)} algorithms")
    return algorithms


def get_contraction_algorithm(spec, name):
    for algorithm in generate_algorithms(spec):
        if algorithm.name == name or algorithm.name.replace("'", '') == name:
            return algorithm
    raise UnknownAlgorithmError(f"No algorithm {name} for {spec}")


def kernel_text(algorithm):
    """The kernel invocation as an update of tensor slices"""
    label = algorithm.label
    flags = ''.join(algorithm.flags.values())
    routine = f"{algorithm.routine}[{flags}]" if flags else algorithm.routine
    if algorithm.kernel == 'dot':
        update = f"{label('result')} += {label('x')} * {label('y')}"
    elif algorithm.kernel == 'axpy':
        update = f"{label('y')} += {label('alpha')} * {label('x')}"
    elif algorithm.kernel == 'gemv':
        update = f"{label('y')} += {label('A')} * {label('x')}"
    elif algorithm.kernel == 'ger':
        update = f"{label('A')} += {label('x')} * {label('y')}"
    else:
        update = f"{label('C')} += {label('A')} * {label('B')}"
    return f"{routine}: {update}"


def _copy_text(algorithm, copy, back=False):
    operand = copy.operand
    source = operand.slice.text(algorithm.spec.name(operand.slice.tensor))
    target = f"{operand.buffer}[{operand.rows},{operand.cols}]"
    return f"dcopy: {source} = {target}" if back else f"dcopy: {target} = {source}"


def listing(algorithm):
    """
    C-like loop nest of an algorithm

    Returns:
        str: One statement per line, indented by nesting depth
    """
    spec = algorithm.spec
    lines = []

    def emit(depth, text):
        lines.append('    ' * depth + text)

    for depth in range(len(algorithm.loops) + 1):
        for copy in algorithm.copies_at(depth):
            emit(depth, _copy_text(algorithm, copy))
        if depth < len(algorithm.loops):
            index = algorithm.loops[depth]
            extent = spec.extents.get(index, f"n{index}")
            emit(depth, f"for ({index} = 0; {index} < {extent}; {index}++)")
    emit(len(algorithm.loops), kernel_text(algorithm))
    for depth in range(len(algorithm.loops), -1, -1):
        for copy in algorithm.copies_at(depth):
            if copy.back:
                emit(depth, _copy_text(algorithm, copy, back=True))
    return '\n'.join(lines)


def export_algorithm(algorithm):
    """Algorithm as plain data"""
    return {
        'name': algorithm.name,
        'contraction': algorithm.spec.text(),
        'kernel': algorithm.routine,
        'loops': list(algorithm.loops),
        'kernel_indices': list(algorithm.kernel_indices),
        'flags': dict(algorithm.flags),
        'sizes': dict(algorithm.sizes),
        'operands': {argument: algorithm.label(argument) for argument in algorithm.operands},
        'copies': [
            {'tensor': copy.operand.slice.tensor, 'buffer': copy.operand.buffer,
             'depth': copy.depth, 'back': copy.back}
            for copy in algorithm.copies
        ],
        'listing': listing(algorithm),
    }
