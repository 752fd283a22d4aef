"""
Running contraction algorithms as sequences of kernel calls on flat
column-major tensor buffers.
"""

import logging
import math

import numpy as np

from kernels.buffers import BufferStore
from kernels.calls import Call, Operand
from kernels.costs import call_flops
from kernels.reference import execute

from .contractions import ShapeMismatchError

logger = logging.getLogger(__name__)


def slice_offset(spec, piece, point):
    """Element offset of a slice's first element at a loop point"""
    strides = spec.strides(piece.tensor)
    return sum(point.get(index, 0) * strides[index] for index in piece.fixed)


def _vector(spec, piece, point, name, inc_name):
    index, = piece.free
    return {name: Operand(piece.tensor, slice_offset(spec, piece, point)),
            inc_name: spec.strides(piece.tensor)[index]}


def _matrix(spec, operand, point, name):
    if operand.copied:
        return {name: Operand(operand.buffer), f"ld{name}": max(1, spec.extent(operand.rows))}
    piece = operand.slice
    return {name: Operand(piece.tensor, slice_offset(spec, piece, point)),
            f"ld{name}": spec.strides(piece.tensor)[operand.cols]}


def kernel_call(algorithm, point, alpha=1.0):
    """
    The kernel call of one loop iteration

    Args:
        algorithm: ContractionAlgorithm
        point: Loop index -> value (missing indices count as 0)
        alpha: Scalar of an axpy call

    Returns:
        Call
    """
    spec, operands = algorithm.spec, algorithm.operands
    values = {name: spec.extent(index) for name, index in algorithm.sizes.items()}
    values.update(algorithm.flags)
    if algorithm.kernel in ('dot', 'axpy'):
        values.update(_vector(spec, operands['x'], point, 'x', 'incx'))
        values.update(_vector(spec, operands['y'], point, 'y', 'incy'))
        if algorithm.kernel == 'axpy':
            values['alpha'] = alpha
    elif algorithm.kernel in ('gemv', 'ger'):
        values.update(_matrix(spec, operands['A'], point, 'A'))
        values.update(_vector(spec, operands['x'], point, 'x', 'incx'))
        values.update(_vector(spec, operands['y'], point, 'y', 'incy'))
    else:
        for name in ('A', 'B', 'C'):
            values.update(_matrix(spec, operands[name], point, name))
    return Call.build(algorithm.routine, tag={'contraction': algorithm.name}, **values)


def copy_calls(spec, copy, point, back=False):
    """One dcopy per column between a slice and its copy buffer"""
    operand = copy.operand
    strides = spec.strides(operand.slice.tensor)
    rows, cols = spec.extent(operand.rows), spec.extent(operand.cols)
    offset = slice_offset(spec, operand.slice, point)
    calls = []
    for col in range(cols):
        source = {'x': Operand(operand.slice.tensor, offset + col * strides[operand.cols]),
                  'incx': strides[operand.rows]}
        target = {'y': Operand(operand.buffer, col * rows), 'incy': 1}
        if back:
            source = {'y': source['x'], 'incy': source['incx']}
            target = {'x': target['y'], 'incx': 1}
        calls.append(Call.build('dcopy', n=rows, tag={'copy': operand.buffer},
                                **source, **target))
    return calls


def walk(algorithm, point=None, depth=0):
    """
    Every call of an algorithm in execution order

    Yields:
        tuple: (call, point) with point a snapshot of the loop indices;
            copy calls carry the point of the loop they sit in
    """
    point = {} if point is None else point
    for copy in algorithm.copies_at(depth):
        for call in copy_calls(algorithm.spec, copy, point):
            yield call, dict(point)
    if depth == len(algorithm.loops):
        yield kernel_call(algorithm, point), dict(point)
    else:
        index = algorithm.loops[depth]
        for value in range(algorithm.spec.extent(index)):
            point[index] = value
            yield from walk(algorithm, point, depth + 1)
        del point[index]
    for copy in algorithm.copies_at(depth):
        if copy.back:
            for call in copy_calls(algorithm.spec, copy, point, back=True):
                yield call, dict(point)


def algorithm_calls(algorithm):
    return [call for call, _ in walk(algorithm)]


def allocate(algorithm, store=None):
    """Tensor and copy buffers of an algorithm"""
    spec = algorithm.spec
    store = store or BufferStore()
    for role in ('A', 'B', 'C'):
        store.ensure(role, spec.size(role))
    for copy in algorithm.copies:
        operand = copy.operand
        store.ensure(operand.buffer, spec.extent(operand.rows) * spec.extent(operand.cols))
    return store


def _check_shape(spec, role, array):
    if tuple(np.shape(array)) != spec.shape(role):
        raise ShapeMismatchError(
            f"{spec.name(role)} has shape {tuple(np.shape(array))}, "
            f"expected {spec.shape(role)}"
        )


def execute_algorithm(algorithm, left, right, output=None):
    """
    Compute a contraction with an algorithm's kernel calls

    Args:
        algorithm: ContractionAlgorithm
        left: First input as an ndarray
        right: Second input as an ndarray
        output: Initial output (default zeros); results are added to it

    Returns:
        ndarray: The output tensor
    """
    spec = algorithm.spec
    _check_shape(spec, 'A', left)
    _check_shape(spec, 'B', right)
    store = allocate(algorithm)
    store['A'][:] = np.ravel(left, order='F')
    store['B'][:] = np.ravel(right, order='F')
    if output is not None:
        _check_shape(spec, 'C', output)
        store['C'][:] = np.ravel(output, order='F')
    operands = algorithm.operands
    for call, point in walk(algorithm):
        if call.tag.get('contraction') and algorithm.kernel == 'axpy':
            piece = operands['alpha']
            call.values['alpha'] = float(store[piece.tensor][slice_offset(spec, piece, point)])
        result = execute(call, store)
        if call.tag.get('contraction') and algorithm.kernel == 'dot':
            store['C'][slice_offset(spec, operands['result'], point)] += result
    return store['C'].reshape(spec.shape('C'), order='F').copy()


def invocations(algorithm):
    """Number of kernel calls: the product of the loop extents"""
    return math.prod(algorithm.spec.extent(index) for index in algorithm.loops)


def copy_invocations(algorithm, copy):
    """Number of dcopy calls of one copy, copy-back included"""
    spec = algorithm.spec
    runs = math.prod(spec.extent(index) for index in algorithm.loops[:copy.depth])
    return runs * spec.extent(copy.operand.cols) * (2 if copy.back else 1)


def algorithm_flops(algorithm):
    return invocations(algorithm) * call_flops(kernel_call(algorithm, {}))


def measure_contraction(sampler, algorithm, repetitions=3, warm_policy='cold'):
    """
    Runtime of a whole algorithm execution

    Returns:
        SummaryStats: Runtimes of the full call sequence
    """
    calls = algorithm_calls(algorithm)
    backend = sampler.backend
    if not backend.dry:
        allocate(algorithm, backend.store)
    logger.info(f"Measuring {algorithm.name}: {len(calls)} calls x {repetitions}")
    return sampler.measure_sequence(calls, repetitions, warm_policy)