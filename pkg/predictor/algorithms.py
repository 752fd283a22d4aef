"""
Blocked algorithms: a traversal plus the update rules of one step.

A traversal moves a block of width b across the operands. At each step the
block boundaries p and q = min(p + b, extent) split every traversed
dimension into three parts (0: before the block, 1: the block, 2: after
it), which names the sub-matrices: A21 is rows part 2 by columns part 1,
A[12]1 stacks rows parts 1 and 2 of column part 1, tau1 is the block's
slice of a vector.

Update rules list the kernel calls of one step with size expressions over
n, m, b, p and q. Expanding an algorithm for concrete sizes yields the exact
call sequence of the blocked routine, zero-extent calls included.
"""

import logging
import re
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, Optional, Tuple

import numpy as np
import sympy

from common.errors import ToolkitError
from common.utils import ceil_div
from kernels.calls import Call, Operand
from kernels.costs import call_flops, split_flags
from kernels.signatures import Data, Inc, Scalar, Size, get_kernel

logger = logging.getLogger(__name__)


class UnknownAlgorithmError(ToolkitError):
    """Raised when an algorithm name is not registered"""
    pass


class AlgorithmDefinitionError(ToolkitError):
    """Raised when an update rule does not fit its algorithm's partitioning"""
    pass


class Traversal(Enum):
    DIAG_SE = 'diag-SE'
    DIAG_NW = 'diag-NW'
    VERTICAL = 'vertical'
    HORIZONTAL = 'horizontal'
    DIAG_NE = 'diag-NE'


@dataclass(frozen=True)
class Axis:
    """A traversed dimension: its length and the names of its block bounds"""
    name: str
    length: str
    forward: bool
    p: str = 'p'
    q: str = 'q'


TRAVERSAL_AXES = {
    Traversal.DIAG_SE: (Axis('k', 'Min(m, n)', True),),
    Traversal.DIAG_NW: (Axis('k', 'Min(m, n)', False),),
    # bottom to top
    Traversal.VERTICAL: (Axis('m', 'm', False),),
    Traversal.HORIZONTAL: (Axis('n', 'n', True),),
    # rows bottom to top, columns left to right
    Traversal.DIAG_NE: (Axis('m', 'm', False, 'pm', 'qm'), Axis('n', 'n', True, 'pn', 'qn')),
}

_FUNCTIONS = {}


def _function(text, modules):
    key = (text, modules)
    if key not in _FUNCTIONS:
        expr = sympy.sympify(text)
        names = sorted(symbol.name for symbol in expr.free_symbols)
        _FUNCTIONS[key] = (sympy.lambdify(names, expr, modules=modules), names)
    return _FUNCTIONS[key]


def evaluate_expression(text, namespace):
    """Integer value of a size expression such as 'n-q'"""
    func, names = _function(str(text), 'math')
    return int(func(*[namespace[name] for name in names]))


def evaluate_expression_array(text, namespace, length):
    func, names = _function(str(text), 'numpy')
    value = func(*[namespace[name] for name in names])
    return np.broadcast_to(np.asarray(value, dtype=np.int64), (length,))


def traversal_bounds(traversal, m, n, b):
    """
    Block bounds of every step, in traversal order

    Args:
        traversal: Traversal
        m, n: Problem sizes
        b: Block size (at least 1)

    Returns:
        dict: Axis name -> (p, q) integer arrays with one entry per step. When
        one axis of a two-axis traversal runs out before the other, its block
        stays empty at the end it reached.
    """
    if b < 1:
        raise ValueError(f"Block size must be at least 1, got {b}")
    axes = TRAVERSAL_AXES[Traversal(traversal)]
    lengths = [evaluate_expression(axis.length, {'m': m, 'n': n}) for axis in axes]
    counts = [ceil_div(length, b) for length in lengths]
    steps = np.arange(max(counts, default=0), dtype=np.int64)
    bounds = {}
    for axis, length, count in zip(axes, lengths, counts):
        index = steps if axis.forward else count - 1 - steps
        p = np.clip(index * b, 0, length)
        q = np.where(index < 0, 0, np.minimum(p + b, length))
        bounds[axis.name] = (p, q)
    return bounds


def traversal_steps(traversal, m, n, b):
    """Block bounds per step: a list of dicts mapping axis name to (p, q)"""
    bounds = traversal_bounds(traversal, m, n, b)
    count = len(next(iter(bounds.values()))[0]) if bounds else 0
    return [
        {name: (int(p[step]), int(q[step])) for name, (p, q) in bounds.items()}
        for step in range(count)
    ]


@dataclass(frozen=True)
class OperandShape:
    """Extent of an operand and the axes partitioning its rows and columns"""
    rows: str
    cols: str = '1'
    row_axis: Optional[str] = None
    col_axis: Optional[str] = None

    @property
    def partitioned(self):
        return tuple(axis for axis in (self.row_axis, self.col_axis) if axis)


@dataclass(frozen=True)
class RegionSpec:
    """Auxiliary block at fixed expressions inside an operand (e.g. W1, W2)"""
    operand: str
    row: str
    rows: str
    col: str
    cols: str


@dataclass(frozen=True)
class At:
    """A block shifted by (row, col) elements, e.g. row j of a panel"""
    block: str
    row: str = '0'
    col: str = '0'


@dataclass(frozen=True)
class Region:
    """A sub-matrix of a buffer: element position, extent and leading dimension"""
    buffer: str
    row: int = 0
    col: int = 0
    rows: int = 0
    cols: int = 0
    ld: int = 1

    @property
    def offset(self):
        return self.row + self.col * self.ld

    def block(self, row, rows, col, cols):
        return Region(self.buffer, self.row + row, self.col + col, rows, cols, self.ld)


@dataclass(frozen=True)
class UpdateRule:
    """
    One kernel call per step (or `repeat` calls indexed by j)

    `when` skips the rule on steps where it evaluates to 0 or less. A
    pseudo rule stands for an operation no kernel performs; its `inline`
    rule gives the calls that do the work when the algorithm is executed.
    """
    kernel: str
    flags: Tuple[Tuple[str, str], ...]
    sizes: Tuple[Tuple[str, str], ...]
    operands: Tuple[Tuple[str, object], ...]
    scalars: Tuple[Tuple[str, float], ...] = ()
    increments: Tuple[Tuple[str, str], ...] = ()
    repeat: Optional[str] = None
    when: Optional[str] = None
    pseudo: bool = False
    inline: Optional['UpdateRule'] = None

    @property
    def label(self):
        flags = ''.join(value for _, value in self.flags)
        return f"{self.kernel}_{flags}" if flags else self.kernel


@dataclass(frozen=True)
class Solve:
    """Sub-problem solved by the algorithm's solver for `kind`, or directly by dtrsyl"""
    kind: str
    operands: Tuple[Tuple[str, str], ...]


def rule(kernel, flags='', repeat=None, when=None, pseudo=False, inline=None, **args):
    """
    Build an UpdateRule from keyword arguments named like the kernel's

    Sizes and increments are expressions, scalars numbers, data arguments
    block names (or At).
    """
    descriptor = get_kernel(kernel)
    flag_values = dict(zip((f.name for f in descriptor.flags), split_flags(descriptor, flags)))
    descriptor.validate_flags(flag_values)
    sizes, scalars, operands, increments = [], [], [], []
    for arg in descriptor.args:
        if arg.name not in args:
            if isinstance(arg, (Size, Data)):
                raise AlgorithmDefinitionError(f"{descriptor.name}: {arg.name} is not bound")
            continue
        value = args.pop(arg.name)
        if isinstance(arg, Size):
            sizes.append((arg.name, str(value)))
        elif isinstance(arg, Scalar):
            scalars.append((arg.name, float(value)))
        elif isinstance(arg, Data):
            operands.append((arg.name, value))
        elif isinstance(arg, Inc):
            increments.append((arg.name, str(value)))
    if args:
        raise AlgorithmDefinitionError(f"{descriptor.name}: unknown arguments {', '.join(args)}")
    return UpdateRule(
        descriptor.name, tuple(flag_values.items()), tuple(sizes), tuple(operands),
        tuple(scalars), tuple(increments), repeat, when, pseudo, inline,
    )


def solve(kind, **operands):
    return Solve(kind, tuple(operands.items()))


_BLOCK = re.compile(r'^([A-Za-z]+?)((?:\d|\[\d+\])*)$')
_PARTS = re.compile(r'\d|\[\d+\]')


def _span(group, bounds, extent):
    edges = (0, bounds[0], bounds[1], extent)
    return edges[group[0]], edges[group[-1] + 1]


@dataclass(frozen=True)
class BlockedAlgorithm:
    """
    A blocked algorithm for one operation

    Args:
        name: Registry name, e.g. 'chol3'
        operation: Operation whose closed-form cost applies ('dpotrf', ...)
        traversal: Traversal direction
        operands: Operand name -> OperandShape
        updates: UpdateRule and Solve entries of one step, in order
        regions: Auxiliary block name -> RegionSpec
        solvers: Solve kind -> algorithm for the sub-problem (None: dtrsyl)
        square: Problem is n x n (m must equal n)
    """
    name: str
    operation: str
    traversal: Traversal
    operands: Dict[str, OperandShape]
    updates: Tuple[object, ...]
    regions: Dict[str, RegionSpec] = field(default_factory=dict)
    solvers: Dict[str, Optional['BlockedAlgorithm']] = field(default_factory=dict)
    square: bool = True
    description: str = ''

    def __post_init__(self):
        object.__setattr__(self, 'traversal', Traversal(self.traversal))
        for update in self.updates:
            for _, ref in update.operands:
                self.parse_block(ref.block if isinstance(ref, At) else ref)
            if isinstance(update, UpdateRule) and update.inline is not None:
                for _, ref in update.inline.operands:
                    self.parse_block(ref.block if isinstance(ref, At) else ref)

    @property
    def axes(self):
        return TRAVERSAL_AXES[self.traversal]

    @property
    def rules(self):
        return [update for update in self.updates if isinstance(update, UpdateRule)]

    def parse_block(self, ref):
        """(operand, part groups) of a block name; part groups is None for a region"""
        if ref in self.regions:
            return self.regions[ref].operand, None
        match = _BLOCK.match(ref)
        if not match or match.group(1) not in self.operands:
            raise AlgorithmDefinitionError(f"{self.name}: unknown block {ref}")
        name = match.group(1)
        groups = [tuple(int(d) for d in part.strip('[]')) for part in _PARTS.findall(match.group(2))]
        if len(groups) != len(self.operands[name].partitioned):
            raise AlgorithmDefinitionError(
                f"{self.name}: {ref} needs {len(self.operands[name].partitioned)} part indices"
            )
        for group in groups:
            if any(part > 2 for part in group) or list(group) != list(range(group[0], group[-1] + 1)):
                raise AlgorithmDefinitionError(f"{self.name}: {ref} has invalid parts")
        return name, groups

    def block_region(self, ref, namespace, bounds, bases):
        name, groups = self.parse_block(ref)
        if groups is None:
            spec = self.regions[ref]
            return bases[spec.operand].block(*(
                evaluate_expression(text, namespace)
                for text in (spec.row, spec.rows, spec.col, spec.cols)
            ))
        shape = self.operands[name]
        rows = evaluate_expression(shape.rows, namespace)
        cols = evaluate_expression(shape.cols, namespace)
        groups = iter(groups)
        row0, row1 = _span(next(groups), bounds[shape.row_axis], rows) if shape.row_axis else (0, rows)
        col0, col1 = _span(next(groups), bounds[shape.col_axis], cols) if shape.col_axis else (0, cols)
        return bases[name].block(row0, row1 - row0, col0, col1 - col0)

    def bases(self, m, n, b):
        """Top-level regions: every operand is its own buffer, ld = its row count"""
        namespace = {'m': m, 'n': n, 'b': b}
        regions = {}
        for name, shape in self.operands.items():
            rows = evaluate_expression(shape.rows, namespace)
            cols = evaluate_expression(shape.cols, namespace)
            regions[name] = Region(name, 0, 0, rows, cols, max(1, rows))
        return regions

    def expand(self, m, n, b, bases=None):
        """The call sequence for problem sizes (m, n) and block size b"""
        calls = []
        self._expand(m, n, b, bases or self.bases(m, n, b), calls)
        return calls

    def _expand(self, m, n, b, bases, calls):
        namespace = {'m': m, 'n': n, 'b': b}
        namespace.update({f"ld_{name}": region.ld for name, region in bases.items()})
        for bounds in traversal_steps(self.traversal, m, n, b):
            step = dict(namespace)
            for axis in self.axes:
                step[axis.p], step[axis.q] = bounds[axis.name]
            for update in self.updates:
                if isinstance(update, Solve):
                    self._solve(update, step, bounds, bases, b, calls)
                else:
                    calls.extend(self._emit(update, step, bounds, bases))

    def _emit(self, update, step, bounds, bases):
        if update.when is not None and evaluate_expression(update.when, step) <= 0:
            return []
        count = 1 if update.repeat is None else evaluate_expression(update.repeat, step)
        calls = []
        for j in range(count):
            namespace = dict(step, j=j)
            values = dict(update.flags)
            values.update({name: evaluate_expression(text, namespace) for name, text in update.sizes})
            values.update(update.scalars)
            descriptor = get_kernel(update.kernel)
            for name, ref in update.operands:
                at = ref if isinstance(ref, At) else At(ref)
                region = self.block_region(at.block, namespace, bounds, bases)
                region = region.block(
                    evaluate_expression(at.row, namespace), 0, evaluate_expression(at.col, namespace), 0,
                )
                values[name] = Operand(region.buffer, region.offset)
                ld = descriptor.ld_for(name)
                if ld is not None:
                    values[ld.name] = region.ld
            values.update({
                name: evaluate_expression(text, namespace) for name, text in update.increments
            })
            tag = {}
            if update.pseudo:
                tag['pseudo'] = True
                if update.inline is not None:
                    tag['inline'] = self._emit(update.inline, namespace, bounds, bases)
            calls.append(Call.build(descriptor.name, tag=tag, **values))
        return calls

    def _solve(self, update, step, bounds, bases, b, calls):
        regions = {
            name: self.block_region(ref, step, bounds, bases) for name, ref in update.operands
        }
        target = regions['C']
        solver = self.solvers.get(update.kind)
        if solver is not None:
            solver._expand(target.rows, target.cols, b, regions, calls)
            return
        values = {'transA': 'N', 'transB': 'N', 'isgn': '1', 'm': target.rows, 'n': target.cols}
        for name, region in regions.items():
            values[name] = Operand(region.buffer, region.offset)
            values[f"ld{name}"] = region.ld
        calls.append(Call.build('dtrsyl', **values))


def problem_sizes(sizes, square=True):
    """(m, n) from an int n or a dict with n and optionally m"""
    if isinstance(sizes, dict):
        n = int(sizes['n'])
        m = int(sizes.get('m', n))
    elif isinstance(sizes, (tuple, list)):
        m, n = (int(sizes[0]), int(sizes[0])) if len(sizes) == 1 else (int(sizes[0]), int(sizes[1]))
    else:
        m = n = int(sizes)
    if m < 0 or n < 0:
        raise ValueError(f"Problem sizes must be nonnegative, got m={m}, n={n}")
    if square and m != n:
        raise ValueError(f"Square operation needs m == n, got m={m}, n={n}")
    return m, n


def call_sequence(algorithm, sizes, b):
    """
    Exact kernel call sequence of a blocked algorithm

    Args:
        algorithm: BlockedAlgorithm or registered name
        sizes: n, or {'m': m, 'n': n} for rectangular and Sylvester problems
        b: Block size, at least 1 (b > n gives a single step)

    Returns:
        list: Calls in execution order, zero-extent calls included
    """
    algorithm = get_algorithm(algorithm)
    m, n = problem_sizes(sizes, algorithm.square)
    calls = algorithm.expand(m, n, int(b))
    logger.debug(f"{algorithm.name} m={m} n={n} b={b}: {len(calls)} calls")
    return calls


def sequence_flops(calls):
    """Total flop count of a call sequence (pseudo-calls count 0)"""
    return sum(call_flops(call) for call in calls)


def algorithm_flops(algorithm, sizes, b):
    """
    Total flop count of an algorithm's call sequence without building the calls

    Evaluates every rule over all steps at once; algorithms with recursive
    sub-problems fall back to counting the expanded sequence.
    """
    algorithm = get_algorithm(algorithm)
    m, n = problem_sizes(sizes, algorithm.square)
    if len(algorithm.rules) != len(algorithm.updates):
        return sequence_flops(algorithm.expand(m, n, int(b)))
    bounds = traversal_bounds(algorithm.traversal, m, n, int(b))
    namespace = {'m': m, 'n': n, 'b': int(b)}
    for axis in algorithm.axes:
        namespace[axis.p], namespace[axis.q] = bounds[axis.name]
    length = len(namespace[algorithm.axes[0].p])
    if length == 0:
        return 0
    total = 0
    for update in algorithm.rules:
        if update.pseudo:
            continue
        values = dict(update.flags)
        values.update({
            name: evaluate_expression_array(text, namespace, length) for name, text in update.sizes
        })
        flops = get_kernel(update.kernel).flops.evaluate_array(values, length)
        if update.repeat is not None:
            flops = flops * evaluate_expression_array(update.repeat, namespace, length)
        if update.when is not None:
            flops = flops * (evaluate_expression_array(update.when, namespace, length) > 0)
        total += int(np.sum(flops))
    return total


SQUARE = {'A': OperandShape('n', 'n', 'k', 'k')}

CHOLESKY = [
    BlockedAlgorithm('chol1', 'dpotrf', Traversal.DIAG_SE, SQUARE, (
        rule('dtrsm', 'RLTN', m='q-p', n='p', alpha=1, A='A00', B='A10'),
        rule('dsyrk', 'LN', n='q-p', k='p', alpha=-1, beta=1, A='A10', C='A11'),
        rule('dpotf2', 'L', n='q-p', A='A11'),
    ), description='Cholesky decomposition, bordered'),
    BlockedAlgorithm('chol2', 'dpotrf', Traversal.DIAG_SE, SQUARE, (
        rule('dsyrk', 'LN', n='q-p', k='p', alpha=-1, beta=1, A='A10', C='A11'),
        rule('dpotf2', 'L', n='q-p', A='A11'),
        rule('dgemm', 'NT', m='n-q', n='q-p', k='p', alpha=-1, beta=1, A='A20', B='A10', C='A21'),
        rule('dtrsm', 'RLTN', m='n-q', n='q-p', alpha=1, A='A11', B='A21'),
    ), description='Cholesky decomposition, left-looking'),
    BlockedAlgorithm('chol3', 'dpotrf', Traversal.DIAG_SE, SQUARE, (
        rule('dpotf2', 'L', n='q-p', A='A11'),
        rule('dtrsm', 'RLTN', m='n-q', n='q-p', alpha=1, A='A11', B='A21'),
        rule('dsyrk', 'LN', n='n-q', k='q-p', alpha=-1, beta=1, A='A21', C='A22'),
    ), description='Cholesky decomposition, right-looking'),
]

TRIANGULAR_INVERSION = [
    BlockedAlgorithm('trinv1', 'dtrtri', Traversal.DIAG_SE, SQUARE, (
        rule('dtrmm', 'RLNN', m='q-p', n='p', alpha=1, A='A00', B='A10'),
        rule('dtrsm', 'LLNN', m='q-p', n='p', alpha=-1, A='A11', B='A10'),
        rule('dtrti2', 'LN', n='q-p', A='A11'),
    )),
    BlockedAlgorithm('trinv2', 'dtrtri', Traversal.DIAG_SE, SQUARE, (
        rule('dtrsm', 'LLNN', m='n-q', n='q-p', alpha=1, A='A22', B='A21'),
        rule('dtrsm', 'RLNN', m='n-q', n='q-p', alpha=-1, A='A11', B='A21'),
        rule('dtrti2', 'LN', n='q-p', A='A11'),
    )),
    BlockedAlgorithm('trinv3', 'dtrtri', Traversal.DIAG_SE, SQUARE, (
        rule('dtrsm', 'RLNN', m='n-q', n='q-p', alpha=-1, A='A11', B='A21'),
        rule('dgemm', 'NN', m='n-q', n='p', k='q-p', alpha=1, beta=1, A='A21', B='A10', C='A20'),
        rule('dtrsm', 'LLNN', m='q-p', n='p', alpha=1, A='A11', B='A10'),
        rule('dtrti2', 'LN', n='q-p', A='A11'),
    )),
    BlockedAlgorithm('trinv4', 'dtrtri', Traversal.DIAG_SE, SQUARE, (
        rule('dtrsm', 'LLNN', m='n-q', n='q-p', alpha=-1, A='A22', B='A21'),
        rule('dgemm', 'NN', m='n-q', n='p', k='q-p', alpha=-1, beta=1, A='A21', B='A10', C='A20'),
        rule('dtrmm', 'RLNN', m='q-p', n='p', alpha=1, A='A00', B='A10'),
        rule('dtrti2', 'LN', n='q-p', A='A11'),
    )),
    BlockedAlgorithm('trinv5', 'dtrtri', Traversal.DIAG_NW, SQUARE, (
        rule('dtrmm', 'LLNN', m='n-q', n='q-p', alpha=1, A='A22', B='A21'),
        rule('dtrsm', 'RLNN', m='n-q', n='q-p', alpha=-1, A='A11', B='A21'),
        rule('dtrti2', 'LN', n='q-p', A='A11'),
    )),
    BlockedAlgorithm('trinv6', 'dtrtri', Traversal.DIAG_NW, SQUARE, (
        rule('dtrsm', 'RLNN', m='q-p', n='p', alpha=1, A='A00', B='A10'),
        rule('dtrsm', 'LLNN', m='q-p', n='p', alpha=-1, A='A11', B='A10'),
        rule('dtrti2', 'LN', n='q-p', A='A11'),
    )),
    BlockedAlgorithm('trinv7', 'dtrtri', Traversal.DIAG_NW, SQUARE, (
        rule('dtrsm', 'LLNN', m='q-p', n='p', alpha=-1, A='A11', B='A10'),
        rule('dgemm', 'NN', m='n-q', n='p', k='q-p', alpha=1, beta=1, A='A21', B='A10', C='A20'),
        rule('dtrsm', 'RLNN', m='n-q', n='q-p', alpha=1, A='A11', B='A21'),
        rule('dtrti2', 'LN', n='q-p', A='A11'),
    )),
    BlockedAlgorithm('trinv8', 'dtrtri', Traversal.DIAG_NW, SQUARE, (
        rule('dtrsm', 'RLNN', m='q-p', n='p', alpha=-1, A='A00', B='A10'),
        rule('dgemm', 'NN', m='n-q', n='p', k='q-p', alpha=-1, beta=1, A='A21', B='A10', C='A20'),
        rule('dtrmm', 'LLNN', m='n-q', n='q-p', alpha=1, A='A22', B='A21'),
        rule('dtrti2', 'LN', n='q-p', A='A11'),
    )),
]

RECTANGULAR = {
    'A': OperandShape('m', 'n', 'k', 'k'),
    'tau': OperandShape('Min(m, n)', '1', 'k'),
    'ipiv': OperandShape('Min(m, n)', '1', 'k'),
}

_TRAILING = 'n-q'

LAPACK = [
    BlockedAlgorithm('dlauum', 'dlauum', Traversal.DIAG_SE, SQUARE, (
        rule('dtrmm', 'LLTN', m='q-p', n='p', alpha=1, A='A11', B='A10'),
        rule('dlauu2', 'L', n='q-p', A='A11'),
        rule('dgemm', 'TN', m='q-p', n='p', k='n-q', alpha=1, beta=1, A='A21', B='A20', C='A10'),
        rule('dsyrk', 'LT', n='q-p', k='n-q', alpha=1, beta=1, A='A21', C='A11'),
    ), description='product L^T L of a lower-triangular matrix'),
    BlockedAlgorithm('dsygst', 'dsygst', Traversal.DIAG_SE,
                     {'A': OperandShape('n', 'n', 'k', 'k'), 'L': OperandShape('n', 'n', 'k', 'k')}, (
        rule('dsygs2', '1L', n='q-p', A='A11', B='L11'),
        rule('dtrsm', 'RLTN', m='n-q', n='q-p', alpha=1, A='L11', B='A21'),
        rule('dsymm', 'RL', m='n-q', n='q-p', alpha=-0.5, beta=1, A='A11', B='L21', C='A21'),
        rule('dsyr2k', 'LN', n='n-q', k='q-p', alpha=-1, beta=1, A='A21', B='L21', C='A22'),
        rule('dsymm', 'RL', m='n-q', n='q-p', alpha=-0.5, beta=1, A='A11', B='L21', C='A21'),
        rule('dtrsm', 'LLNN', m='n-q', n='q-p', alpha=1, A='L22', B='A21'),
    ), description='reduction of a symmetric-definite generalized eigenproblem'),
    replace(TRIANGULAR_INVERSION[4], name='dtrtri', description='LAPACK triangular inversion'),
    replace(CHOLESKY[2], name='dpotrf', description='LAPACK Cholesky decomposition'),
    BlockedAlgorithm('dgetrf', 'dgetrf', Traversal.DIAG_SE,
                     {'A': RECTANGULAR['A'], 'ipiv': RECTANGULAR['ipiv']}, (
        rule('dgetf2', m='m-p', n='q-p', A='A[12]1', ipiv='ipiv1'),
        # pivots stay panel-relative: swap within rows p: of the side panels
        rule('dlaswp', n='p', A='A[12]0', k1='1', k2='q-p', ipiv='ipiv1', incx='1'),
        rule('dlaswp', n='n-q', A='A[12]2', k1='1', k2='q-p', ipiv='ipiv1', incx='1'),
        rule('dtrsm', 'LLNU', m='q-p', n='n-q', alpha=1, A='A11', B='A12'),
        rule('dgemm', 'NN', m='m-q', n='n-q', k='q-p', alpha=-1, beta=1, A='A21', B='A12', C='A22'),
    ), square=False, description='LU decomposition with partial pivoting'),
    BlockedAlgorithm('dgeqrf', 'dgeqrf', Traversal.DIAG_SE,
                     {'A': RECTANGULAR['A'], 'tau': RECTANGULAR['tau'], 'W': OperandShape('n', 'b')}, (
        rule('dgeqr2', m='m-p', n='q-p', A='A[12]1', tau='tau1'),
        rule('dlarft', 'FC', n='m-p', k='q-p', V='A[12]1', tau='tau1', T='W1', when=_TRAILING),
        # block reflector application, unrolled into its kernels
        rule('dcopy', n='n-q', x=At('A12', row='j'), incx='ld_A', y=At('W2', col='j'), incy='1',
             repeat='q-p', when=_TRAILING),
        rule('dtrmm', 'RLNU', m='n-q', n='q-p', alpha=1, A='A11', B='W2', when=_TRAILING),
        rule('dgemm', 'TN', m='n-q', n='q-p', k='m-q', alpha=1, beta=1, A='A22', B='A21', C='W2',
             when=_TRAILING),
        rule('dtrmm', 'RUNN', m='n-q', n='q-p', alpha=1, A='W1', B='W2', when=_TRAILING),
        rule('dgemm', 'NT', m='m-q', n='n-q', k='q-p', alpha=-1, beta=1, A='A21', B='W2', C='A22',
             when=_TRAILING),
        rule('dtrmm', 'RLTU', m='n-q', n='q-p', alpha=1, A='A11', B='W2', when=_TRAILING),
        # A12 -= W2^T
        rule('daxpy', n='(q-p)*(n-q)', alpha=-1, x='W2', incx='1', y='A12', incy='1',
             when=_TRAILING, pseudo=True,
             inline=rule('daxpy', n='n-q', alpha=-1, x=At('W2', col='j'), incx='1',
                         y=At('A12', row='j'), incy='ld_A', repeat='q-p')),
    ), regions={
        'W1': RegionSpec('W', '0', 'q-p', '0', 'q-p'),
        'W2': RegionSpec('W', 'q-p', 'n-q', '0', 'q-p'),
    }, square=False, description='QR decomposition'),
]

_VERTICAL = {
    'A': OperandShape('m', 'm', 'm', 'm'),
    'B': OperandShape('n', 'n'),
    'C': OperandShape('m', 'n', 'm', None),
}
_HORIZONTAL = {
    'A': OperandShape('m', 'm'),
    'B': OperandShape('n', 'n', 'n', 'n'),
    'C': OperandShape('m', 'n', None, 'n'),
}
_DIAGONAL = {
    'A': OperandShape('m', 'm', 'm', 'm'),
    'B': OperandShape('n', 'n', 'n', 'n'),
    'C': OperandShape('m', 'n', 'm', 'n'),
}

# Sylvester equation A X + X B = C, A and B upper triangular, X overwrites C
SYLVESTER_1D = {
    'm1': BlockedAlgorithm('m1', 'dtrsyl', Traversal.VERTICAL, _VERTICAL, (
        rule('dgemm', 'NN', m='q-p', n='n', k='m-q', alpha=-1, beta=1, A='A12', B='C2', C='C1'),
        solve('horizontal', A='A11', B='B', C='C1'),
    ), square=False),
    'm2': BlockedAlgorithm('m2', 'dtrsyl', Traversal.VERTICAL, _VERTICAL, (
        solve('horizontal', A='A11', B='B', C='C1'),
        rule('dgemm', 'NN', m='p', n='n', k='q-p', alpha=-1, beta=1, A='A01', B='C1', C='C0'),
    ), square=False),
    'n1': BlockedAlgorithm('n1', 'dtrsyl', Traversal.HORIZONTAL, _HORIZONTAL, (
        rule('dgemm', 'NN', m='m', n='q-p', k='p', alpha=-1, beta=1, A='C0', B='B01', C='C1'),
        solve('vertical', A='A', B='B11', C='C1'),
    ), square=False),
    'n2': BlockedAlgorithm('n2', 'dtrsyl', Traversal.HORIZONTAL, _HORIZONTAL, (
        solve('vertical', A='A', B='B11', C='C1'),
        rule('dgemm', 'NN', m='m', n='n-q', k='q-p', alpha=-1, beta=1, A='C1', B='B12', C='C2'),
    ), square=False),
}

_SYLV_DIAGONAL_1 = BlockedAlgorithm('sylv1', 'dtrsyl', Traversal.DIAG_NE, _DIAGONAL, (
    rule('dgemm', 'NN', m='qm-pm', n='pn', k='m-qm', alpha=-1, beta=1, A='A12', B='C20', C='C10'),
    solve('horizontal', A='A11', B='B00', C='C10'),
    rule('dgemm', 'NN', m='m-qm', n='qn-pn', k='pn', alpha=-1, beta=1, A='C20', B='B01', C='C21'),
    solve('vertical', A='A22', B='B11', C='C21'),
    rule('dgemm', 'NN', m='qm-pm', n='qn-pn', k='pn', alpha=-1, beta=1, A='C10', B='B01', C='C11'),
    rule('dgemm', 'NN', m='qm-pm', n='qn-pn', k='m-qm', alpha=-1, beta=1, A='A12', B='C21', C='C11'),
    rule('dtrsyl', 'NN1', m='qm-pm', n='qn-pn', A='A11', B='B11', C='C11'),
), square=False)

_SYLV_DIAGONAL_10 = BlockedAlgorithm('sylv10', 'dtrsyl', Traversal.DIAG_NE, _DIAGONAL, (
    solve('vertical', A='A22', B='B11', C='C21'),
    rule('dgemm', 'NN', m='qm-pm', n='qn-pn', k='m-qm', alpha=-1, beta=1, A='A12', B='C21', C='C11'),
    rule('dtrsyl', 'NN1', m='qm-pm', n='qn-pn', A='A11', B='B11', C='C11'),
    rule('dgemm', 'NN', m='pm', n='qn-pn', k='m-qm', alpha=-1, beta=1, A='A02', B='C21', C='C01'),
    rule('dgemm', 'NN', m='pm', n='qn-pn', k='qm-pm', alpha=-1, beta=1, A='A01', B='C11', C='C01'),
    solve('vertical', A='A00', B='B11', C='C01'),
    rule('dgemm', 'NN', m='pm', n='n-qn', k='qn-pn', alpha=-1, beta=1, A='C01', B='B12', C='C02'),
    rule('dgemm', 'NN', m='qm-pm', n='n-qn', k='qn-pn', alpha=-1, beta=1, A='C11', B='B12', C='C12'),
    rule('dgemm', 'NN', m='m-qm', n='n-qn', k='qn-pn', alpha=-1, beta=1, A='C21', B='B12', C='C22'),
), square=False)


def _sylvester_algorithms():
    algorithms = []
    for outer, kind, inners in (('m1', 'horizontal', ('n1', 'n2')),
                                ('m2', 'horizontal', ('n1', 'n2')),
                                ('n1', 'vertical', ('m1', 'm2')),
                                ('n2', 'vertical', ('m1', 'm2'))):
        for inner in inners:
            algorithms.append(replace(
                SYLVESTER_1D[outer], name=f"sylv_{outer}{inner}",
                solvers={kind: SYLVESTER_1D[inner]},
                description=f"Sylvester equation, {outer} with {inner} sub-problems",
            ))
    for horizontal in ('n1', 'n2'):
        for vertical in ('m1', 'm2'):
            algorithms.append(replace(
                _SYLV_DIAGONAL_1, name=f"sylv1_{horizontal}{vertical}",
                solvers={'horizontal': SYLVESTER_1D[horizontal], 'vertical': SYLVESTER_1D[vertical]},
                description=f"Sylvester equation, 3x3 algorithm 1 with {horizontal}/{vertical}",
            ))
    for vertical in ('m1', 'm2'):
        algorithms.append(replace(
            _SYLV_DIAGONAL_10, name=f"sylv10_{vertical}", solvers={'vertical': SYLVESTER_1D[vertical]},
            description=f"Sylvester equation, 3x3 algorithm 10 with {vertical}",
        ))
    return algorithms


SYLVESTER = _sylvester_algorithms()

FAMILIES = {
    'chol': [algorithm.name for algorithm in CHOLESKY],
    'trinv': [algorithm.name for algorithm in TRIANGULAR_INVERSION],
    'lapack': [algorithm.name for algorithm in LAPACK],
    'sylv': [algorithm.name for algorithm in SYLVESTER],
}

ALGORITHMS: Dict[str, BlockedAlgorithm] = {
    algorithm.name: algorithm for algorithm in CHOLESKY + TRIANGULAR_INVERSION + LAPACK + SYLVESTER
}


def get_algorithm(name) -> BlockedAlgorithm:
    """Look up a blocked algorithm by name"""
    if isinstance(name, BlockedAlgorithm):
        return name
    try:
        return ALGORITHMS[name]
    except KeyError:
        raise UnknownAlgorithmError(f"Unknown algorithm: {name}")


def resolve_algorithms(names):
    """Algorithm names with family names ('chol', 'trinv', ...) expanded"""
    resolved = []
    for name in names:
        for member in FAMILIES.get(name, [name]):
            resolved.append(get_algorithm(member))
    return resolved
