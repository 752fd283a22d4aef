"""
Kernel signatures: argument taxonomy plus symbolic cost formulas.

Every kernel the toolkit executes, measures, models or predicts is described
here exactly once. A descriptor lists the kernel's arguments in calling order
and carries three symbolic formulas over its size arguments:
- minimal flop count (cost)
- minimal data volume (each operand counted once)
- minimal data movement (inout operands counted twice)
"""

from dataclasses import dataclass
from enum import Enum
from typing import Callable, Dict, Optional, Tuple, Union

import numpy as np
import sympy

from common.errors import ToolkitError


class UnknownKernelError(ToolkitError):
    """Raised when a kernel name is not registered"""
    pass


class InvalidFlagError(ToolkitError):
    """Raised when a flag value is not allowed for a kernel"""
    pass


class Role(Enum):
    """How a kernel accesses a data argument"""
    INPUT = 'input'
    OUTPUT = 'output'
    INOUT = 'inout'


@dataclass(frozen=True)
class Flag:
    name: str
    values: Tuple[str, ...]


@dataclass(frozen=True)
class Size:
    name: str


@dataclass(frozen=True)
class Scalar:
    name: str


@dataclass(frozen=True)
class Data:
    """
    A matrix or vector operand.

    `shape` maps the call's flag and size values to (rows, cols); vectors
    report (length, 1) and are addressed through their increment argument
    (implicitly 1 when the kernel has none).
    """
    name: str
    role: Role
    shape: Callable[[dict], Tuple[int, int]]
    vector: bool = False

    def dims(self, values):
        rows, cols = self.shape(values)
        return int(rows), int(cols)


@dataclass(frozen=True)
class Ld:
    name: str
    of: str


@dataclass(frozen=True)
class Inc:
    name: str
    of: str


@dataclass(frozen=True)
class Info:
    name: str = 'info'


ArgKind = Union[Flag, Size, Scalar, Data, Ld, Inc, Info]


def _parse(text):
    return sympy.sympify(text)


def _polynomial_part(expr):
    # min(a, b) bounds a product like a+b does, degree-wise
    expr = expr.replace(sympy.Min, lambda *args: sympy.Add(*args))
    expr = expr.replace(sympy.Max, lambda *args: sympy.Add(*args))
    numerator, _ = sympy.fraction(sympy.together(expr))
    return sympy.expand(numerator)


class Formula:
    """
    Symbolic count over size arguments.

    Args:
        expression: Expression text, or a dict mapping a selector key to text
        by: Flag name whose value selects the variant, or a predicate over
            the call values returning the key

    Evaluation is exact integer arithmetic; fractional results (only
    possible for approximate closed forms) are rounded half up.
    """

    def __init__(self, expression, by=None):
        if isinstance(expression, dict):
            self.variants = {key: _parse(text) for key, text in expression.items()}
        else:
            self.variants = {None: _parse(expression)}
        self.by = by
        self._compiled = {}
        self._vectorized = {}

    def _key(self, values):
        if self.by is None:
            return None
        if callable(self.by):
            return self.by(values)
        return values[self.by]

    def expression(self, values):
        return self.variants[self._key(values)]

    def _compile(self, key):
        if key not in self._compiled:
            numerator, denominator = sympy.fraction(sympy.together(self.variants[key]))
            numerator = sympy.expand(numerator)
            symbols = sorted(numerator.free_symbols, key=lambda s: s.name)
            func = sympy.lambdify(symbols, numerator, modules='math')
            self._compiled[key] = (func, int(denominator), [s.name for s in symbols])
        return self._compiled[key]

    def evaluate(self, values):
        func, denominator, names = self._compile(self._key(values))
        numerator = int(func(*[int(values[name]) for name in names]))
        quotient, remainder = divmod(numerator, denominator)
        if remainder == 0:
            return quotient
        return (2 * numerator + denominator) // (2 * denominator)

    def evaluate_array(self, values, length):
        """
        Elementwise evaluate over integer arrays of sizes

        Args:
            values: Flag strings plus size values (ints or integer arrays)
            length: Number of elements to evaluate

        Returns:
            numpy.ndarray: int64 counts, rounded like evaluate()
        """
        arrays = {
            name: np.broadcast_to(np.asarray(value, dtype=np.int64), (length,))
            for name, value in values.items() if not isinstance(value, str)
        }
        if callable(self.by):
            flags = {name: value for name, value in values.items() if isinstance(value, str)}
            return np.array([
                self.evaluate({**flags, **{name: int(a[i]) for name, a in arrays.items()}})
                for i in range(length)
            ], dtype=np.int64)
        key = self._key(values)
        if key not in self._vectorized:
            numerator, denominator = sympy.fraction(sympy.together(self.variants[key]))
            numerator = sympy.expand(numerator)
            symbols = sorted(numerator.free_symbols, key=lambda s: s.name)
            func = sympy.lambdify(symbols, numerator, modules='numpy')
            self._vectorized[key] = (func, int(denominator), [s.name for s in symbols])
        func, denominator, names = self._vectorized[key]
        numerator = np.broadcast_to(
            np.asarray(func(*[arrays[name] for name in names]), dtype=np.int64), (length,)
        )
        quotient, remainder = np.divmod(numerator, denominator)
        return np.where(remainder == 0, quotient, (2 * numerator + denominator) // (2 * denominator))

    def candidates(self, flags=None):
        """Variants that may apply given (possibly partial) flag values"""
        if isinstance(self.by, str) and flags and self.by in flags:
            return [self.variants[flags[self.by]]]
        return list(self.variants.values())

    def degree(self, symbol, flags=None):
        """Polynomial degree in one size symbol (max over applicable variants)"""
        sym = sympy.Symbol(symbol)
        degrees = []
        for expr in self.candidates(flags):
            poly = _polynomial_part(expr)
            degrees.append(int(sympy.degree(poly, sym)) if sym in poly.free_symbols else 0)
        return max(degrees)


@dataclass(frozen=True, eq=False)
class KernelDescriptor:
    name: str
    args: Tuple[ArgKind, ...]
    flops: Formula
    volume: Formula
    movement: Formula
    description: str = ''

    def _of(self, kind):
        return tuple(arg for arg in self.args if isinstance(arg, kind))

    @property
    def flags(self) -> Tuple[Flag, ...]:
        return self._of(Flag)

    @property
    def sizes(self) -> Tuple[Size, ...]:
        return self._of(Size)

    @property
    def scalars(self) -> Tuple[Scalar, ...]:
        return self._of(Scalar)

    @property
    def data(self) -> Tuple[Data, ...]:
        return self._of(Data)

    @property
    def lds(self) -> Tuple[Ld, ...]:
        return self._of(Ld)

    @property
    def incs(self) -> Tuple[Inc, ...]:
        return self._of(Inc)

    @property
    def size_names(self) -> Tuple[str, ...]:
        return tuple(size.name for size in self.sizes)

    def arg(self, name) -> ArgKind:
        for arg in self.args:
            if arg.name == name:
                return arg
        raise KeyError(f"{self.name} has no argument {name}")

    def ld_for(self, data_name) -> Optional[Ld]:
        return next((ld for ld in self.lds if ld.of == data_name), None)

    def inc_for(self, data_name) -> Optional[Inc]:
        return next((inc for inc in self.incs if inc.of == data_name), None)

    def validate_flags(self, flags):
        for flag in self.flags:
            value = flags.get(flag.name)
            if value not in flag.values:
                raise InvalidFlagError(
                    f"{self.name}: {flag.name}={value!r} not in {', '.join(flag.values)}"
                )

    def degrees(self, flags=None) -> Dict[str, int]:
        """Per-size polynomial degree of the kernel's asymptotic complexity"""
        return {
            name: max(self.flops.degree(name, flags), self.movement.degree(name, flags))
            for name in self.size_names
        }

    def __str__(self):
        return self.name


# Shape helpers over the call values (flags and sizes)

def _fixed(rows, cols):
    return lambda v: (v[rows], v[cols])


def _square(size):
    return lambda v: (v[size], v[size])


def _vector(length):
    return lambda v: (v[length], 1)


def _op(flag, rows, cols):
    return lambda v: (v[rows], v[cols]) if v[flag] == 'N' else (v[cols], v[rows])


def _side_square(v):
    return (v['m'], v['m']) if v['side'] == 'L' else (v['n'], v['n'])


def _gemv_x(v):
    return (v['n'] if v['trans'] == 'N' else v['m'], 1)


def _gemv_y(v):
    return (v['m'] if v['trans'] == 'N' else v['n'], 1)


def _min_mn(v):
    return (min(v['m'], v['n']), 1)


def _larfb_v(v):
    return (v['m'] if v['side'] == 'L' else v['n'], v['k'])


def _vector_args(x_role, y_role):
    return (
        Data('x', x_role, _vector('n'), vector=True), Inc('incx', 'x'),
        Data('y', y_role, _vector('n'), vector=True), Inc('incy', 'y'),
    )


UPLO = Flag('uplo', ('L', 'U'))
DIAG = Flag('diag', ('N', 'U'))
SIDE = Flag('side', ('L', 'R'))

TRIANGULAR_3 = {
    'flops': Formula({'L': 'm**2*n', 'R': 'm*n**2'}, by='side'),
    'volume': Formula({'L': 'm*(m+1)/2 + m*n', 'R': 'n*(n+1)/2 + m*n'}, by='side'),
    'movement': Formula({'L': 'm*(m+1)/2 + 2*m*n', 'R': 'n*(n+1)/2 + 2*m*n'}, by='side'),
}


def _triangular_3(name, description):
    return KernelDescriptor(
        name,
        (SIDE, UPLO, Flag('transA', ('N', 'T')), DIAG, Size('m'), Size('n'), Scalar('alpha'),
         Data('A', Role.INPUT, _side_square), Ld('ldA', 'A'),
         Data('B', Role.INOUT, _fixed('m', 'n')), Ld('ldB', 'B')),
        flops=TRIANGULAR_3['flops'],
        volume=TRIANGULAR_3['volume'],
        movement=TRIANGULAR_3['movement'],
        description=description,
    )


def _triangle_factor(name, args, description):
    return KernelDescriptor(
        name, args,
        flops=Formula('n*(n+1)*(2*n+1)/6'),
        volume=Formula('n*(n+1)/2'),
        movement=Formula('n*(n+1)'),
        description=description,
    )


KERNEL_LIST = [
    KernelDescriptor(
        'dcopy', (Size('n'),) + _vector_args(Role.INPUT, Role.OUTPUT),
        flops=Formula('0'), volume=Formula('2*n'), movement=Formula('2*n'),
        description='vector copy y := x',
    ),
    KernelDescriptor(
        'dswap', (Size('n'),) + _vector_args(Role.INOUT, Role.INOUT),
        flops=Formula('0'), volume=Formula('2*n'), movement=Formula('4*n'),
        description='vector swap x <-> y',
    ),
    KernelDescriptor(
        'daxpy', (Size('n'), Scalar('alpha')) + _vector_args(Role.INPUT, Role.INOUT),
        flops=Formula('2*n'), volume=Formula('2*n'), movement=Formula('3*n'),
        description='scaled vector addition y := alpha x + y',
    ),
    KernelDescriptor(
        'ddot', (Size('n'),) + _vector_args(Role.INPUT, Role.INPUT),
        flops=Formula('2*n'), volume=Formula('2*n'), movement=Formula('2*n'),
        description='inner product alpha := x^T y',
    ),
    KernelDescriptor(
        'dgemv',
        (Flag('trans', ('N', 'T')), Size('m'), Size('n'), Scalar('alpha'),
         Data('A', Role.INPUT, _fixed('m', 'n')), Ld('ldA', 'A'),
         Data('x', Role.INPUT, _gemv_x, vector=True), Inc('incx', 'x'),
         Scalar('beta'),
         Data('y', Role.INOUT, _gemv_y, vector=True), Inc('incy', 'y')),
        flops=Formula('2*m*n'),
        volume=Formula({'N': 'm*n + m', 'T': 'm*n + n'}, by='trans'),
        movement=Formula({'N': 'm*n + 2*m', 'T': 'm*n + 2*n'}, by='trans'),
        description='matrix-vector product y := alpha op(A) x + beta y',
    ),
    KernelDescriptor(
        'dger',
        (Size('m'), Size('n'), Scalar('alpha'),
         Data('x', Role.INPUT, _vector('m'), vector=True), Inc('incx', 'x'),
         Data('y', Role.INPUT, _vector('n'), vector=True), Inc('incy', 'y'),
         Data('A', Role.INOUT, _fixed('m', 'n')), Ld('ldA', 'A')),
        flops=Formula('2*m*n'),
        volume=Formula('m*n + m + n'),
        movement=Formula('2*m*n + m + n'),
        description='rank-1 update A := alpha x y^T + A',
    ),
    KernelDescriptor(
        'dtrsv',
        (UPLO, Flag('trans', ('N', 'T')), DIAG, Size('n'),
         Data('A', Role.INPUT, _square('n')), Ld('ldA', 'A'),
         Data('x', Role.INOUT, _vector('n'), vector=True), Inc('incx', 'x')),
        flops=Formula('n**2'),
        volume=Formula('n*(n+1)/2 + n'),
        movement=Formula('n*(n+1)/2 + 2*n'),
        description='triangular solve x := op(A)^-1 x',
    ),
    KernelDescriptor(
        'dgemm',
        (Flag('transA', ('N', 'T')), Flag('transB', ('N', 'T')),
         Size('m'), Size('n'), Size('k'), Scalar('alpha'),
         Data('A', Role.INPUT, _op('transA', 'm', 'k')), Ld('ldA', 'A'),
         Data('B', Role.INPUT, _op('transB', 'k', 'n')), Ld('ldB', 'B'),
         Scalar('beta'),
         Data('C', Role.INOUT, _fixed('m', 'n')), Ld('ldC', 'C')),
        flops=Formula('2*m*n*k'),
        volume=Formula('m*k + k*n + m*n'),
        movement=Formula('m*k + k*n + 2*m*n'),
        description='matrix-matrix product C := alpha op(A) op(B) + beta C',
    ),
    KernelDescriptor(
        'dsymm',
        (SIDE, UPLO, Size('m'), Size('n'), Scalar('alpha'),
         Data('A', Role.INPUT, _side_square), Ld('ldA', 'A'),
         Data('B', Role.INPUT, _fixed('m', 'n')), Ld('ldB', 'B'),
         Scalar('beta'),
         Data('C', Role.INOUT, _fixed('m', 'n')), Ld('ldC', 'C')),
        flops=Formula({'L': '2*m**2*n', 'R': '2*m*n**2'}, by='side'),
        volume=Formula({'L': 'm*(m+1)/2 + 2*m*n', 'R': 'n*(n+1)/2 + 2*m*n'}, by='side'),
        movement=Formula({'L': 'm*(m+1)/2 + 3*m*n', 'R': 'n*(n+1)/2 + 3*m*n'}, by='side'),
        description='symmetric matrix-matrix product',
    ),
    _triangular_3('dtrmm', 'triangular matrix-matrix product B := alpha op(A) B'),
    KernelDescriptor(
        'dsyrk',
        (UPLO, Flag('trans', ('N', 'T')), Size('n'), Size('k'), Scalar('alpha'),
         Data('A', Role.INPUT, _op('trans', 'n', 'k')), Ld('ldA', 'A'),
         Scalar('beta'),
         Data('C', Role.INOUT, _square('n')), Ld('ldC', 'C')),
        flops=Formula('n*(n+1)*k'),
        volume=Formula('n*(n+1)/2 + n*k'),
        movement=Formula('n*(n+1) + n*k'),
        description='symmetric rank-k update C := alpha A A^T + beta C',
    ),
    KernelDescriptor(
        'dsyr2k',
        (UPLO, Flag('trans', ('N', 'T')), Size('n'), Size('k'), Scalar('alpha'),
         Data('A', Role.INPUT, _op('trans', 'n', 'k')), Ld('ldA', 'A'),
         Data('B', Role.INPUT, _op('trans', 'n', 'k')), Ld('ldB', 'B'),
         Scalar('beta'),
         Data('C', Role.INOUT, _square('n')), Ld('ldC', 'C')),
        flops=Formula('2*n*(n+1)*k'),
        volume=Formula('n*(n+1)/2 + 2*n*k'),
        movement=Formula('n*(n+1) + 2*n*k'),
        description='symmetric rank-2k update',
    ),
    _triangular_3('dtrsm', 'triangular solve with multiple right-hand sides'),
    _triangle_factor(
        'dlauu2',
        (UPLO, Size('n'), Data('A', Role.INOUT, _square('n')), Ld('ldA', 'A'), Info()),
        'unblocked triangular product L^T L',
    ),
    KernelDescriptor(
        'dsygs2',
        (Flag('itype', ('1', '2', '3')), UPLO, Size('n'),
         Data('A', Role.INOUT, _square('n')), Ld('ldA', 'A'),
         Data('B', Role.INPUT, _square('n')), Ld('ldB', 'B'), Info()),
        flops=Formula('n*(n+1)**2'),
        volume=Formula('n*(n+1)'),
        movement=Formula('3*n*(n+1)/2'),
        description='unblocked reduction of a symmetric-definite generalized eigenproblem',
    ),
    KernelDescriptor(
        'dtrti2',
        (UPLO, DIAG, Size('n'), Data('A', Role.INOUT, _square('n')), Ld('ldA', 'A'), Info()),
        flops=Formula('n*(n**2 + 2)/3'),
        volume=Formula('n*(n+1)/2'),
        movement=Formula('n*(n+1)'),
        description='unblocked triangular inversion',
    ),
    _triangle_factor(
        'dpotf2',
        (UPLO, Size('n'), Data('A', Role.INOUT, _square('n')), Ld('ldA', 'A'), Info()),
        'unblocked Cholesky decomposition',
    ),
    KernelDescriptor(
        'dgetf2',
        (Size('m'), Size('n'), Data('A', Role.INOUT, _fixed('m', 'n')), Ld('ldA', 'A'),
         Data('ipiv', Role.OUTPUT, _min_mn, vector=True), Info()),
        flops=Formula('2*m*n*Min(m, n)/3'),
        volume=Formula('m*n'),
        movement=Formula('2*m*n'),
        description='unblocked LU decomposition with partial pivoting',
    ),
    KernelDescriptor(
        'dgeqr2',
        (Size('m'), Size('n'), Data('A', Role.INOUT, _fixed('m', 'n')), Ld('ldA', 'A'),
         Data('tau', Role.OUTPUT, _min_mn, vector=True), Info()),
        flops=Formula(
            {'tall': '2*n**2*(m - n/3)', 'wide': '2*m**2*(n - m/3)'},
            by=lambda v: 'tall' if v['m'] >= v['n'] else 'wide',
        ),
        volume=Formula('m*n + Min(m, n)'),
        movement=Formula('2*m*n + Min(m, n)'),
        description='unblocked QR decomposition',
    ),
    KernelDescriptor(
        'dlarft',
        (Flag('direct', ('F',)), Flag('storev', ('C',)), Size('n'), Size('k'),
         Data('V', Role.INPUT, _fixed('n', 'k')), Ld('ldV', 'V'),
         Data('tau', Role.INPUT, _vector('k'), vector=True),
         Data('T', Role.OUTPUT, _square('k')), Ld('ldT', 'T')),
        flops=Formula('n*k*(k-1) - (k-1)*k*(2*k-1)/6'),
        volume=Formula('n*k + 2*k'),
        movement=Formula('n*k + 2*k'),
        description='triangular factor of a block reflector',
    ),
    KernelDescriptor(
        'dlarfb',
        (SIDE, Flag('trans', ('N', 'T')), Flag('direct', ('F',)), Flag('storev', ('C',)),
         Size('m'), Size('n'), Size('k'),
         Data('V', Role.INPUT, _larfb_v), Ld('ldV', 'V'),
         Data('T', Role.INPUT, _square('k')), Ld('ldT', 'T'),
         Data('C', Role.INOUT, _fixed('m', 'n')), Ld('ldC', 'C')),
        flops=Formula({'L': '4*m*n*k - n*k**2 + n*k', 'R': '4*m*n*k - m*k**2 + m*k'}, by='side'),
        volume=Formula({'L': 'm*k + k + m*n', 'R': 'n*k + k + m*n'}, by='side'),
        movement=Formula({'L': 'm*k + k + 2*m*n', 'R': 'n*k + k + 2*m*n'}, by='side'),
        description='application of a block reflector',
    ),
    KernelDescriptor(
        'dlaswp',
        (Size('n'), Data('A', Role.INOUT, _fixed('k2', 'n')), Ld('ldA', 'A'),
         Size('k1'), Size('k2'),
         Data('ipiv', Role.INPUT, _vector('k2'), vector=True), Inc('incx', 'ipiv')),
        flops=Formula('0'), volume=Formula('0'), movement=Formula('0'),
        description='row interchanges',
    ),
    KernelDescriptor(
        'dtrsyl',
        (Flag('transA', ('N', 'T')), Flag('transB', ('N', 'T')), Flag('isgn', ('1', '-1')),
         Size('m'), Size('n'),
         Data('A', Role.INPUT, _square('m')), Ld('ldA', 'A'),
         Data('B', Role.INPUT, _square('n')), Ld('ldB', 'B'),
         Data('C', Role.INOUT, _fixed('m', 'n')), Ld('ldC', 'C'), Info()),
        flops=Formula('m*n*(m + n + 4)'),
        volume=Formula('m*(m+1)/2 + n*(n+1)/2 + m*n'),
        movement=Formula('m*(m+1)/2 + n*(n+1)/2 + 2*m*n'),
        description='unblocked triangular Sylvester equation solver',
    ),
]

KERNELS: Dict[str, KernelDescriptor] = {kernel.name: kernel for kernel in KERNEL_LIST}


def get_kernel(name) -> KernelDescriptor:
    """Look up a kernel descriptor by name"""
    if isinstance(name, KernelDescriptor):
        return name
    try:
        return KERNELS[name]
    except KeyError:
        raise UnknownKernelError(f"Unknown kernel: {name}")
