"""
Reference kernel implementations.

numpy versions of every registered kernel operating on strided views into
flat column-major buffers. They define semantics for tests and for the
reference measurement backend; speed is not a goal.
"""

import logging

import numpy as np
from numpy.lib.stride_tricks import as_strided

from common.errors import ToolkitError

from .calls import BindingError, validate_call

logger = logging.getLogger(__name__)


class SingularMatrixError(ToolkitError):
    """Raised when a solve or factorization meets a singular (or indefinite) matrix"""
    pass


def _buffer(call, store, name):
    operand = call.values[name]
    buffer = store[operand.buffer]
    if call.extent(name) > buffer.size:
        raise BindingError(
            f"{call}: {name} spans {call.extent(name)} elements, "
            f"buffer {operand.buffer} has {buffer.size}"
        )
    return buffer, operand.offset


def matrix_view(call, store, name, rows=None):
    """Writable (rows x cols) view of a matrix argument"""
    default_rows, cols = call.dims(name)
    rows = default_rows if rows is None else rows
    buffer, offset = _buffer(call, store, name)
    ld = call.ld(name)
    if rows and cols and offset + (cols - 1) * ld + rows > buffer.size:
        raise BindingError(f"{call}: {name} exceeds buffer {call.values[name].buffer}")
    itemsize = buffer.itemsize
    return as_strided(buffer[offset:], shape=(rows, cols), strides=(itemsize, ld * itemsize))


def vector_view(call, store, name):
    """Writable view of a vector argument; negative increments run backwards"""
    length, _ = call.dims(name)
    buffer, offset = _buffer(call, store, name)
    inc = call.inc(name)
    view = buffer[offset:offset + (length - 1) * abs(inc) + 1:abs(inc)]
    return view[::-1] if inc < 0 else view


def _op(a, trans):
    return a if trans == 'N' else a.T


def _triangle(a, uplo, diag='N'):
    t = np.tril(a) if uplo == 'L' else np.triu(a)
    if diag == 'U':
        np.fill_diagonal(t, 1.0)
    return t


def _require_nonsingular(call, t, diag='N'):
    if diag == 'N' and np.any(np.diag(t) == 0):
        raise SingularMatrixError(f"{call}: zero on the diagonal of a triangular matrix")


def _symmetric(a, uplo):
    t = np.tril(a) if uplo == 'L' else np.triu(a)
    return t + t.T - np.diag(np.diag(a))


def _store_triangle(target, values, uplo, strict=False):
    ones = np.ones(target.shape, dtype=bool)
    if uplo == 'L':
        mask = np.tril(ones, -1 if strict else 0)
    else:
        mask = np.triu(ones, 1 if strict else 0)
    target[mask] = values[mask]


def _update(target, beta, product):
    if beta == 0:
        target[...] = product
    else:
        target[...] = beta * target + product


def _dcopy(call, store):
    vector_view(call, store, 'y')[:] = vector_view(call, store, 'x')


def _dswap(call, store):
    x = vector_view(call, store, 'x')
    y = vector_view(call, store, 'y')
    saved = x.copy()
    x[:] = y
    y[:] = saved


def _daxpy(call, store):
    vector_view(call, store, 'y')[:] += call.values['alpha'] * vector_view(call, store, 'x')


def _ddot(call, store):
    return float(np.dot(vector_view(call, store, 'x'), vector_view(call, store, 'y')))


def _dgemv(call, store):
    v = call.values
    a = _op(matrix_view(call, store, 'A'), v['trans'])
    _update(vector_view(call, store, 'y'), v['beta'], v['alpha'] * (a @ vector_view(call, store, 'x')))


def _dger(call, store):
    x = vector_view(call, store, 'x')
    y = vector_view(call, store, 'y')
    matrix_view(call, store, 'A')[...] += call.values['alpha'] * np.outer(x, y)


def _dtrsv(call, store):
    v = call.values
    t = _triangle(matrix_view(call, store, 'A'), v['uplo'], v['diag'])
    _require_nonsingular(call, t, v['diag'])
    x = vector_view(call, store, 'x')
    x[:] = np.linalg.solve(_op(t, v['trans']), x)


def _dgemm(call, store):
    v = call.values
    a = _op(matrix_view(call, store, 'A'), v['transA'])
    b = _op(matrix_view(call, store, 'B'), v['transB'])
    _update(matrix_view(call, store, 'C'), v['beta'], v['alpha'] * (a @ b))


def _dsymm(call, store):
    v = call.values
    s = _symmetric(matrix_view(call, store, 'A'), v['uplo'])
    b = matrix_view(call, store, 'B')
    product = s @ b if v['side'] == 'L' else b @ s
    _update(matrix_view(call, store, 'C'), v['beta'], v['alpha'] * product)


def _dtrmm(call, store):
    v = call.values
    t = _op(_triangle(matrix_view(call, store, 'A'), v['uplo'], v['diag']), v['transA'])
    b = matrix_view(call, store, 'B')
    b[...] = v['alpha'] * (t @ b if v['side'] == 'L' else b @ t)


def _dtrsm(call, store):
    v = call.values
    t = _triangle(matrix_view(call, store, 'A'), v['uplo'], v['diag'])
    _require_nonsingular(call, t, v['diag'])
    t = _op(t, v['transA'])
    b = matrix_view(call, store, 'B')
    if v['side'] == 'L':
        b[...] = np.linalg.solve(t, v['alpha'] * b)
    else:
        b[...] = np.linalg.solve(t.T, v['alpha'] * b.T).T


def _dsyrk(call, store):
    v = call.values
    a = matrix_view(call, store, 'A')
    a = a if v['trans'] == 'N' else a.T
    c = matrix_view(call, store, 'C')
    product = v['alpha'] * (a @ a.T)
    result = product if v['beta'] == 0 else v['beta'] * c + product
    _store_triangle(c, result, v['uplo'])


def _dsyr2k(call, store):
    v = call.values
    a = matrix_view(call, store, 'A')
    b = matrix_view(call, store, 'B')
    if v['trans'] != 'N':
        a, b = a.T, b.T
    c = matrix_view(call, store, 'C')
    product = v['alpha'] * (a @ b.T + b @ a.T)
    result = product if v['beta'] == 0 else v['beta'] * c + product
    _store_triangle(c, result, v['uplo'])


def _dlauu2(call, store):
    uplo = call.values['uplo']
    a = matrix_view(call, store, 'A')
    t = _triangle(a, uplo)
    _store_triangle(a, t.T @ t if uplo == 'L' else t @ t.T, uplo)


def _dsygs2(call, store):
    v = call.values
    uplo = v['uplo']
    a = matrix_view(call, store, 'A')
    s = _symmetric(a, uplo)
    factor = _triangle(matrix_view(call, store, 'B'), uplo)
    _require_nonsingular(call, factor)
    if v['itype'] == '1':
        # inv(L) A inv(L^T), or inv(U^T) A inv(U)
        left = factor if uplo == 'L' else factor.T
        result = np.linalg.solve(left, np.linalg.solve(left, s).T).T
    else:
        # L^T A L, or U A U^T
        right = factor if uplo == 'L' else factor.T
        result = right.T @ s @ right
    _store_triangle(a, result, uplo)


def _dtrti2(call, store):
    v = call.values
    a = matrix_view(call, store, 'A')
    t = _triangle(a, v['uplo'], v['diag'])
    _require_nonsingular(call, t, v['diag'])
    _store_triangle(a, np.linalg.inv(t), v['uplo'], strict=v['diag'] == 'U')


def _dpotf2(call, store):
    uplo = call.values['uplo']
    a = matrix_view(call, store, 'A')
    try:
        factor = np.linalg.cholesky(_symmetric(a, uplo))
    except np.linalg.LinAlgError:
        raise SingularMatrixError(f"{call}: matrix is not positive definite")
    _store_triangle(a, factor if uplo == 'L' else factor.T, uplo)


def _dgetf2(call, store):
    a = matrix_view(call, store, 'A')
    ipiv = vector_view(call, store, 'ipiv')
    m, n = a.shape
    for j in range(min(m, n)):
        pivot = j + int(np.argmax(np.abs(a[j:, j])))
        ipiv[j] = pivot + 1
        if pivot != j:
            a[[j, pivot], :] = a[[pivot, j], :]
        if a[j, j] != 0:
            a[j + 1:, j] /= a[j, j]
        else:
            logger.warning(f"{call}: exactly zero pivot in column {j + 1}")
        a[j + 1:, j + 1:] -= np.outer(a[j + 1:, j], a[j, j + 1:])


def _householder(x):
    """Reflector zeroing x[1:]; returns (beta, tau) and scales x[1:] in place"""
    alpha = x[0]
    norm = np.linalg.norm(x[1:])
    if norm == 0:
        return alpha, 0.0
    beta = -np.copysign(np.hypot(alpha, norm), alpha)
    tau = (beta - alpha) / beta
    x[1:] /= alpha - beta
    return beta, tau


def _dgeqr2(call, store):
    a = matrix_view(call, store, 'A')
    tau = vector_view(call, store, 'tau')
    m, n = a.shape
    for j in range(min(m, n)):
        beta, tau[j] = _householder(a[j:, j])
        a[j, j] = 1.0
        v = a[j:, j].copy()
        a[j:, j + 1:] -= tau[j] * np.outer(v, v @ a[j:, j + 1:])
        a[j, j] = beta


def _unit_lower(v):
    rows, cols = v.shape
    return np.tril(v, -1) + np.eye(rows, cols)


def _dlarft(call, store):
    v = _unit_lower(matrix_view(call, store, 'V'))
    tau = vector_view(call, store, 'tau')
    t = matrix_view(call, store, 'T')
    k = t.shape[0]
    for i in range(k):
        t[i, i] = tau[i]
        if i == 0:
            continue
        if tau[i] == 0:
            t[:i, i] = 0.0
        else:
            t[:i, i] = -tau[i] * (np.triu(t[:i, :i]) @ (v[:, :i].T @ v[:, i]))


def _dlarfb(call, store):
    v = call.values
    reflectors = _unit_lower(matrix_view(call, store, 'V'))
    t = np.triu(matrix_view(call, store, 'T'))
    if v['trans'] == 'T':
        t = t.T
    c = matrix_view(call, store, 'C')
    if v['side'] == 'L':
        c[...] = c - reflectors @ (t @ (reflectors.T @ c))
    else:
        c[...] = c - ((c @ reflectors) @ t) @ reflectors.T


def _dlaswp(call, store):
    v = call.values
    k1, k2 = v['k1'], v['k2']
    ipiv = vector_view(call, store, 'ipiv')
    pivots = [int(p) for p in ipiv[k1 - 1:k2]]
    rows = max([k2] + pivots)
    a = matrix_view(call, store, 'A', rows=rows)
    order = range(k1, k2 + 1) if v['incx'] > 0 else range(k2, k1 - 1, -1)
    for i in order:
        p = int(ipiv[i - 1])
        if p != i:
            a[[i - 1, p - 1], :] = a[[p - 1, i - 1], :]


def _dtrsyl(call, store):
    v = call.values
    a = _op(np.triu(matrix_view(call, store, 'A')), v['transA'])
    b = _op(np.triu(matrix_view(call, store, 'B')), v['transB'])
    sign = int(v['isgn'])
    c = matrix_view(call, store, 'C')
    m, n = c.shape
    x = np.zeros((m, n))
    identity = np.eye(m)
    # op(B) upper: columns left to right; lower: right to left
    columns = range(n) if v['transB'] == 'N' else range(n - 1, -1, -1)
    try:
        for j in columns:
            if v['transB'] == 'N':
                rhs = c[:, j] - sign * (x[:, :j] @ b[:j, j])
            else:
                rhs = c[:, j] - sign * (x[:, j + 1:] @ b[j + 1:, j])
            x[:, j] = np.linalg.solve(a + sign * b[j, j] * identity, rhs)
    except np.linalg.LinAlgError:
        raise SingularMatrixError(f"{call}: A and -isgn*B have a common eigenvalue")
    c[...] = x


IMPLEMENTATIONS = {
    'dcopy': _dcopy,
    'dswap': _dswap,
    'daxpy': _daxpy,
    'ddot': _ddot,
    'dgemv': _dgemv,
    'dger': _dger,
    'dtrsv': _dtrsv,
    'dgemm': _dgemm,
    'dsymm': _dsymm,
    'dtrmm': _dtrmm,
    'dtrsm': _dtrsm,
    'dsyrk': _dsyrk,
    'dsyr2k': _dsyr2k,
    'dlauu2': _dlauu2,
    'dsygs2': _dsygs2,
    'dtrti2': _dtrti2,
    'dpotf2': _dpotf2,
    'dgetf2': _dgetf2,
    'dgeqr2': _dgeqr2,
    'dlarft': _dlarft,
    'dlarfb': _dlarfb,
    'dlaswp': _dlaswp,
    'dtrsyl': _dtrsyl,
}


def execute(call, store):
    """
    Execute a call on a buffer store with the reference implementation

    Args:
        call: Call to execute
        store: BufferStore holding the bound buffers

    Returns:
        float for ddot, None otherwise

    Calls with any zero size argument perform no work.
    """
    validate_call(call)
    if any(value == 0 for value in call.sizes.values()):
        return 0.0 if call.kernel == 'ddot' else None
    for name in call.operands:
        _buffer(call, store, name)
    return IMPLEMENTATIONS[call.kernel](call, store)
