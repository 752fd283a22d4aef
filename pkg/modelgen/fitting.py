"""
Polynomial fitting: monomial bases, relative least squares and fit errors.
"""

import itertools
import math

import numpy as np

from common.errors import ToolkitError
from common.utils import ceil_div
from kernels.signatures import get_kernel

from .config import ErrorMeasure


class RankDeficientFitError(ToolkitError):
    """Raised when the sample points do not determine every basis coefficient"""
    pass


def monomials(degrees):
    """
    All exponent tuples with exponent i at most degrees[i]

    Ordered by total degree, then lexicographically descending, so that
    (2, 1) yields 1, x1, x2, x1^2, x1*x2, x1^2*x2.
    """
    exponents = itertools.product(*(range(degree + 1) for degree in degrees))
    return sorted(exponents, key=lambda e: (sum(e), tuple(-x for x in e)))


def basis_degrees(kernel, case=None, overfitting=0):
    """Per-size degree bound: the kernel's asymptotic degree plus overfitting"""
    descriptor = get_kernel(kernel)
    flags = dict(case.flags) if case is not None else None
    degrees = descriptor.degrees(flags)
    return tuple(degrees[name] + overfitting for name in descriptor.size_names)


def monomial_basis(kernel, case=None, overfitting=0):
    """
    Monomial basis of a kernel's models

    Args:
        kernel: Kernel name or descriptor (at least one size argument)
        case: Case whose flags select the cost formula variant
        overfitting: Degree added to every dimension

    Returns:
        list: Exponent tuples, one entry per size argument
    """
    return monomials(basis_degrees(kernel, case, overfitting))


def format_monomial(exponents, names):
    factors = [name if e == 1 else f"{name}^{e}" for name, e in zip(names, exponents) if e]
    return '*'.join(factors) or '1'


def design_matrix(points, basis):
    points = np.asarray(points, dtype=np.float64).reshape(len(points), -1)
    exponents = np.asarray(basis, dtype=np.float64).reshape(len(basis), -1)
    return np.prod(points[:, None, :] ** exponents[None, :, :], axis=2)


def _solve(matrix, rhs, basis):
    if matrix.shape[0] < len(basis):
        raise RankDeficientFitError(
            f"{matrix.shape[0]} sample points cannot determine {len(basis)} coefficients"
        )
    # equilibrate columns so rank detection is not fooled by monomial scales
    norms = np.linalg.norm(matrix, axis=0)
    norms[norms == 0] = 1.0
    solution, _, rank, _ = np.linalg.lstsq(matrix / norms, rhs, rcond=None)
    if rank < len(basis):
        raise RankDeficientFitError(
            f"Design matrix has rank {rank} for a basis of {len(basis)} monomials"
        )
    return solution / norms


def fit_relative_lsq(points, values, basis):
    """
    Coefficients minimizing the summed squared relative error

    Solves min sum_i (1 - p(x_i)/y_i)^2 as a least-squares problem on the
    design matrix with rows scaled by 1/y_i and an all-ones right-hand side.

    Args:
        points: Sample points (tuples of sizes)
        values: Positive measured values, one per point
        basis: Monomial exponent tuples

    Returns:
        numpy.ndarray: One coefficient per monomial

    Raises:
        RankDeficientFitError: Points do not determine the coefficients
    """
    values = np.asarray(values, dtype=np.float64)
    if np.any(values <= 0):
        raise ValueError("Relative fitting needs positive values")
    matrix = design_matrix(points, basis) / values[:, None]
    return _solve(matrix, np.ones(len(values)), basis)


def fit_lsq(points, values, basis):
    """Ordinary least squares, for statistics that may be zero (e.g. std)"""
    values = np.asarray(values, dtype=np.float64)
    return _solve(design_matrix(points, basis), values, basis)


def evaluate_polynomial(basis, coefficients, point):
    return math.fsum(
        float(c) * math.prod(float(x) ** e for x, e in zip(point, exponents))
        for exponents, c in zip(basis, coefficients)
    )


def relative_errors(points, values, coefficients, basis):
    values = np.asarray(values, dtype=np.float64)
    estimates = design_matrix(points, basis) @ np.asarray(coefficients, dtype=np.float64)
    return np.abs(values - estimates) / values


def reduce_errors(errors, measure=ErrorMeasure.MAXIMUM):
    """Average, maximum or 90th percentile (sorted value at ceil(0.9 N) - 1)"""
    errors = np.sort(np.asarray(errors, dtype=np.float64))
    if errors.size == 0:
        return 0.0
    measure = ErrorMeasure(measure)
    if measure is ErrorMeasure.AVERAGE:
        return float(np.mean(errors))
    if measure is ErrorMeasure.MAXIMUM:
        return float(errors[-1])
    return float(errors[ceil_div(9 * errors.size, 10) - 1])


def leaf_error(points, values, coefficients, basis, measure=ErrorMeasure.MAXIMUM):
    """Fit error of one leaf on its reference statistic"""
    return reduce_errors(relative_errors(points, values, coefficients, basis), measure)
