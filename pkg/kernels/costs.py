"""
Cost accounting: flop counts, data volume and movement, and the
performance metrics derived from them.
"""

from common.errors import ToolkitError
from common.utils import DOUBLE_BYTES

from .calls import BindingError
from .signatures import Formula, get_kernel


class UndefinedIntensityError(ToolkitError):
    """Raised when arithmetic intensity is requested for zero data movement"""
    pass


def _values(kernel, sizes, flags):
    descriptor = get_kernel(kernel)
    if isinstance(flags, str):
        flags = dict(zip((flag.name for flag in descriptor.flags), split_flags(descriptor, flags)))
    flags = dict(flags or {})
    descriptor.validate_flags(flags)
    values = dict(flags)
    for name in descriptor.size_names:
        value = sizes[name]
        if value < 0:
            raise BindingError(f"{descriptor.name}: size {name}={value} is negative")
        values[name] = int(value)
    return descriptor, values


def split_flags(descriptor, text):
    """Split a compact flag string such as 'LLNN' or 'NN-1' into flag values"""
    parts = []
    rest = text
    for flag in descriptor.flags:
        for value in sorted(flag.values, key=len, reverse=True):
            if rest.startswith(value):
                parts.append(value)
                rest = rest[len(value):]
                break
        else:
            parts.append(rest[:1])
            rest = rest[1:]
    return parts


def flop_count(kernel, sizes, flags=None):
    """
    Minimal flop count (cost) of one kernel invocation

    Args:
        kernel: Kernel name or descriptor
        sizes: Dict of size argument values
        flags: Dict of flag values, or a compact string like 'LLNN'

    Returns:
        int: Flop count
    """
    descriptor, values = _values(kernel, sizes, flags)
    return descriptor.flops.evaluate(values)


def data_volume(kernel, sizes, flags=None):
    """Minimal data volume in elements (every operand counted once)"""
    descriptor, values = _values(kernel, sizes, flags)
    return descriptor.volume.evaluate(values)


def min_data_movement(kernel, sizes, flags=None):
    """Minimal data movement in elements (inout operands counted twice)"""
    descriptor, values = _values(kernel, sizes, flags)
    return descriptor.movement.evaluate(values)


def arithmetic_intensity(kernel, sizes, flags=None):
    """Flops per byte of minimal data movement"""
    movement = min_data_movement(kernel, sizes, flags)
    if movement == 0:
        raise UndefinedIntensityError(f"{get_kernel(kernel).name}: zero data movement")
    return flop_count(kernel, sizes, flags) / (DOUBLE_BYTES * movement)


def call_flops(call):
    """Flop count of a Call (pseudo-calls cost nothing)"""
    if call.is_pseudo:
        return 0
    return flop_count(call.kernel, call.sizes, call.flags)


def call_movement(call):
    if call.is_pseudo:
        return 0
    return min_data_movement(call.kernel, call.sizes, call.flags)


def performance(cost, runtime):
    """Flops per second"""
    return cost / runtime


def attained_bandwidth(movement, runtime):
    """Bytes per second, movement given in doubles"""
    return DOUBLE_BYTES * movement / runtime


def compute_efficiency(perf, machine, threads=1):
    return perf / machine.peak(threads)


def bandwidth_efficiency(bandwidth, machine):
    return bandwidth / machine.peak_bandwidth


def optimal_runtime(cost, machine, threads=1):
    """Runtime at peak performance"""
    return cost / machine.peak(threads)


# Closed-form costs of the blocked operations
BLOCKED_COSTS = {
    'dpotrf': Formula('n*(n+1)*(2*n+1)/6'),
    'dlauum': Formula('n*(n+1)*(2*n+1)/6'),
    'dtrtri': Formula('n*(n**2 + 2)/3'),
    'dsygst': Formula('n*(n+1)**2'),
    'dgetrf': Formula('2*m*n*Min(m, n)/3'),
    'dgeqrf': Formula(
        {'tall': '2*n**2*(m - n/3)', 'wide': '2*m**2*(n - m/3)'},
        by=lambda v: 'tall' if v['m'] >= v['n'] else 'wide',
    ),
    'dtrsyl': Formula('m*n*(m + n + 4)'),
}


def blocked_cost(operation, sizes):
    """
    Minimal cost of a blocked operation

    Args:
        operation: One of BLOCKED_COSTS
        sizes: Dict with n (and m for rectangular operations)

    Returns:
        int: Flop count
    """
    try:
        formula = BLOCKED_COSTS[operation]
    except KeyError:
        raise ToolkitError(f"No closed-form cost for {operation}")
    return formula.evaluate({name: int(value) for name, value in sizes.items()})
