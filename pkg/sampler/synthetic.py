"""
Runtime functions for the synthetic backend.
"""

from kernels.costs import call_flops, call_movement
from kernels.signatures import get_kernel


def flop_rate_runtime(rate, overhead=1e-7):
    """Every kernel runs at a fixed flop rate plus a constant call overhead"""
    def runtime(call):
        return overhead + call_flops(call) / rate
    return runtime


def roofline_runtime(peak, bandwidth, overhead=1e-7):
    """Runtime bounded by compute or by minimal data movement, whichever is slower"""
    def runtime(call):
        return overhead + max(call_flops(call) / peak, 8 * call_movement(call) / bandwidth)
    return runtime


def kernel_rate_runtime(rates, default_rate, overhead=1e-7):
    """Per-kernel flop rates, e.g. {'dgemm': 4e10}"""
    def runtime(call):
        rate = rates.get(get_kernel(call.kernel).name, default_rate)
        return overhead + call_flops(call) / rate
    return runtime
