"""
Common utility functions for dlaperf
Shared arithmetic and formatting helpers used across the apps
"""

import math

DOUBLE_BYTES = 8


def ceil_div(numerator, denominator):
    """
    Integer division rounding up

    Args:
        numerator: Nonnegative integer
        denominator: Positive integer

    Returns:
        int: Smallest integer not below numerator / denominator
    """
    return -(-numerator // denominator)


def round_to_multiple(value, multiple=8):
    """
    Round to the nearest multiple, halves rounding up

    Args:
        value: Number to round
        multiple: Positive integer step

    Returns:
        int: Nearest multiple of `multiple`
    """
    return int(math.floor(value / multiple + 0.5)) * multiple


def safe_divide(numerator, denominator, default=0.0):
    """
    Safely divide two numbers, returning default if denominator is zero

    Args:
        numerator: Number to divide
        denominator: Number to divide by
        default: Value to return if denominator is zero

    Returns:
        float: Result of division or default value
    """
    if denominator == 0:
        return default
    return numerator / denominator


def format_seconds(seconds):
    """Format a duration with an SI prefix, e.g. 16.22 ms"""
    if seconds == 0:
        return '0 s'
    for factor, unit in ((1.0, 's'), (1e-3, 'ms'), (1e-6, 'us'), (1e-9, 'ns')):
        if abs(seconds) >= factor:
            return f"{seconds / factor:.2f} {unit}"
    return f"{seconds / 1e-9:.2f} ns"


def format_rate(flops_per_second):
    """Format a floating-point rate, e.g. 10.54 GF/s"""
    for factor, unit in ((1e12, 'TF/s'), (1e9, 'GF/s'), (1e6, 'MF/s'), (1e3, 'KF/s')):
        if abs(flops_per_second) >= factor:
            return f"{flops_per_second / factor:.2f} {unit}"
    return f"{flops_per_second:.2f} F/s"


def format_percentage(fraction):
    """Format a fraction as a percentage with two decimals"""
    return f"{fraction * 100:.2f}%"
