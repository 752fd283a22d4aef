"""
Adaptive refinement: sample a domain, fit, and split until the model is
accurate enough or the sub-domains reach the minimum width.
"""

import itertools
import logging

from kernels.signatures import get_kernel
from sampler.stats import STATISTICS

from .config import ModelConfig, default_config
from .fitting import basis_degrees, fit_lsq, fit_relative_lsq, leaf_error, monomials
from .grids import (
    Domain, GridError, UnsplittableDomainError, distinct_steps, grid_nodes, split_domain,
)
from .piecewise import Leaf, PiecewiseModel
from .store import KernelModel

logger = logging.getLogger(__name__)


def _fit(points, values, basis):
    if all(value > 0 for value in values):
        return fit_relative_lsq(points, values, basis)
    return fit_lsq(points, values, basis)


def leaf_grid(domain, degrees, config):
    """
    Per-dimension nodes and degrees for one sub-domain

    Each dimension gets degree + 1 + oversampling nodes, and at least
    degree + 2 must stay distinct after rounding. A dimension of zero width
    is fitted with degree 0. With `config.reduce_degree` a narrow interval
    takes the nodes it has room for and lowers its degree instead of raising
    GridError.

    Raises:
        GridError: The interval cannot hold the grid its degree needs
    """
    axes = []
    leaf_degrees = []
    for (lower, upper), degree in zip(domain.bounds, degrees):
        if lower == upper:
            axes.append(grid_nodes(lower, upper, 1, config.grid))
            leaf_degrees.append(0)
            continue
        count = degree + 1 + config.oversampling
        if config.reduce_degree:
            count = min(count, distinct_steps(lower, upper))
        nodes = grid_nodes(lower, upper, count, config.grid)
        leaf_degree = degree
        if len(nodes) < degree + 2:
            if not config.reduce_degree:
                raise GridError(
                    f"Interval [{lower}, {upper}] holds {len(nodes)} distinct nodes, "
                    f"degree {degree} needs {degree + 2}; widen the minimum width or "
                    f"enable reduce_degree"
                )
            leaf_degree = max(0, len(nodes) - 2)
            logger.warning(
                f"Interval [{lower}, {upper}] holds {len(nodes)} nodes: degree lowered "
                f"from {degree} to {leaf_degree}"
            )
        axes.append(nodes)
        leaf_degrees.append(leaf_degree)
    return axes, leaf_degrees


class Refiner:
    """Recursive sample-fit-split procedure for one (kernel, case)"""

    def __init__(self, sampler, config, kernel, case):
        self.sampler = sampler
        self.config = config
        self.descriptor = get_kernel(kernel)
        self.case = case
        self.degrees = basis_degrees(self.descriptor, case, config.overfitting)
        self.reference = config.reference_statistic.statistic

    def sample(self, points):
        names = self.descriptor.size_names
        calls = [self.case.call(self.descriptor, dict(zip(names, point))) for point in points]
        return self.sampler.measure(calls, self.config.repetitions)

    def fit_leaf(self, domain):
        """Sample one sub-domain and fit its reference statistic"""
        axes, degrees = leaf_grid(domain, self.degrees, self.config)
        points = list(itertools.product(*axes))
        stats = self.sample(points)
        basis = monomials(degrees)
        reference = [s.get(self.reference) for s in stats]
        coefficients = {self.reference: _fit(points, reference, basis)}
        error = leaf_error(points, reference, coefficients[self.reference], basis,
                           self.config.error_measure)
        return points, stats, basis, coefficients, error

    def refine(self, domain, leaves):
        points, stats, basis, coefficients, error = self.fit_leaf(domain)
        logger.debug(f"{self.descriptor.name} {self.case.label} {domain}: error {error:.4%}")
        if error > self.config.error_bound:
            try:
                dimension, left, right = split_domain(domain, self.config.min_width)
            except UnsplittableDomainError:
                logger.debug(f"{domain} reached the minimum width with error {error:.4%}")
            else:
                logger.debug(
                    f"Split {domain} in {self.descriptor.size_names[dimension]} at "
                    f"{left.upper[dimension]}"
                )
                self.refine(left, leaves)
                self.refine(right, leaves)
                return
        for statistic in STATISTICS:
            if statistic not in coefficients:
                coefficients[statistic] = _fit(points, [s.get(statistic) for s in stats], basis)
        leaves.append(Leaf(
            domain, basis, {s: [float(c) for c in coefficients[s]] for s in STATISTICS},
            float(error), len(points) * self.config.repetitions,
        ))


def adaptive_refine(sampler, config, kernel, case, domain):
    """
    Generate the piecewise model of one kernel case

    Args:
        sampler: Sampler handle measuring the calls
        config: ModelConfig
        kernel: Kernel name or descriptor
        case: Case (flags, scalar and increment classes)
        domain: Root Domain over the kernel's size arguments

    Returns:
        PiecewiseModel: Leaves partitioning the domain in depth-first order
    """
    descriptor = get_kernel(kernel)
    if not descriptor.sizes:
        raise GridError(f"{descriptor.name} has no size arguments to model")
    if domain.dimensions != len(descriptor.sizes):
        raise GridError(
            f"{descriptor.name} has {len(descriptor.sizes)} size arguments, "
            f"domain has {domain.dimensions}"
        )
    refiner = Refiner(sampler, config, descriptor, case)
    leaves = []
    refiner.refine(domain, leaves)
    model = PiecewiseModel(descriptor.name, case, domain, leaves, config)
    logger.info(
        f"Modeled {descriptor.name} {case.label} on {domain}: {len(leaves)} leaves, "
        f"max error {model.max_error:.2%}"
    )
    return model


def generate_model(sampler, config, kernel, cases, domain, machine='', backend='', threads=1,
                   seed=0):
    """
    Models of several cases of one kernel, as one KernelModel

    Args:
        sampler: Sampler handle
        config: ModelConfig (or None for the kernel's default configuration)
        kernel: Kernel name or descriptor
        cases: Cases to model
        domain: Root Domain shared by all cases
        machine, backend, threads, seed: Setup recorded in the model file

    Returns:
        KernelModel: One PiecewiseModel per case
    """
    descriptor = get_kernel(kernel)
    config = config if isinstance(config, ModelConfig) else default_config(descriptor, threads)
    domain = domain if isinstance(domain, Domain) else Domain(tuple(domain))
    models = [adaptive_refine(sampler, config, descriptor, case, domain) for case in cases]
    return KernelModel(descriptor.name, machine, backend, threads, config, seed, models)
