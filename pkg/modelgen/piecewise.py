"""
Piecewise polynomial performance models.

A model covers one (kernel, case) over a root domain. Its leaves partition
the root domain; each leaf holds one polynomial per summary statistic over
its own monomial basis.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from common.errors import ToolkitError
from sampler.stats import STATISTICS, SummaryStats

from .cases import Case, classify
from .config import ModelConfig
from .fitting import evaluate_polynomial
from .grids import Domain

logger = logging.getLogger(__name__)


class UnmodeledCaseError(ToolkitError):
    """Raised when a call's case has no model"""
    pass


class OutOfDomainError(ToolkitError):
    """Raised when a call's sizes lie outside the modeled domain"""
    pass


@dataclass
class Leaf:
    domain: Domain
    basis: List[Tuple[int, ...]]
    coefficients: Dict[str, List[float]]
    error: float = 0.0
    samples: int = 0

    def estimate(self, point):
        values = {
            statistic: max(0.0, evaluate_polynomial(self.basis, self.coefficients[statistic], point))
            for statistic in STATISTICS
        }
        return SummaryStats(**values)

    def as_dict(self):
        return {
            'bounds': self.domain.as_list(),
            'basis': [list(exponents) for exponents in self.basis],
            'coefficients': {s: [float(c) for c in self.coefficients[s]] for s in STATISTICS},
            'achieved_error': float(self.error),
            'samples': int(self.samples),
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            Domain(tuple(tuple(bound) for bound in data['bounds'])),
            [tuple(exponents) for exponents in data['basis']],
            {s: [float(c) for c in data['coefficients'][s]] for s in STATISTICS},
            float(data.get('achieved_error', 0.0)),
            int(data.get('samples', 0)),
        )


def _inside(value, lower, upper, root_upper):
    # lower-inclusive, upper-exclusive except at the root's upper bound
    return lower <= value < upper or value == upper == root_upper


@dataclass
class PiecewiseModel:
    kernel: str
    case: Case
    domain: Domain
    leaves: List[Leaf] = field(default_factory=list)
    config: Optional[ModelConfig] = None

    def locate(self, point):
        """The leaf containing a point"""
        point = tuple(int(x) for x in point)
        if len(point) != self.domain.dimensions or not self.domain.contains(point):
            raise OutOfDomainError(f"{self.kernel} {self.case.label}: {point} outside {self.domain}")
        for leaf in self.leaves:
            if all(
                _inside(x, l, u, root_u)
                for x, (l, u), root_u in zip(point, leaf.domain.bounds, self.domain.upper)
            ):
                return leaf
        raise OutOfDomainError(f"{self.kernel} {self.case.label}: no leaf contains {point}")

    def estimate(self, point):
        return self.locate(point).estimate(point)

    @property
    def max_error(self):
        return max((leaf.error for leaf in self.leaves), default=0.0)

    def as_dict(self):
        return {
            **self.case.as_dict(),
            'domain': self.domain.as_list(),
            'domains': [leaf.as_dict() for leaf in self.leaves],
        }

    @classmethod
    def from_dict(cls, kernel, data, config=None):
        return cls(
            kernel,
            Case.from_dict(data),
            Domain(tuple(tuple(bound) for bound in data['domain'])),
            [Leaf.from_dict(leaf) for leaf in data['domains']],
            config,
        )


def evaluate(model, call):
    """
    Estimated summary statistics of a call

    Args:
        model: PiecewiseModel, or a KernelModel holding one model per case
        call: Call whose case and sizes are looked up

    Returns:
        SummaryStats: Estimate, negative values clamped to 0
    """
    if isinstance(model, PiecewiseModel):
        if classify(call) != model.case:
            raise UnmodeledCaseError(f"{call} is not in case {model.case.label}")
        piecewise = model
    else:
        piecewise = model.for_case(classify(call))
    estimate = piecewise.estimate(tuple(call.sizes.values()))
    logger.debug(f"Estimated {call}: median {estimate.med:.3e} s")
    return estimate
