"""
Tensor contractions in Einstein notation.

    C[a,b,c] = A[a,i] * B[i,b,c]; a=b=c=400, i=8

Indices in both inputs are contracted; every output index is free and
appears in exactly one input. Tensors are stored Fortran-style: the first
index is contiguous.
"""

import logging
import math
import re
from dataclasses import dataclass, field, replace
from typing import Dict, Tuple

import numpy as np

from common.errors import ToolkitError

logger = logging.getLogger(__name__)

ROLES = ('C', 'A', 'B')

_TENSOR = re.compile(r'^\s*([A-Za-z]\w*)\s*\[\s*([a-z](?:\s*,\s*[a-z])*)?\s*\]\s*$')
_BINDING = re.compile(r'^\s*([a-z](?:\s*=\s*[a-z])*)\s*=\s*(\d+)\s*$')


class SpecSyntaxError(ToolkitError):
    """Raised for malformed contraction text or extents"""
    pass


class IndexClassificationError(ToolkitError):
    """Raised when an index is neither free nor contracted"""
    pass


class ShapeMismatchError(ToolkitError):
    """Raised when tensor data does not match the contraction's extents"""
    pass


@dataclass(frozen=True)
class ContractionSpec:
    output: Tuple[str, ...]
    left: Tuple[str, ...]
    right: Tuple[str, ...]
    extents: Dict[str, int] = field(default_factory=dict)
    names: Tuple[str, str, str] = ROLES

    def __post_init__(self):
        for role in ROLES:
            indices = self.indices(role)
            if len(set(indices)) != len(indices):
                raise IndexClassificationError(
                    f"Repeated index in {self.name(role)}{list(indices)}"
                )
        for index in self.output:
            if index in self.left and index in self.right:
                raise IndexClassificationError(f"Index {index} appears in all three tensors")
            if index not in self.left and index not in self.right:
                raise IndexClassificationError(f"Output index {index} appears in no input")
        for index in set(self.left) ^ set(self.right):
            if index not in self.output:
                raise IndexClassificationError(
                    f"Index {index} is in one input only but not in the output"
                )
        for index, extent in self.extents.items():
            if index not in self.all_indices:
                raise SpecSyntaxError(f"Extent given for unknown index {index}")
            if int(extent) != extent or extent < 1:
                raise SpecSyntaxError(f"Extent of {index} must be a positive integer, got {extent}")

    def indices(self, role):
        return {'C': self.output, 'A': self.left, 'B': self.right}[role]

    def name(self, role):
        return self.names[ROLES.index(role)]

    @property
    def free_left(self):
        return tuple(index for index in self.output if index in self.left)

    @property
    def free_right(self):
        return tuple(index for index in self.output if index in self.right)

    @property
    def free(self):
        return self.output

    @property
    def contracted(self):
        return tuple(index for index in self.left if index in self.right)

    @property
    def all_indices(self):
        return self.output + self.contracted

    def with_extents(self, extents=None, **more):
        merged = dict(self.extents)
        merged.update(extents or {})
        merged.update(more)
        return replace(self, extents=merged)

    def extent(self, index):
        try:
            return int(self.extents[index])
        except KeyError:
            raise SpecSyntaxError(f"No extent for index {index}")

    def shape(self, role):
        return tuple(self.extent(index) for index in self.indices(role))

    def size(self, role):
        return math.prod(self.shape(role))

    def strides(self, role):
        """Element stride of every index of a tensor (column-major)"""
        strides, stride = {}, 1
        for index in self.indices(role):
            strides[index] = stride
            stride *= self.extent(index)
        return strides

    def flops(self):
        """Multiply-adds of the contraction, counted as 2 flops each"""
        return 2 * math.prod(self.extent(index) for index in self.all_indices)

    def contract(self, left, right):
        """Naive contraction of two arrays"""
        expression = (f"{''.join(self.left)},{''.join(self.right)}->{''.join(self.output)}")
        return np.einsum(expression, left, right)

    def text(self):
        def tensor(role):
            return f"{self.name(role)}[{','.join(self.indices(role))}]"
        return f"{tensor('C')} = {tensor('A')} * {tensor('B')}"

    def __str__(self):
        return self.text()


def _tensor(text):
    match = _TENSOR.match(text)
    if not match:
        raise SpecSyntaxError(f"Malformed tensor {text.strip()!r}; expected e.g. A[a,i]")
    name, indices = match.groups()
    return name, tuple(index.strip() for index in indices.split(',')) if indices else ()


def parse_extents(text):
    """
    Extents from bindings like "a=b=c=400, i=8"

    Returns:
        dict: index -> extent
    """
    extents = {}
    for binding in filter(None, (part.strip() for part in re.split(r'[,\s]+(?=[a-z]\s*=)', text))):
        match = _BINDING.match(binding.rstrip(','))
        if not match:
            raise SpecSyntaxError(f"Malformed extent binding {binding!r}")
        names, value = match.groups()
        for name in names.split('='):
            extents[name.strip()] = int(value)
    return extents


def parse_spec(text, extents=None):
    """
    Parse a contraction, optionally followed by "; index=extent, ..."

    Args:
        text: e.g. "C[a,b,c] = A[a,i] * B[i,b,c]; a=b=c=400, i=8"
        extents: Extra or overriding extents

    Returns:
        ContractionSpec
    """
    expression, _, bindings = text.partition(';')
    if expression.count('=') != 1:
        raise SpecSyntaxError(f"Expected one '=' in {expression.strip()!r}")
    lhs, rhs = expression.split('=')
    factors = rhs.split('*')
    if len(factors) != 2:
        raise SpecSyntaxError(f"Expected two factors joined by '*' in {rhs.strip()!r}")
    (c_name, output), (a_name, left), (b_name, right) = map(_tensor, [lhs] + factors)
    merged = parse_extents(bindings) if bindings.strip() else {}
    merged.update(extents or {})
    spec = ContractionSpec(output, left, right, merged, (c_name, a_name, b_name))
    logger.debug(
        f"Parsed {spec}: free {''.join(spec.free)}, contracted {''.join(spec.contracted)}"
    )
    return spec
