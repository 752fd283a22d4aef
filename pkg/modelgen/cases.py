"""
Cases: the flag values, scalar classes and increment classes that fix one
family of execution branches of a kernel. Each case gets its own model.
"""

import itertools
from dataclasses import dataclass
from typing import Tuple

from django.conf import settings

from kernels.calls import Call
from kernels.costs import split_flags
from kernels.signatures import get_kernel

SCALAR_CLASSES = ('-1', '0', '1', 'other')
INCREMENT_CLASSES = ('one', 'large')

# value measured for the "any other scalar" class
OTHER_SCALAR = 1.5


def scalar_class(value):
    for label in ('-1', '0', '1'):
        if float(value) == float(label):
            return label
    return 'other'


def scalar_value(label):
    return OTHER_SCALAR if label == 'other' else float(label)


def increment_class(value):
    return 'one' if abs(int(value)) == 1 else 'large'


@dataclass(frozen=True)
class Case:
    flags: Tuple[Tuple[str, str], ...] = ()
    scalars: Tuple[Tuple[str, str], ...] = ()
    increments: Tuple[Tuple[str, str], ...] = ()

    def __post_init__(self):
        for name, label in self.scalars:
            if label not in SCALAR_CLASSES:
                raise ValueError(f"Scalar class for {name} must be one of {SCALAR_CLASSES}")
        for name, label in self.increments:
            if label not in INCREMENT_CLASSES:
                raise ValueError(f"Increment class for {name} must be one of {INCREMENT_CLASSES}")

    @property
    def label(self):
        parts = [value for _, value in self.flags]
        parts += [f"{name}={label}" for name, label in self.scalars]
        parts += [f"{name}={label}" for name, label in self.increments]
        return ','.join(parts) or 'default'

    def as_dict(self):
        return {
            'flags': dict(self.flags),
            'scalars': dict(self.scalars),
            'increments': dict(self.increments),
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            tuple(data.get('flags', {}).items()),
            tuple(data.get('scalars', {}).items()),
            tuple(data.get('increments', {}).items()),
        )

    def call(self, kernel, sizes, ld=None, large_increment=None):
        """
        Measurement call for this case at one size point

        Leading dimensions are set to one large constant (or the largest
        size, if bigger) so that the memory layout does not change across
        the sampled points.
        """
        descriptor = get_kernel(kernel)
        ld = ld or settings.DLAPERF_LD
        large_increment = large_increment or settings.DLAPERF_LARGE_INC
        values = dict(self.flags)
        values.update(sizes)
        values.update({name: scalar_value(label) for name, label in self.scalars})
        values.update({
            name: 1 if label == 'one' else large_increment for name, label in self.increments
        })
        return Call.build(descriptor, ld=max([ld, *sizes.values()]), **values)


def enumerate_cases(kernel):
    """
    Every case of a kernel

    Args:
        kernel: Kernel name or descriptor

    Returns:
        list: Case per combination of flag values, scalar classes and increment classes
    """
    descriptor = get_kernel(kernel)
    flag_choices = [[(flag.name, value) for value in flag.values] for flag in descriptor.flags]
    scalar_choices = [[(s.name, label) for label in SCALAR_CLASSES] for s in descriptor.scalars]
    inc_choices = [[(i.name, label) for label in INCREMENT_CLASSES] for i in descriptor.incs]
    cases = []
    for flags in itertools.product(*flag_choices):
        for scalars in itertools.product(*scalar_choices):
            for increments in itertools.product(*inc_choices):
                cases.append(Case(tuple(flags), tuple(scalars), tuple(increments)))
    return cases


def classify(call):
    """The case a concrete call belongs to"""
    return Case(
        tuple(call.flags.items()),
        tuple((name, scalar_class(value)) for name, value in call.scalars.items()),
        tuple((inc.name, increment_class(call.values[inc.name])) for inc in call.descriptor.incs),
    )


def parse_case(kernel, text):
    """
    Case from a compact description such as 'LLNN' or 'NN,alpha=1,beta=other'

    Flags come first as a compact string; unspecified scalars default to
    'other' and unspecified increments to 'one'.
    """
    descriptor = get_kernel(kernel)
    parts = [part for part in (text or '').split(',') if part]
    flags_text = ''
    classes = {}
    for part in parts:
        if '=' in part:
            name, _, label = part.partition('=')
            classes[name.strip()] = label.strip()
        else:
            flags_text = part.strip()
    flags = tuple(zip((flag.name for flag in descriptor.flags), split_flags(descriptor, flags_text)))
    descriptor.validate_flags(dict(flags))
    return Case(
        flags,
        tuple((s.name, classes.get(s.name, 'other')) for s in descriptor.scalars),
        tuple((i.name, classes.get(i.name, 'one')) for i in descriptor.incs),
    )
