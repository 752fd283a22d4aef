"""
Kernel calls: a kernel name plus concrete argument values.
"""

from dataclasses import dataclass, field
from typing import Dict, Tuple

from common.errors import ToolkitError

from .signatures import Data, Flag, Inc, Info, Ld, Scalar, Size, get_kernel


class BindingError(ToolkitError):
    """Raised when a call's operands do not fit the buffers or leading dimensions"""
    pass


@dataclass(frozen=True)
class Operand:
    """A data argument bound to a buffer at an element offset"""
    buffer: str
    offset: int = 0

    def __str__(self):
        return self.buffer if self.offset == 0 else f"{self.buffer}+{self.offset}"


@dataclass
class Call:
    """
    One kernel invocation.

    `values` maps every argument name (except info) to its value: flag
    strings, nonnegative integer sizes, float scalars, Operand bindings,
    integer leading dimensions and increments.
    `tag` is free-form metadata used by algorithm expansions (e.g. marks
    pseudo-calls that have no kernel model).
    """
    kernel: str
    values: Dict[str, object]
    tag: Dict[str, object] = field(default_factory=dict)

    @property
    def descriptor(self):
        return get_kernel(self.kernel)

    def _select(self, kind):
        return {arg.name: self.values[arg.name]
                for arg in self.descriptor.args if isinstance(arg, kind)}

    @property
    def flags(self) -> Dict[str, str]:
        return self._select(Flag)

    @property
    def sizes(self) -> Dict[str, int]:
        return self._select(Size)

    @property
    def scalars(self) -> Dict[str, float]:
        return self._select(Scalar)

    @property
    def operands(self) -> Dict[str, Operand]:
        return self._select(Data)

    @property
    def flag_string(self) -> str:
        return ''.join(self.flags.values())

    @property
    def is_pseudo(self) -> bool:
        return bool(self.tag.get('pseudo'))

    def signature(self) -> Tuple:
        """Identity used for timing lookups: (kernel, flags, sizes)"""
        return (self.kernel, tuple(self.flags.values()), tuple(self.sizes.values()))

    def ld(self, data_name) -> int:
        ld = self.descriptor.ld_for(data_name)
        return int(self.values[ld.name]) if ld else 1

    def inc(self, data_name) -> int:
        inc = self.descriptor.inc_for(data_name)
        return int(self.values[inc.name]) if inc else 1

    def dims(self, data_name) -> Tuple[int, int]:
        return self.descriptor.arg(data_name).dims(self.values)

    def extent(self, data_name) -> int:
        """Number of buffer elements spanned by a data argument, offset included"""
        arg = self.descriptor.arg(data_name)
        rows, cols = arg.dims(self.values)
        offset = self.values[data_name].offset
        if arg.vector:
            if rows == 0:
                return 0
            return offset + (rows - 1) * abs(self.inc(data_name)) + 1
        if rows == 0 or cols == 0:
            return 0
        return offset + (cols - 1) * self.ld(data_name) + rows

    def name(self) -> str:
        flags = self.flag_string
        return f"{self.kernel}_{flags}" if flags else self.kernel

    def __str__(self):
        sizes = ', '.join(f"{k}={v}" for k, v in self.sizes.items())
        return f"{self.name()}({sizes})"

    @classmethod
    def build(cls, kernel, ld=None, inc=1, tag=None, **values):
        """
        Build a call filling unspecified arguments with defaults

        Args:
            kernel: Kernel name or descriptor
            ld: Leading dimension for all matrices (default: minimal, max(1, rows))
            inc: Increment for all vectors
            tag: Optional metadata dict
            **values: Explicit argument values; data args may be given as a
                buffer name or an Operand

        Returns:
            Call: The assembled call
        """
        descriptor = get_kernel(kernel)
        filled = {}
        for arg in descriptor.args:
            if isinstance(arg, (Flag, Size)):
                if arg.name not in values:
                    raise KeyError(f"{descriptor.name}: missing {arg.name}")
                filled[arg.name] = values[arg.name]
            elif isinstance(arg, Scalar):
                filled[arg.name] = float(values.get(arg.name, 1.0))
            elif isinstance(arg, Data):
                operand = values.get(arg.name, arg.name)
                filled[arg.name] = operand if isinstance(operand, Operand) else Operand(operand)
        for arg in descriptor.args:
            if isinstance(arg, Ld):
                if arg.name in values:
                    filled[arg.name] = int(values[arg.name])
                elif ld is not None:
                    filled[arg.name] = int(ld)
                else:
                    rows, _ = descriptor.arg(arg.of).dims(filled)
                    filled[arg.name] = max(1, rows)
            elif isinstance(arg, Inc):
                filled[arg.name] = int(values.get(arg.name, inc))
        return cls(descriptor.name, filled, dict(tag or {}))

    @classmethod
    def from_args(cls, kernel, args):
        """Build a call from positional arguments in signature order (info omitted)"""
        descriptor = get_kernel(kernel)
        names = [arg for arg in descriptor.args if not isinstance(arg, Info)]
        if len(args) != len(names):
            raise BindingError(
                f"{descriptor.name} takes {len(names)} arguments, got {len(args)}"
            )
        values = {}
        for arg, raw in zip(names, args):
            if isinstance(arg, Flag):
                values[arg.name] = str(raw)
            elif isinstance(arg, (Size, Ld, Inc)):
                values[arg.name] = int(raw)
            elif isinstance(arg, Scalar):
                values[arg.name] = float(raw)
            else:
                values[arg.name] = raw if isinstance(raw, Operand) else Operand(str(raw))
        return cls(descriptor.name, values)


def validate_call(call):
    """
    Check flags, sizes, leading dimensions and increments of a call

    Raises:
        InvalidFlagError: Flag value not allowed
        BindingError: Negative size, ld below the row count, zero increment
    """
    descriptor = call.descriptor
    descriptor.validate_flags(call.flags)
    for name, value in call.sizes.items():
        if int(value) != value or value < 0:
            raise BindingError(f"{call}: size {name}={value} must be a nonnegative integer")
    for data in descriptor.data:
        rows, _ = data.dims(call.values)
        if not data.vector and descriptor.ld_for(data.name) is not None:
            if call.ld(data.name) < max(1, rows):
                raise BindingError(
                    f"{call}: ld for {data.name} is {call.ld(data.name)} < rows {rows}"
                )
        if data.vector and call.inc(data.name) == 0:
            raise BindingError(f"{call}: zero increment for {data.name}")
        if call.values[data.name].offset < 0:
            raise BindingError(f"{call}: negative offset for {data.name}")
