"""
Text call lists, one command per line:

    dmalloc A 1000000
    dgemm N N 1000 1000 1000 1 A 1000 B 1000 1 C 1000
    daxpy 100000 1.5 [100000] 1 [100000] 1
    go

Kernel lines list the arguments in signature order (info omitted); data
arguments name a dmalloc'ed buffer or request a fresh ad-hoc buffer with
`[count]`. `go` (or the end of input) runs the pending calls in order,
each timed once; `#` starts a comment.
"""

import logging

from common.errors import ToolkitError
from kernels.calls import Call, Operand, validate_call
from kernels.signatures import Data, Info, UnknownKernelError, get_kernel

from .timers import CycleTimer

logger = logging.getLogger(__name__)


class CallListError(ToolkitError):
    """Raised for malformed call-list lines; carries the line number"""

    def __init__(self, line_number, message):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class CallListSession:
    """Interprets call-list lines against a backend"""

    def __init__(self, backend, timer):
        self.backend = backend
        self.timer = timer
        self.declared = {}
        self.pending = []
        self.results = []
        self.calls = []
        self._adhoc = 0

    def _operand(self, token, line_number):
        if token.startswith('[') and token.endswith(']'):
            try:
                count = int(token[1:-1])
            except ValueError:
                raise CallListError(line_number, f"bad ad-hoc buffer {token}")
            self._adhoc += 1
            name = f"[{count}]#{self._adhoc}"
            self.declared[name] = count
            return Operand(name)
        if token not in self.declared:
            raise CallListError(line_number, f"undeclared buffer {token}")
        return Operand(token)

    def _call(self, tokens, line_number):
        try:
            descriptor = get_kernel(tokens[0])
        except UnknownKernelError:
            raise CallListError(line_number, f"unknown command or kernel {tokens[0]}")
        args = list(tokens[1:])
        signature = [arg for arg in descriptor.args if not isinstance(arg, Info)]
        for position, arg in enumerate(signature):
            if isinstance(arg, Data) and position < len(args):
                args[position] = self._operand(args[position], line_number)
        try:
            call = Call.from_args(descriptor, args)
            validate_call(call)
        except (ToolkitError, ValueError) as e:
            raise CallListError(line_number, str(e))
        for name, operand in call.operands.items():
            if call.extent(name) > self.declared[operand.buffer]:
                raise CallListError(
                    line_number,
                    f"{name} needs {call.extent(name)} elements, {operand.buffer} has "
                    f"{self.declared[operand.buffer]}",
                )
        return call

    def feed(self, line_number, line):
        text = line.split('#', 1)[0].strip()
        if not text:
            return
        tokens = text.split()
        if tokens[0] == 'go':
            self.go()
        elif tokens[0] == 'dmalloc':
            if len(tokens) != 3:
                raise CallListError(line_number, "usage: dmalloc NAME COUNT")
            try:
                count = int(tokens[2])
            except ValueError:
                raise CallListError(line_number, f"bad buffer size {tokens[2]}")
            if count <= 0:
                raise CallListError(line_number, f"bad buffer size {tokens[2]}")
            self.declared[tokens[1]] = count
            if self.backend is not None:
                self.backend.store.allocate(tokens[1], count)
        else:
            call = self._call(tokens, line_number)
            self.pending.append(call)
            self.calls.append(call)

    def go(self):
        if not self.pending or self.backend is None:
            self.pending = []
            return
        for name, count in self.declared.items():
            if name.startswith('['):
                self.backend.store.ensure(name, count)
        self.backend.prepare(self.pending)
        for call in self.pending:
            self.results.append((call, self.backend.timed(call, self.timer)))
        logger.info(f"Timed {len(self.pending)} calls")
        self.pending = []


def parse_call_list(text):
    """
    Validate a call list without running it

    Returns:
        list: Calls of all kernel lines, in input order
    """
    session = CallListSession(None, None)
    for line_number, line in enumerate(text.splitlines(), start=1):
        session.feed(line_number, line)
    return session.calls


def run_call_list(text, backend, timer):
    """
    Run a whole call list

    Args:
        text: Call-list source
        backend: Backend executing the calls
        timer: Timer measuring them

    Returns:
        list: (call, seconds) per kernel line, in input order
    """
    session = CallListSession(backend, timer)
    for line_number, line in enumerate(text.splitlines(), start=1):
        session.feed(line_number, line)
    session.go()
    return session.results


def format_timing(seconds, frequency):
    """Output line: cycles and seconds"""
    return f"{CycleTimer(frequency).cycles(seconds)}\t{seconds:.9e}"
