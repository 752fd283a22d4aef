"""
Running blocked algorithms: operand initialization, reference execution
and whole-run timing for accuracy studies.
"""

import logging

import numpy as np

from sampler.backends import ReferenceBackend
from sampler.plans import WarmPolicy

from .algorithms import call_sequence, get_algorithm, problem_sizes

logger = logging.getLogger(__name__)


def _random(rng, rows, cols):
    return rng.random((rows, cols))


def operand_matrices(algorithm, m, n, seed=0):
    """
    Well-conditioned inputs for an algorithm's operation

    Returns:
        dict: Operand name -> (rows x cols) array; auxiliary operands are zero
    """
    rng = np.random.default_rng(seed)
    operation = algorithm.operation
    matrices = {}
    if operation == 'dpotrf':
        factor = _random(rng, n, n)
        matrices['A'] = factor @ factor.T + n * np.eye(n)
    elif operation == 'dtrtri':
        matrices['A'] = np.tril(_random(rng, n, n)) + n * np.eye(n)
    elif operation == 'dlauum':
        matrices['A'] = _random(rng, n, n)
    elif operation == 'dsygst':
        a = _random(rng, n, n)
        matrices['A'] = a + a.T
        matrices['L'] = np.tril(_random(rng, n, n)) + n * np.eye(n)
    elif operation in ('dgetrf', 'dgeqrf'):
        matrices['A'] = _random(rng, m, n)
    elif operation == 'dtrsyl':
        matrices['A'] = np.triu(_random(rng, m, m)) + m * np.eye(m)
        matrices['B'] = np.triu(_random(rng, n, n)) + n * np.eye(n)
        matrices['C'] = _random(rng, m, n)
    return matrices


def initialize_operands(store, algorithm, sizes, b, seed=0):
    """
    (Re)allocate and fill every operand buffer of an algorithm run

    Matrices are stored column-major with the leading dimension equal to
    their row count, as the call sequence expects.
    """
    algorithm = get_algorithm(algorithm)
    m, n = problem_sizes(sizes, algorithm.square)
    matrices = operand_matrices(algorithm, m, n, seed)
    for name, region in algorithm.bases(m, n, b).items():
        buffer = store.allocate(name, max(1, region.ld * region.cols))
        if name in matrices:
            buffer[:region.rows * region.cols] = matrices[name].ravel(order='F')
    return matrices


def read_operands(store, algorithm, sizes, b):
    """Operand contents as (rows x cols) arrays"""
    algorithm = get_algorithm(algorithm)
    m, n = problem_sizes(sizes, algorithm.square)
    return {
        name: store[name][:region.ld * region.cols]
        .reshape((region.ld, region.cols), order='F')[:region.rows].copy()
        for name, region in algorithm.bases(m, n, b).items()
    }


def expand_inline(calls):
    """Replace pseudo-calls by the kernel calls that carry out their work"""
    expanded = []
    for call in calls:
        if call.is_pseudo:
            expanded.extend(call.tag.get('inline', []))
        else:
            expanded.append(call)
    return expanded


def run_algorithm(algorithm, sizes, b, seed=0, backend=None):
    """
    Execute a blocked algorithm with the reference kernels

    Args:
        algorithm: BlockedAlgorithm or name
        sizes: n, or {'m': m, 'n': n}
        b: Block size
        seed: Seed of the input matrices
        backend: Backend with a store (default: a new ReferenceBackend)

    Returns:
        tuple: (inputs, outputs), dicts of operand name -> array
    """
    algorithm = get_algorithm(algorithm)
    backend = backend or ReferenceBackend()
    calls = expand_inline(call_sequence(algorithm, sizes, b))
    inputs = initialize_operands(backend.store, algorithm, sizes, b, seed)
    backend.prepare(calls)
    for call in calls:
        backend.execute(call)
    logger.debug(f"Executed {algorithm.name} with {len(calls)} calls on {backend.name}")
    return inputs, read_operands(backend.store, algorithm, sizes, b)


def measure_algorithm(sampler, algorithm, sizes, b, repetitions=10, warm_policy=WarmPolicy.COLD,
                      seed=0):
    """
    Measured runtime statistics of complete algorithm runs

    Operands are re-initialized before every repetition; pseudo-calls are
    replaced by their inline kernel calls.
    """
    algorithm = get_algorithm(algorithm)
    calls = expand_inline(call_sequence(algorithm, sizes, b))

    def setup(store):
        initialize_operands(store, algorithm, sizes, b, seed)

    stats = sampler.measure_sequence(calls, repetitions, warm_policy, setup=setup)
    logger.info(f"Measured {algorithm.name} b={b}: median {stats.med:.4e} s")
    return stats
