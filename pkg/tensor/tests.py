from collections import Counter, defaultdict

import numpy as np
from django.test import SimpleTestCase

from sampler.backends import SyntheticBackend
from sampler.plans import Sampler
from sampler.preconditions import OperandAccess, RemoteAccess
from sampler.synthetic import flop_rate_runtime, kernel_rate_runtime

from .algorithms import (
    UnknownAlgorithmError, export_algorithm, generate_algorithms, get_contraction_algorithm,
    kernel_text, listing,
)
from .analysis import (
    Region, access_distance_ast, detect_prefetch, first_iteration_distance, union_size,
)
from .benchmarks import (
    MicroBenchmark, PredictionLevel, Setup, SetupEntry, UnrealizableSetupError, build_benchmarks,
    build_setup, first_iteration_levels,
)
from .contractions import (
    IndexClassificationError, ShapeMismatchError, SpecSyntaxError, parse_extents, parse_spec,
)
from .execution import (
    algorithm_calls, algorithm_flops, copy_invocations, execute_algorithm, invocations,
    measure_contraction,
)
from .prediction import (
    RANKING_COLUMNS, MissingBenchmarkTimingError, predict_algorithm, predict_contraction,
    rank_contractions, ranking_frame,
)

MATRIX_TIMES_TENSOR = 'C[a,b,c] = A[a,i] * B[i,b,c]'
TENSOR_TIMES_MATRIX = 'C[a] = A[i,a,j] * B[j,i]'
TWO_CONTRACTED = 'C[a,b,c] = A[i,j,a] * B[j,b,i,c]'
CACHE_BYTES = 6 * 1024 * 1024


def by_name(text, name, **extents):
    return get_contraction_algorithm(parse_spec(text, extents), name)


def random_operands(spec, seed=0):
    rng = np.random.default_rng(seed)
    return rng.random(spec.shape('A')), rng.random(spec.shape('B'))


class ParseTests(SimpleTestCase):

    def test_classification(self):
        spec = parse_spec(f"{MATRIX_TIMES_TENSOR}; a=b=c=400, i=8")
        self.assertEqual(spec.free, ('a', 'b', 'c'))
        self.assertEqual(spec.contracted, ('i',))
        self.assertEqual(spec.free_left, ('a',))
        self.assertEqual(spec.free_right, ('b', 'c'))
        self.assertEqual(spec.extents, {'a': 400, 'b': 400, 'c': 400, 'i': 8})
        self.assertEqual(spec.flops(), 2 * 400 ** 3 * 8)

    def test_matrix_product(self):
        spec = parse_spec('C[a,b] = A[a,i] * B[i,b]')
        self.assertEqual(spec.contracted, ('i',))
        self.assertEqual(spec.text(), 'C[a,b] = A[a,i] * B[i,b]')

    def test_extent_bindings(self):
        self.assertEqual(parse_extents('a=b=c=400, i=8'), {'a': 400, 'b': 400, 'c': 400, 'i': 8})
        self.assertEqual(parse_extents('a=4 b=5'), {'a': 4, 'b': 5})
        with self.assertRaises(SpecSyntaxError):
            parse_extents('a=four')

    def test_strides_are_column_major(self):
        spec = parse_spec(TWO_CONTRACTED, dict(a=2, b=3, c=4, i=5, j=6))
        self.assertEqual(spec.strides('B'), {'j': 1, 'b': 6, 'i': 18, 'c': 90})
        self.assertEqual(spec.shape('A'), (5, 6, 2))
        self.assertEqual(spec.size('C'), 24)

    def test_index_in_one_input_only(self):
        with self.assertRaises(IndexClassificationError):
            parse_spec('C[a] = A[a] * B[b]')

    def test_index_in_all_three_tensors(self):
        with self.assertRaises(IndexClassificationError):
            parse_spec('C[a,b,c] = A[a,b,i] * B[i,b,c]')

    def test_output_index_in_no_input(self):
        with self.assertRaises(IndexClassificationError):
            parse_spec('C[a,d] = A[a,i] * B[i]')

    def test_repeated_index(self):
        with self.assertRaises(IndexClassificationError):
            parse_spec('C[a] = A[a,i,i] * B[i]')

    def test_syntax_errors(self):
        for text in ('C[a,b] = A[a,i] B[i,b]', 'C[a = A[a] * B[a]', 'C[a] = A[a,i] * B[i] * D[i]',
                     'C[a,b] == A[a,i] * B[i,b]', 'C[a,b] = A[a,i] * B[i,b]; a=0'):
            with self.subTest(text=text), self.assertRaises(SpecSyntaxError):
                parse_spec(text)

    def test_unknown_extent(self):
        with self.assertRaises(SpecSyntaxError):
            parse_spec('C[a,b] = A[a,i] * B[i,b]; z=4')

    def test_missing_extent(self):
        with self.assertRaises(SpecSyntaxError):
            parse_spec('C[a,b] = A[a,i] * B[i,b]; a=4').shape('B')


class GenerationTests(SimpleTestCase):

    def count(self, text):
        algorithms = generate_algorithms(text)
        return len(algorithms), Counter(algorithm.kernel for algorithm in algorithms)

    def test_matrix_times_tensor(self):
        total, kernels = self.count(MATRIX_TIMES_TENSOR)
        self.assertEqual(total, 36)
        self.assertEqual(kernels, {'dot': 6, 'axpy': 18, 'gemv': 6, 'ger': 4, 'gemm': 2})

    def test_tensor_times_matrix(self):
        total, kernels = self.count(TENSOR_TIMES_MATRIX)
        self.assertEqual(total, 8)
        self.assertEqual(kernels, {'dot': 4, 'axpy': 2, 'gemv': 2})

    def test_two_contracted_indices(self):
        total, kernels = self.count(TWO_CONTRACTED)
        self.assertEqual(total, 176)
        self.assertEqual(kernels, {'dot': 48, 'axpy': 72, 'gemv': 36, 'ger': 12, 'gemm': 8})

    def test_names_are_unique(self):
        for text in (MATRIX_TIMES_TENSOR, TENSOR_TIMES_MATRIX, TWO_CONTRACTED):
            names = [algorithm.name for algorithm in generate_algorithms(text)]
            self.assertEqual(len(names), len(set(names)))

    def test_names(self):
        names = {algorithm.name for algorithm in generate_algorithms(MATRIX_TIMES_TENSOR)}
        for name in ('ca-gemv', 'bi-ger', 'ci-ger', 'b-gemm', 'c-gemm', 'abc-dot', 'bci-axpy'):
            self.assertIn(name, names)
        names = {algorithm.name for algorithm in generate_algorithms(TENSOR_TIMES_MATRIX)}
        self.assertEqual({name for name in names if name.endswith('gemv')}, {"i'-gemv", 'j-gemv'})
        names = {algorithm.name for algorithm in generate_algorithms(TWO_CONTRACTED)}
        self.assertIn("cj'-gemm", names)
        self.assertIn("i'c-gemm", names)
        self.assertIn("ci'-gemm", names)

    def test_transposition_flags(self):
        self.assertEqual(by_name(TENSOR_TIMES_MATRIX, "i'-gemv").flags, {'trans': 'N'})
        self.assertEqual(by_name(TENSOR_TIMES_MATRIX, 'j-gemv').flags, {'trans': 'T'})
        self.assertEqual(by_name(TWO_CONTRACTED, "cj'-gemm").flags, {'transA': 'T', 'transB': 'T'})
        self.assertEqual(by_name(TWO_CONTRACTED, "i'c-gemm").flags, {'transA': 'T', 'transB': 'N'})
        self.assertEqual(by_name(MATRIX_TIMES_TENSOR, 'b-gemm').flags,
                         {'transA': 'N', 'transB': 'N'})

    def test_copy_placement(self):
        algorithm = by_name(TWO_CONTRACTED, "i'c-gemm")
        copy, = algorithm.copies
        self.assertEqual((copy.operand.slice.tensor, copy.depth, copy.back), ('A', 1, False))
        algorithm = by_name(TWO_CONTRACTED, "cj'-gemm")
        copy, = algorithm.copies
        self.assertEqual((copy.operand.slice.tensor, copy.depth), ('B', 2))
        self.assertFalse(by_name(MATRIX_TIMES_TENSOR, 'ca-gemv').copies)

    def test_lookup_without_primes(self):
        self.assertEqual(by_name(TWO_CONTRACTED, 'ic-gemm').name, "i'c-gemm")
        with self.assertRaises(UnknownAlgorithmError):
            by_name(MATRIX_TIMES_TENSOR, 'z-gemm')

    def test_kernel_text(self):
        algorithm = by_name(MATRIX_TIMES_TENSOR, 'b-gemm')
        self.assertEqual(kernel_text(algorithm), 'dgemm[NN]: C[:,b,:] += A[:,:] * B[:,b,:]')
        algorithm = by_name(MATRIX_TIMES_TENSOR, 'ca-gemv')
        self.assertEqual(kernel_text(algorithm), 'dgemv[T]: C[a,:,c] += B[:,:,c] * A[a,:]')

    def test_listing(self):
        lines = listing(by_name(TWO_CONTRACTED, "i'c-gemm", a=4, b=4, c=4, i=3, j=3)).splitlines()
        self.assertEqual(lines[0], 'for (i = 0; i < 3; i++)')
        self.assertEqual(lines[1], '    dcopy: A_copy[j,a] = A[i,:,:]')
        self.assertEqual(lines[2], '    for (c = 0; c < 4; c++)')
        self.assertTrue(lines[3].startswith('        dgemm[TN]: C[:,:,c]'))

    def test_listing_with_copy_back(self):
        algorithm = next(a for a in generate_algorithms('C[b,c,a] = A[a,i] * B[i,b,c]')
                         if a.kernel == 'ger' and a.copies)
        text = listing(algorithm)
        self.assertEqual(text.count('dcopy'), 2)
        self.assertTrue(text.splitlines()[-1].strip().startswith('dcopy: C['))

    def test_export(self):
        exported = export_algorithm(by_name(MATRIX_TIMES_TENSOR, 'ca-gemv'))
        self.assertEqual(exported['kernel'], 'dgemv')
        self.assertEqual(exported['loops'], ['c', 'a'])
        self.assertEqual(exported['operands'], {'A': 'B[:,:,c]', 'x': 'A[a,:]', 'y': 'C[a,:,c]'})
        self.assertEqual(exported['copies'], [])


class ExecutionTests(SimpleTestCase):
    """Every algorithm against a direct contraction"""

    def check_all(self, text, **extents):
        spec = parse_spec(text, extents)
        left, right = random_operands(spec)
        expected = spec.contract(left, right)
        for algorithm in generate_algorithms(spec):
            with self.subTest(algorithm=algorithm.name):
                np.testing.assert_allclose(
                    execute_algorithm(algorithm, left, right), expected, rtol=0, atol=1e-12,
                )

    def test_matrix_times_tensor(self):
        self.check_all(MATRIX_TIMES_TENSOR, a=4, b=3, c=2, i=5)

    def test_tensor_times_matrix(self):
        self.check_all(TENSOR_TIMES_MATRIX, i=3, a=4, j=5)

    def test_two_contracted_indices(self):
        self.check_all(TWO_CONTRACTED, a=2, b=3, c=2, i=3, j=2)

    def test_output_copied_and_written_back(self):
        self.check_all('C[b,c,a] = A[a,i] * B[i,b,c]', a=3, b=4, c=2, i=3)

    def test_extent_one(self):
        self.check_all(MATRIX_TIMES_TENSOR, a=1, b=3, c=1, i=2)

    def test_accumulates_into_output(self):
        spec = parse_spec(MATRIX_TIMES_TENSOR, dict(a=3, b=2, c=2, i=4))
        left, right = random_operands(spec, seed=3)
        initial = np.ones(spec.shape('C'))
        result = execute_algorithm(generate_algorithms(spec)[0], left, right, initial)
        np.testing.assert_allclose(result, initial + spec.contract(left, right), atol=1e-12)

    def test_shape_mismatch(self):
        algorithm = by_name(MATRIX_TIMES_TENSOR, 'b-gemm', a=3, b=2, c=2, i=4)
        with self.assertRaises(ShapeMismatchError):
            execute_algorithm(algorithm, np.zeros((4, 3)), np.zeros((4, 2, 2)))

    def test_call_counts(self):
        spec = parse_spec(TWO_CONTRACTED, dict(a=4, b=3, c=2, i=3, j=2))
        for algorithm in generate_algorithms(spec, kernels=('gemv', 'gemm')):
            calls = algorithm_calls(algorithm)
            copies = sum(copy_invocations(algorithm, copy) for copy in algorithm.copies)
            self.assertEqual(len(calls), invocations(algorithm) + copies)
            self.assertEqual(algorithm_flops(algorithm), spec.flops())


class AccessDistanceTests(SimpleTestCase):
    """Distances in the loop nest of ca-gemv at a=b=c=400, i=8"""

    def setUp(self):
        self.algorithm = by_name(MATRIX_TIMES_TENSOR, 'ca-gemv', a=400, b=400, c=400, i=8)

    def test_distances(self):
        self.assertEqual(access_distance_ast(self.algorithm, 'B[:,:,c]'), 0)
        self.assertEqual(access_distance_ast(self.algorithm, 'A[a,:]'), 166400)
        self.assertEqual(access_distance_ast(self.algorithm, 'C[a,:,c]'), 65283200)
        self.assertEqual(access_distance_ast(self.algorithm, 'x'), 166400)

    def test_unknown_operand(self):
        with self.assertRaises(KeyError):
            access_distance_ast(self.algorithm, 'D[:]')

    def test_union_of_overlapping_regions(self):
        extents = {'a': 4, 'i': 3}
        rows = Region('A', ('a', 'i'), frozenset({'a'}))
        cols = Region('A', ('a', 'i'), frozenset({'i'}))
        self.assertEqual(union_size([rows, cols], extents), 3 + 4 - 1)
        self.assertEqual(union_size([rows, rows.join('a'), cols], extents), 12)
        self.assertEqual(union_size([], extents), 0)

    def test_line_sharing_prefetch(self):
        prefetch = detect_prefetch(self.algorithm, 'A[a,:]')
        self.assertTrue(prefetch.shares_lines)
        self.assertEqual((prefetch.distance, prefetch.elements), (0, 8))
        self.assertTrue(detect_prefetch(self.algorithm, 'C[a,:,c]').shares_lines)
        self.assertIsNone(detect_prefetch(self.algorithm, 'B[:,:,c]'))

    def test_consecutive_prefetch(self):
        algorithm = by_name(MATRIX_TIMES_TENSOR, 'bi-ger', a=400, b=400, c=400, i=8)
        prefetch = detect_prefetch(algorithm, 'A[:,i]')
        self.assertFalse(prefetch.shares_lines)
        self.assertEqual((prefetch.elements, prefetch.rows), (8, 8))
        self.assertTrue(detect_prefetch(algorithm, 'B[i,b,:]').shares_lines)
        self.assertIsNone(detect_prefetch(algorithm, 'C[:,b,:]'))

    def test_first_iteration(self):
        algorithm = by_name(MATRIX_TIMES_TENSOR, 'ci-ger', a=400, b=400, c=400, i=8)
        self.assertEqual(first_iteration_levels(algorithm), [(1, 0.125)])
        self.assertEqual(first_iteration_distance(algorithm, 'A', 1), 65283200)
        self.assertEqual(first_iteration_distance(algorithm, 'x', 1), 166400)
        self.assertEqual(first_iteration_levels(self.algorithm), [])


class SetupTests(SimpleTestCase):

    def test_truncated_setup(self):
        algorithm = by_name(MATRIX_TIMES_TENSOR, 'ca-gemv', a=400, b=400, c=400, i=8)
        benchmark, = build_benchmarks(algorithm, CACHE_BYTES, PredictionLevel.CACHE)
        self.assertEqual(benchmark.setup.summary(), [
            ('remote', 816632), ('A[a,:]', 8), ('remote', 163200), ('B[:,:,c]', 3200),
        ])
        self.assertEqual(benchmark.setup.elements, 983040)
        accesses = benchmark.setup.precondition().accesses
        self.assertEqual(accesses[0], RemoteAccess(816632 * 8))
        self.assertIsInstance(accesses[1], OperandAccess)
        self.assertEqual(accesses[1].buffer, 'A')

    def test_all_zero_distances(self):
        setup = build_setup([SetupEntry('X', 10, 0), SetupEntry('Y', 5, 0)], CACHE_BYTES)
        self.assertEqual(len(setup), 0)
        self.assertIsNone(setup.precondition())

    def test_single_operand(self):
        setup = build_setup([SetupEntry('X', 10, 500)], 8000)
        self.assertEqual(setup.summary(), [('X', 10), ('remote', 500)])

    def test_straddling_operand_becomes_remote(self):
        setup = build_setup([SetupEntry('X', 1000, 2000), SetupEntry('Y', 10, 100)], 800)
        self.assertEqual(setup.summary(), [('remote', 15), ('Y', 10), ('remote', 100)])

    def test_distances_are_reproduced(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            sizes = rng.integers(1, 100, size=5)
            distances = [int(rng.integers(0, 50))]
            for size in sizes[:0:-1]:
                distances.insert(0, distances[0] + int(size) + int(rng.integers(0, 100)))
            entries = [SetupEntry(f"op{k}", int(sizes[k]), distances[k]) for k in range(5)]
            setup = build_setup([entries[k] for k in rng.permutation(5)], 10 ** 9)
            for position, item in enumerate(setup.items):
                if not item.remote:
                    after = sum(other.elements for other in setup.items[position + 1:])
                    self.assertEqual(after, distances[int(item.label[2:])])

    def test_truncation_keeps_the_budget(self):
        entries = [SetupEntry(f"op{k}", 300, 1000 * (k + 1)) for k in range(6)]
        setup = build_setup(entries, 8 * 2000)
        self.assertEqual(setup.elements, 2500)
        self.assertEqual(setup.items[0].label, 'remote')

    def test_invalid_distances(self):
        for distance in (-1, float('nan'), float('inf')):
            with self.assertRaises(UnrealizableSetupError):
                build_setup([SetupEntry('X', 1, distance)], CACHE_BYTES)


class BenchmarkTests(SimpleTestCase):

    def test_prefetch_failure_split(self):
        algorithm = by_name(MATRIX_TIMES_TENSOR, 'ca-gemv', a=400, b=400, c=400, i=8)
        base, failure = build_benchmarks(algorithm, CACHE_BYTES, line_bytes=64)
        self.assertEqual((base.variant, base.weight), ('base', 7 / 8))
        self.assertEqual((failure.variant, failure.weight), ('prefetch-failure', 1 / 8))
        self.assertEqual(len(base.setup), 0)
        cache, = build_benchmarks(algorithm, CACHE_BYTES, PredictionLevel.CACHE)
        self.assertEqual(failure.setup.summary(), cache.setup.summary())
        self.assertEqual(base.count, 160000)

    def test_first_iteration_variant(self):
        algorithm = by_name(MATRIX_TIMES_TENSOR, 'ci-ger', a=400, b=400, c=400, i=8)
        first = [b for b in build_benchmarks(algorithm, CACHE_BYTES, line_bytes=64)
                 if b.variant == 'first-iteration']
        self.assertEqual([(b.loop, b.weight) for b in first], [('i', 1 / 8)])

    def test_long_inner_loop_without_line_sharing(self):
        algorithm = by_name('C[a,b] = A[a,i] * B[i,b]', 'b-gemv', a=16, b=10 ** 4, i=16)
        benchmark, = build_benchmarks(algorithm, CACHE_BYTES, line_bytes=64)
        self.assertEqual((benchmark.variant, benchmark.weight), ('base', 1.0))

    def test_weights_sum_to_one_per_node(self):
        spec = parse_spec(TWO_CONTRACTED, dict(a=40, b=40, c=6, i=8, j=30))
        for algorithm in generate_algorithms(spec):
            weights = defaultdict(float)
            for benchmark in build_benchmarks(algorithm, CACHE_BYTES, line_bytes=64):
                self.assertGreater(benchmark.weight, 0)
                weights[benchmark.node] += benchmark.weight
            for node, total in weights.items():
                self.assertAlmostEqual(total, 1.0, places=12, msg=f"{algorithm.name} {node}")

    def test_repeat_level(self):
        algorithm = by_name(MATRIX_TIMES_TENSOR, 'ca-gemv', a=400, b=400, c=400, i=8)
        benchmark, = build_benchmarks(algorithm, CACHE_BYTES, 'repeat')
        self.assertEqual((len(benchmark.setup), benchmark.weight), (0, 1.0))

    def test_copy_benchmarks(self):
        algorithm = by_name(TWO_CONTRACTED, "i'c-gemm", a=4, b=4, c=4, i=3, j=3)
        copies = [b for b in build_benchmarks(algorithm, CACHE_BYTES) if b.node != 'kernel']
        self.assertEqual([(b.node, b.count, b.call.kernel) for b in copies],
                         [('copy A_copy', 12, 'dcopy')])


class PredictionTests(SimpleTestCase):

    def test_weighted_sum(self):
        benchmarks = [MicroBenchmark('kernel', None, Setup(), 7 / 8, 160000),
                      MicroBenchmark('kernel', None, Setup(), 1 / 8, 160000, 'prefetch-failure')]
        t = 2e-6
        self.assertAlmostEqual(predict_contraction(benchmarks, [t, 4.5 * t]),
                               160000 * (7 / 8 + 4.5 / 8) * t)
        self.assertAlmostEqual(predict_contraction(benchmarks[:1], [t]), 160000 * 7 / 8 * t)

    def test_missing_timing(self):
        benchmark = MicroBenchmark('kernel', None, Setup(), 1.0, 10)
        with self.assertRaises(MissingBenchmarkTimingError):
            predict_contraction([benchmark], [])
        with self.assertRaises(MissingBenchmarkTimingError):
            predict_contraction([benchmark], [None])

    def check_against_direct_timing(self, spec):
        runtime = flop_rate_runtime(1e9, overhead=1e-7)
        for algorithm in generate_algorithms(spec):
            with self.subTest(algorithm=algorithm.name):
                sampler = Sampler(SyntheticBackend(runtime))
                predicted = predict_algorithm(sampler, algorithm, CACHE_BYTES, repetitions=1)
                direct = measure_contraction(sampler, algorithm, repetitions=1).get('med')
                self.assertLess(abs(predicted.runtime - direct) / direct, 0.01)

    def test_synthetic_prediction_matches_direct_timing(self):
        spec = parse_spec(MATRIX_TIMES_TENSOR, dict(a=16, b=16, c=16, i=8))
        self.check_against_direct_timing(spec)

    def test_synthetic_prediction_with_copies(self):
        self.check_against_direct_timing(parse_spec(TENSOR_TIMES_MATRIX, dict(i=8, a=16, j=8)))

    def test_faster_kernel_ranks_first(self):
        sampler = Sampler(SyntheticBackend(kernel_rate_runtime({'dgemm': 1e10}, 1e9, overhead=0)))
        spec = parse_spec(MATRIX_TIMES_TENSOR, dict(a=16, b=16, c=16, i=8))
        ranked = rank_contractions(spec, sampler, cache_bytes=CACHE_BYTES, repetitions=1)
        self.assertEqual(len(ranked), 36)
        self.assertEqual([p.algorithm.kernel for p in ranked[:2]], ['gemm', 'gemm'])
        self.assertAlmostEqual(ranked[0].performance, 1e10, delta=1e4)
        runtimes = [prediction.runtime for prediction in ranked]
        self.assertEqual(runtimes, sorted(runtimes))

    def test_equal_rates(self):
        sampler = Sampler(SyntheticBackend(flop_rate_runtime(1e9, overhead=0)))
        spec = parse_spec(MATRIX_TIMES_TENSOR, dict(a=8, b=8, c=8, i=4))
        ranked = rank_contractions(spec, sampler, cache_bytes=CACHE_BYTES, repetitions=1)
        for prediction in ranked:
            self.assertEqual(prediction.flops, spec.flops())
            self.assertAlmostEqual(prediction.runtime, spec.flops() / 1e9, delta=1e-12)

    def test_single_algorithm(self):
        sampler = Sampler(SyntheticBackend(flop_rate_runtime(1e9)))
        ranked = rank_contractions('C[a] = A[a,i] * B[i]; a=32, i=16', sampler,
                                   kernels=('gemv',), cache_bytes=CACHE_BYTES, repetitions=1)
        self.assertEqual([p.algorithm.name for p in ranked], ['gemv'])
        frame = ranking_frame(ranked)
        self.assertEqual(list(frame.columns), RANKING_COLUMNS)
        self.assertEqual(frame['rank'].tolist(), [1])
