import math
from collections import Counter

import numpy as np
from django.test import SimpleTestCase

from kernels.calls import Call
from kernels.costs import blocked_cost, call_flops
from kernels.machines import load_machine
from kernels.signatures import get_kernel
from modelgen.cases import classify
from modelgen.grids import Domain
from modelgen.refinement import generate_model
from modelgen.store import ModelSet
from sampler.backends import SyntheticBackend
from sampler.plans import Sampler
from sampler.stats import SummaryStats
from sampler.synthetic import flop_rate_runtime, kernel_rate_runtime

from .algorithms import (
    ALGORITHMS, FAMILIES, AlgorithmDefinitionError, BlockedAlgorithm, OperandShape, Traversal,
    UnknownAlgorithmError, algorithm_flops, call_sequence, get_algorithm, resolve_algorithms, rule,
    sequence_flops, traversal_steps,
)
from .measurement import expand_inline, measure_algorithm, run_algorithm
from .prediction import (
    BlocksizeRangeError, RuntimeEstimator, UnmodeledCallError, ZeroMeasurementError,
    ZeroRuntimeError, accuracy, algorithm_cost, blocksize_range, export_frame, optimize_blocksize,
    performance_yield, predict, predict_efficiency, predict_performance, predict_runtime,
    rank_algorithms,
)

# median estimates (ms) of triangular inversion, n=800, b=300
TABLE_MS = {
    ('dtrti2', (300,)): 2.64,
    ('dtrmm', (300, 300)): 1.71,
    ('dtrsm', (300, 300)): 2.07,
    ('dtrmm', (200, 600)): 4.15,
    ('dtrsm', (200, 600)): 2.17,
    ('dtrti2', (200,)): 0.85,
}

PREDICTED = SummaryStats(16.18e-3, 16.22e-3, 16.46e-3, 16.25e-3, 95.88e-6)
MEASURED = SummaryStats(16.25e-3, 16.26e-3, 16.25e-3, 16.26e-3, 7.61e-6)
TRINV_COST = 170986800

CONSERVING = ['chol1', 'chol2', 'chol3', 'trinv1', 'trinv2', 'trinv3', 'trinv5', 'trinv6',
              'trinv7', 'dlauum', 'dsygst', 'dtrtri', 'dpotrf']


class TableEstimator:

    def estimate(self, call):
        if any(size == 0 for size in call.sizes.values()):
            return SummaryStats()
        return SummaryStats.constant(TABLE_MS[(call.kernel, tuple(call.sizes.values()))] * 1e-3)


def flops_estimator(rate=1e10):
    return RuntimeEstimator(flop_rate_runtime(rate, overhead=0.0))


class TraversalTests(SimpleTestCase):

    def test_forward(self):
        self.assertEqual(traversal_steps(Traversal.DIAG_SE, 800, 800, 300),
                         [{'k': (0, 300)}, {'k': (300, 600)}, {'k': (600, 800)}])

    def test_backward_processes_partial_block_first(self):
        self.assertEqual(traversal_steps('diag-NW', 800, 800, 300),
                         [{'k': (600, 800)}, {'k': (300, 600)}, {'k': (0, 300)}])

    def test_two_axes(self):
        steps = traversal_steps(Traversal.DIAG_NE, 20, 30, 8)
        self.assertEqual([step['m'] for step in steps], [(16, 20), (8, 16), (0, 8), (0, 0)])
        self.assertEqual([step['n'] for step in steps], [(0, 8), (8, 16), (16, 24), (24, 30)])

    def test_block_larger_than_problem(self):
        self.assertEqual(traversal_steps(Traversal.VERTICAL, 10, 10, 64), [{'m': (0, 10)}])

    def test_empty_and_invalid(self):
        self.assertEqual(traversal_steps(Traversal.DIAG_SE, 0, 0, 8), [])
        with self.assertRaises(ValueError):
            traversal_steps(Traversal.DIAG_SE, 8, 8, 0)


class CallSequenceTests(SimpleTestCase):

    def test_triangular_inversion_table(self):
        calls = call_sequence('trinv1', 800, 300)
        self.assertEqual(
            [(call.name(), tuple(call.sizes.values())) for call in calls],
            [('dtrmm_RLNN', (300, 0)), ('dtrsm_LLNN', (300, 0)), ('dtrti2_LN', (300,)),
             ('dtrmm_RLNN', (300, 300)), ('dtrsm_LLNN', (300, 300)), ('dtrti2_LN', (300,)),
             ('dtrmm_RLNN', (200, 600)), ('dtrsm_LLNN', (200, 600)), ('dtrti2_LN', (200,))],
        )
        self.assertTrue(all(call.values['ldA'] == 800 for call in calls))
        self.assertEqual(calls[4].scalars['alpha'], -1.0)
        # A10 of the last step starts at row 600
        self.assertEqual(calls[6].operands['B'].offset, 600)
        self.assertEqual(calls[8].operands['A'].offset, 600 + 600 * 800)

    def test_qr_invocations(self):
        calls = call_sequence('dgeqrf', 1568, 32)
        kernels = Counter(call.kernel for call in calls if not call.is_pseudo)
        self.assertEqual(sum(kernels.values()), 48 * 39 + 1)
        self.assertEqual(kernels['dcopy'], 48 * 32)
        self.assertEqual(kernels['dtrmm'], 48 * 3)
        self.assertEqual(kernels['dgemm'], 48 * 2)
        pseudo = [call for call in calls if call.is_pseudo]
        self.assertEqual(len(pseudo), 48)
        self.assertEqual(len(pseudo[0].tag['inline']), 32)

    def test_single_step(self):
        calls = call_sequence('chol3', 64, 64)
        self.assertEqual([call.kernel for call in calls], ['dpotf2', 'dtrsm', 'dsyrk'])
        self.assertEqual(calls[0].sizes, {'n': 64})
        self.assertEqual(calls[1].sizes['m'], 0)
        self.assertEqual(calls[2].sizes['n'], 0)

    def test_block_larger_than_problem(self):
        self.assertEqual(len(call_sequence('chol3', 10, 64)), 3)

    def test_zero_size(self):
        self.assertEqual(call_sequence('dpotrf', 0, 8), [])

    def test_rectangular_sizes(self):
        calls = call_sequence('dgetrf', {'m': 100, 'n': 40}, 16)
        self.assertEqual(calls[0].sizes, {'m': 100, 'n': 16})
        with self.assertRaises(ValueError):
            call_sequence('chol1', {'m': 100, 'n': 40}, 16)

    def test_unknown_algorithm(self):
        with self.assertRaises(UnknownAlgorithmError):
            call_sequence('chol9', 100, 10)
        with self.assertRaises(UnknownAlgorithmError):
            get_algorithm('sylv10_n1')

    def test_families(self):
        self.assertEqual(len(FAMILIES['sylv']), 14)
        self.assertEqual([a.name for a in resolve_algorithms(['chol', 'dgetrf'])],
                         ['chol1', 'chol2', 'chol3', 'dgetrf'])
        self.assertEqual(len(ALGORITHMS), 3 + 8 + 6 + 14)

    def test_invalid_definitions(self):
        with self.assertRaises(AlgorithmDefinitionError):
            BlockedAlgorithm('bad', 'dpotrf', Traversal.DIAG_SE,
                             {'A': OperandShape('n', 'n', 'k', 'k')},
                             (rule('dpotf2', 'L', n='q-p', A='A3'),))
        with self.assertRaises(AlgorithmDefinitionError):
            BlockedAlgorithm('bad', 'dpotrf', Traversal.DIAG_SE,
                             {'A': OperandShape('n', 'n', 'k', 'k')},
                             (rule('dpotf2', 'L', n='q-p', A='X11'),))
        with self.assertRaises(AlgorithmDefinitionError):
            rule('dpotf2', 'L', n='q-p', A='A11', B='A22')
        with self.assertRaises(AlgorithmDefinitionError):
            rule('dpotf2', 'L', A='A11')


class FlopCountTests(SimpleTestCase):

    def test_conservation(self):
        for name in CONSERVING:
            algorithm = get_algorithm(name)
            for b in (1, 8, 32, 64, 100):
                for n in range(b, 513):
                    self.assertEqual(
                        algorithm_flops(algorithm, n, b),
                        blocked_cost(algorithm.operation, {'n': n}),
                        f"{name} n={n} b={b}",
                    )

    def test_vectorized_count_matches_sequence(self):
        for name, sizes, b in (('chol2', 100, 24), ('trinv7', 77, 8), ('dsygst', 64, 20),
                               ('dgeqrf', {'m': 90, 'n': 70}, 16), ('dgetrf', {'m': 50, 'n': 80}, 12),
                               ('trinv4', 128, 32)):
            self.assertEqual(algorithm_flops(name, sizes, b),
                             sequence_flops(call_sequence(name, sizes, b)), name)

    def test_small_cholesky_by_hand(self):
        # 1 + 1 + 2 + 1 flops
        self.assertEqual(sequence_flops(call_sequence('chol3', 2, 1)), 5)

    def test_extra_flop_inversions(self):
        for name in ('trinv4', 'trinv8'):
            self.assertGreater(algorithm_flops(name, 256, 32), blocked_cost('dtrtri', {'n': 256}))

    def test_mirror_algorithms(self):
        for k in range(1, 5):
            forward = sorted((c.kernel, call_flops(c)) for c in call_sequence(f"trinv{k}", 256, 32))
            backward = sorted(
                (c.kernel, call_flops(c)) for c in call_sequence(f"trinv{k + 4}", 256, 32)
            )
            self.assertEqual(forward, backward, f"trinv{k}")


class RuntimePredictionTests(SimpleTestCase):

    def test_table_sum(self):
        runtime = predict_runtime(TableEstimator(), call_sequence('trinv1', 800, 300))
        self.assertAlmostEqual(runtime.med * 1e3, 16.22, delta=0.015)
        self.assertEqual(runtime.std, 0.0)

    def test_empty_sequence(self):
        self.assertEqual(predict_runtime(flops_estimator(), []), SummaryStats())

    def test_std_in_quadrature(self):
        class Spread:
            def estimate(self, call):
                return SummaryStats(1.0, 1.0, 1.0, 1.0, float(call.sizes['n']))

        calls = [Call.build('dpotf2', uplo='L', n=3), Call.build('dpotf2', uplo='L', n=4)]
        runtime = predict_runtime(Spread(), calls)
        self.assertAlmostEqual(runtime.std, 5.0)
        self.assertEqual(runtime.med, 2.0)

    def test_additive(self):
        calls = call_sequence('chol2', 300, 64)
        estimator = RuntimeEstimator(flop_rate_runtime(3e9))
        whole = predict_runtime(estimator, calls)
        parts = predict_runtime(estimator, calls[:5]) + predict_runtime(estimator, calls[5:])
        for statistic in ('min', 'med', 'max', 'mean'):
            self.assertAlmostEqual(whole.get(statistic), parts.get(statistic), places=15)

    def test_pseudo_calls_are_free(self):
        calls = call_sequence('dgeqrf', 96, 32)
        self.assertEqual(predict_runtime(flops_estimator(1.0), calls).med,
                         sequence_flops(calls))

    def test_unmodeled_call(self):
        with self.assertRaises(UnmodeledCallError):
            predict_runtime(ModelSet(), call_sequence('chol3', 64, 32))

    def test_unmodeled_row_interchanges_are_skipped(self):
        call = Call.build('dlaswp', n=8, k1=1, k2=4, incx=1)
        self.assertEqual(predict_runtime(ModelSet(), [call]), SummaryStats())


class PerformanceTests(SimpleTestCase):

    def test_derived_statistics(self):
        performance = predict_performance(PREDICTED, TRINV_COST)
        self.assertAlmostEqual(performance.med / 10.54e9, 1.0, delta=0.005)
        self.assertAlmostEqual(performance.min / 10.39e9, 1.0, delta=0.005)
        self.assertAlmostEqual(performance.max / 10.57e9, 1.0, delta=0.005)
        self.assertAlmostEqual(performance.std / 62.09e6, 1.0, delta=0.005)

    def test_mean_without_spread(self):
        runtime = SummaryStats(1.0, 2.0, 3.0, 2.5, 0.0)
        self.assertEqual(predict_performance(runtime, 10).mean, 4.0)

    def test_zero_cost(self):
        self.assertEqual(predict_performance(PREDICTED, 0), SummaryStats())

    def test_zero_runtime(self):
        with self.assertRaises(ZeroRuntimeError):
            predict_performance(SummaryStats(), 100)

    def test_efficiency(self):
        machine = load_machine('sandybridge')
        performance = predict_performance(PREDICTED, TRINV_COST)
        efficiency = predict_efficiency(performance, machine, 1)
        self.assertAlmostEqual(efficiency.med * 100, 50.68, delta=0.3)
        peak = machine.peak(1)
        self.assertAlmostEqual(predict_efficiency(SummaryStats.constant(peak), machine).med, 1.0)
        self.assertEqual(predict_efficiency(SummaryStats(), machine).max, 0.0)


class AccuracyTests(SimpleTestCase):

    def test_relative_errors(self):
        report = accuracy(PREDICTED, MEASURED)
        self.assertAlmostEqual(report.re['med'] * 100, -0.24, delta=0.02)
        self.assertAlmostEqual(report.re['max'] * 100, 1.28, delta=0.02)
        self.assertAlmostEqual(report.err['std'], 95.88e-6 - 7.61e-6)
        self.assertEqual(set(report.re), {'min', 'med', 'max', 'mean', 'std'})
        self.assertAlmostEqual(report.are['std'], (95.88 - 7.61) / 7.61)
        self.assertTrue(all(value >= 0 for value in report.are.values()))

    def test_exact_and_double(self):
        report = accuracy(MEASURED, MEASURED)
        self.assertTrue(all(value == 0 for value in report.err.values()))
        self.assertEqual(accuracy(MEASURED.scaled(2), MEASURED).re['mean'], 1.0)

    def test_zero_measurement(self):
        with self.assertRaises(ZeroMeasurementError):
            accuracy(PREDICTED, SummaryStats())

    def test_frame(self):
        frame = accuracy(PREDICTED, MEASURED).as_frame()
        self.assertEqual(list(frame.columns), ['statistic', 'err', 'RE', 'ARE'])
        self.assertEqual(len(frame), 5)
        self.assertGreater(frame.set_index('statistic').loc['std', 'RE'], 10)
        self.assertFalse(frame['RE'].isna().any())

    def test_narrowed_statistics(self):
        report = accuracy(PREDICTED, MEASURED, statistics=('med',))
        self.assertEqual(list(report.re), ['med'])
        self.assertTrue(report.as_frame().set_index('statistic')['RE'].drop('med').isna().all())


class RankingTests(SimpleTestCase):

    def test_equal_flops_tie(self):
        predictions = rank_algorithms(flops_estimator(), FAMILIES['chol'], 512, 64)
        runtimes = [prediction.runtime.med for prediction in predictions]
        self.assertLess((max(runtimes) - min(runtimes)) / min(runtimes), 1e-9)

    def test_free_syrk_expensive_gemm(self):
        rates = {'dgemm': 1e8, 'dsyrk': math.inf}
        estimator = RuntimeEstimator(kernel_rate_runtime(rates, 1e10, overhead=0.0))
        predictions = rank_algorithms(estimator, FAMILIES['chol'], 512, 64)
        # only chol2 calls dgemm; chol3 leaves the least work to dtrsm
        self.assertEqual([p.algorithm for p in predictions], ['chol3', 'chol1', 'chol2'])

    def test_scaling_invariance(self):
        rates = {'dgemm': 2e10, 'dtrsm': 8e9, 'dtrmm': 9e9, 'dtrti2': 1e9}
        base = kernel_rate_runtime(rates, 5e9)
        names = ['trinv1', 'trinv2', 'trinv3', 'trinv4']
        order = [p.algorithm for p in rank_algorithms(RuntimeEstimator(base), names, 640, 64)]
        scaled = RuntimeEstimator(lambda call: 3.7 * base(call))
        self.assertEqual([p.algorithm for p in rank_algorithms(scaled, names, 640, 64)], order)

    def test_single(self):
        self.assertEqual(len(rank_algorithms(flops_estimator(), ['dpotrf'], 100, 32)), 1)


class BlocksizeTests(SimpleTestCase):

    def test_flop_oracle(self):
        blocksizes = blocksize_range(8, 256, 8)
        for name in ('trinv4', 'dgeqrf'):
            b_pred, sweep = optimize_blocksize(flops_estimator(), name, 256, blocksizes)
            self.assertEqual([b for b, _ in sweep], blocksizes)
            best = min(algorithm_flops(name, 256, b) for b in blocksizes)
            self.assertEqual(algorithm_flops(name, 256, b_pred), best)

    def test_first_minimizer(self):
        b_pred, _ = optimize_blocksize(flops_estimator(), 'chol3', 64, [64, 80, 96])
        self.assertEqual(b_pred, 64)

    def test_single_candidate(self):
        self.assertEqual(optimize_blocksize(flops_estimator(), 'chol1', 100, [24])[0], 24)

    def test_empty_range(self):
        with self.assertRaises(BlocksizeRangeError):
            optimize_blocksize(flops_estimator(), 'chol1', 100, [])
        with self.assertRaises(BlocksizeRangeError):
            blocksize_range(64, 32)

    def test_yield(self):
        self.assertEqual(performance_yield(MEASURED, MEASURED), 1.0)
        self.assertAlmostEqual(performance_yield(MEASURED, MEASURED.scaled(1.25)), 0.8)


class PredictTests(SimpleTestCase):

    def test_end_to_end_with_generated_models(self):
        runtime = flop_rate_runtime(1e10)
        sampler = Sampler(SyntheticBackend(runtime), seed=5)
        calls = call_sequence('chol3', 1024, 128)
        cases = {}
        for call in calls:
            cases.setdefault(call.kernel, set()).add(classify(call))
        models = ModelSet()
        for kernel, found in cases.items():
            domain = Domain(((8, 1024),) * len(get_kernel(kernel).sizes))
            models.add(generate_model(sampler, None, kernel,
                                      sorted(found, key=lambda case: case.label), domain))
        prediction = predict(models, 'chol3', 1024, 128)
        truth = sum(runtime(call) for call in calls if all(call.sizes.values()))
        self.assertAlmostEqual(prediction.runtime.med / truth, 1.0, delta=0.01)

    def test_prediction_fields(self):
        machine = load_machine('sandybridge')
        prediction = predict(flops_estimator(1e9), 'dgeqrf', {'m': 200, 'n': 100}, 32, machine)
        self.assertEqual(prediction.cost, algorithm_cost('dgeqrf', {'m': 200, 'n': 100}))
        self.assertEqual(prediction.pseudo_calls, 3)
        self.assertEqual(prediction.sizes, {'m': 200, 'n': 100})
        self.assertAlmostEqual(prediction.efficiency.med,
                               prediction.performance.med / machine.peak(1))
        frame = export_frame([prediction])
        self.assertEqual(list(frame.columns),
                         ['algorithm', 'n', 'b', 'statistic', 'runtime_s', 'perf_flops_s',
                          'efficiency'])
        self.assertEqual(len(frame), 5)


class MeasurementTests(SimpleTestCase):

    def test_synthetic_measurement(self):
        sampler = Sampler(SyntheticBackend(flop_rate_runtime(1e9, overhead=0.0)), seed=0)
        stats = measure_algorithm(sampler, 'chol3', 256, 64, repetitions=3)
        self.assertAlmostEqual(stats.med, sequence_flops(call_sequence('chol3', 256, 64)) / 1e9)
        self.assertEqual(stats.std, 0.0)

    def test_inline_expansion(self):
        calls = expand_inline(call_sequence('dgeqrf', 64, 32))
        self.assertFalse(any(call.is_pseudo for call in calls))
        self.assertEqual(sum(1 for call in calls if call.kernel == 'daxpy'), 32)


class ReferenceExecutionTests(SimpleTestCase):

    def assert_close(self, actual, expected):
        np.testing.assert_allclose(actual, expected, rtol=1e-8, atol=1e-8 * np.abs(expected).max())

    def test_cholesky(self):
        for name in FAMILIES['chol'] + ['dpotrf']:
            inputs, outputs = run_algorithm(name, 50, 16, seed=1)
            factor = np.tril(outputs['A'])
            self.assert_close(factor @ factor.T, inputs['A'])

    def test_triangular_inversion(self):
        for name in FAMILIES['trinv'] + ['dtrtri']:
            inputs, outputs = run_algorithm(name, 50, 16, seed=2)
            self.assert_close(np.tril(outputs['A']) @ inputs['A'], np.eye(50))

    def test_lauum(self):
        inputs, outputs = run_algorithm('dlauum', 50, 16, seed=3)
        lower = np.tril(inputs['A'])
        self.assert_close(np.tril(outputs['A']), np.tril(lower.T @ lower))

    def test_sygst(self):
        inputs, outputs = run_algorithm('dsygst', 50, 16, seed=4)
        inverse = np.linalg.inv(inputs['L'])
        self.assert_close(np.tril(outputs['A']), np.tril(inverse @ inputs['A'] @ inverse.T))

    def test_lu(self):
        for m, n in ((60, 50), (50, 60), (50, 50)):
            b = 16
            inputs, outputs = run_algorithm('dgetrf', {'m': m, 'n': n}, b, seed=5)
            k = min(m, n)
            permuted = inputs['A'].copy()
            pivots = outputs['ipiv'][:, 0].astype(int)
            for i in range(k):
                # pivots are relative to the first row of their panel
                j = (i // b) * b + pivots[i] - 1
                permuted[[i, j], :] = permuted[[j, i], :]
            lower = np.tril(outputs['A'][:, :k], -1) + np.eye(m, k)
            upper = np.triu(outputs['A'][:k, :])
            self.assert_close(lower @ upper, permuted)

    def test_qr(self):
        for m, n in ((60, 50), (50, 50)):
            inputs, outputs = run_algorithm('dgeqrf', {'m': m, 'n': n}, 16, seed=6)
            expected = np.linalg.qr(inputs['A'], mode='r')
            self.assert_close(np.abs(np.triu(outputs['A'][:n])), np.abs(expected))

    def test_sylvester(self):
        for name in FAMILIES['sylv']:
            inputs, outputs = run_algorithm(name, {'m': 40, 'n': 30}, 8, seed=7)
            x = outputs['C']
            residual = inputs['A'] @ x + x @ inputs['B'] - inputs['C']
            self.assertLess(np.abs(residual).max(), 1e-9 * math.prod(x.shape), name)
