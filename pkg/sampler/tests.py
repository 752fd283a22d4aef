import math

import numpy as np
from django.test import SimpleTestCase

from kernels.calls import Call
from kernels.machines import load_machine

from .backends import (
    BackendError, ReferenceBackend, SyntheticBackend, load_backend, parse_environment,
)
from .calllist import CallListError, format_timing, parse_call_list, run_call_list
from .plans import MeasurementPlan, PlanError, WarmPolicy, run_plan, run_sequence
from .preconditions import (
    CachePrecondition, CacheToucher, OperandAccess, RemoteAccess, ScratchTooSmallError,
    apply_precondition,
)
from .stats import EmptySampleError, SummaryStats, summarize
from .timers import CycleTimer, MonotonicTimer, TimerKind

MEASURED_MS = [16.25, 16.27, 16.26, 16.27, 16.26, 16.26, 16.28, 16.27, 16.26, 16.26]


def gemm(n, name_c='C'):
    return Call.build('dgemm', transA='N', transB='N', m=n, n=n, k=n, C=name_c)


def constant_runtime(seconds):
    return lambda call: seconds


class SummarizeTests(SimpleTestCase):

    def test_algorithm_measurements(self):
        stats = summarize([t * 1e-3 for t in MEASURED_MS])
        self.assertAlmostEqual(stats.min, 16.25e-3)
        self.assertAlmostEqual(stats.med, 16.26e-3)
        self.assertAlmostEqual(stats.max, 16.28e-3)
        self.assertAlmostEqual(stats.mean, 16.264e-3)
        # population std of the printed (rounded) values
        self.assertAlmostEqual(stats.std, 8.0e-6, delta=0.1e-6)

    def test_single_value(self):
        self.assertEqual(summarize([0.5]), SummaryStats(0.5, 0.5, 0.5, 0.5, 0.0))

    def test_population_std(self):
        stats = summarize([1.0, 2.0, 3.0])
        self.assertEqual(stats.mean, 2.0)
        self.assertAlmostEqual(stats.std, math.sqrt(2 / 3))

    def test_even_median(self):
        self.assertEqual(summarize([4.0, 1.0, 3.0, 2.0]).med, 2.5)

    def test_empty(self):
        with self.assertRaises(EmptySampleError):
            summarize([])

    def test_ordering_on_random_samples(self):
        rng = np.random.default_rng(11)
        for _ in range(200):
            sample = rng.lognormal(size=int(rng.integers(1, 30)))
            self.assertTrue(summarize(sample).is_ordered())
        self.assertTrue(summarize([0.1] * 7).is_ordered())

    def test_sum_adds_std_in_quadrature(self):
        total = SummaryStats(1, 1, 1, 1, 3) + SummaryStats(2, 2, 2, 2, 4)
        self.assertEqual(total, SummaryStats(3, 3, 3, 3, 5))


class RunPlanTests(SimpleTestCase):

    def test_reference_timings(self):
        result = run_plan(MeasurementPlan([gemm(48)], repetitions=5), ReferenceBackend())
        self.assertEqual(len(result.timings[0]), 5)
        self.assertTrue(all(t > 0 for t in result.timings[0]))

    def test_shuffled_double_execution_trace(self):
        backend = SyntheticBackend(constant_runtime(1e-3))
        calls = [gemm(8), Call.build('dtrsm', side='L', uplo='L', transA='N', diag='N', m=8, n=8)]
        result = run_plan(MeasurementPlan(calls, repetitions=3, shuffle=True, seed=5), backend)
        events = [event for event, _ in backend.trace]
        self.assertEqual(events.count('timed'), 6)
        self.assertEqual(events.count('run'), 6)
        for (first, warm_name), (second, timed_name) in zip(backend.trace[::2], backend.trace[1::2]):
            self.assertEqual((first, second), ('run', 'timed'))
            self.assertEqual(warm_name, timed_name)
        self.assertEqual(sorted(result.order), [(c, r) for c in range(2) for r in range(3)])

    def test_synthetic_clock(self):
        backend = SyntheticBackend(constant_runtime(1e-3))
        result = run_plan(MeasurementPlan([gemm(8)], repetitions=4), backend)
        self.assertEqual(result.timings, [[1e-3] * 4])
        self.assertAlmostEqual(backend.clock(), 8e-3)

    def test_seeded_shuffle_is_reproducible(self):
        calls = [gemm(8), gemm(16), gemm(24)]
        runtime = lambda call: call.sizes['m'] * 1e-6
        first = run_plan(MeasurementPlan(calls, repetitions=4, seed=9), SyntheticBackend(runtime))
        second = run_plan(MeasurementPlan(calls, repetitions=4, seed=9), SyntheticBackend(runtime))
        self.assertEqual(first.order, second.order)
        self.assertEqual(first.timings, second.timings)

    def test_cold_policy_flushes(self):
        backend = SyntheticBackend(constant_runtime(1e-3), scratch_bytes=1 << 20)
        run_plan(MeasurementPlan([gemm(8)], repetitions=2, warm_policy=WarmPolicy.COLD), backend)
        self.assertEqual(backend.toucher.log, [('remote', 1 << 20)] * 2)
        self.assertNotIn('run', [event for event, _ in backend.trace])

    def test_cycle_timer_needs_machine(self):
        with self.assertRaises(ValueError):
            run_plan(MeasurementPlan([gemm(8)], timer=TimerKind.CYCLES),
                     SyntheticBackend(constant_runtime(1e-3)))

    def test_cycle_timer_quantizes(self):
        machine = load_machine('sandybridge')
        result = run_plan(MeasurementPlan([gemm(8)], repetitions=1, timer=TimerKind.CYCLES),
                          SyntheticBackend(constant_runtime(1e-3)), machine)
        self.assertAlmostEqual(result.timings[0][0] * machine.base_frequency, 2.6e6)

    def test_invalid_repetitions(self):
        with self.assertRaises(PlanError):
            MeasurementPlan([gemm(8)], repetitions=0)

    def test_run_sequence(self):
        backend = SyntheticBackend(lambda call: call.sizes['m'] * 1e-3)
        runtimes = run_sequence([gemm(1), gemm(2)], backend, repetitions=2)
        self.assertEqual(len(runtimes), 2)
        self.assertAlmostEqual(runtimes[0], 3e-3)


class PreconditionTests(SimpleTestCase):

    def setUp(self):
        self.backend = ReferenceBackend(scratch_bytes=1 << 20)
        self.backend.store.allocate('A', 64)
        self.backend.store.allocate('C', 64)

    def test_empty_is_noop(self):
        apply_precondition(CachePrecondition(), self.backend.toucher)
        self.assertEqual(self.backend.toucher.log, [])
        self.assertEqual(self.backend.toucher.touched_bytes, 0)

    def test_remote_bytes(self):
        cache = 512 * 1024
        apply_precondition([RemoteAccess(cache * 5 // 4)], self.backend.toucher)
        self.assertEqual(self.backend.toucher.touched_bytes, cache * 5 // 4)

    def test_order_preserved(self):
        precondition = CachePrecondition([
            OperandAccess('C', rows=8, cols=8, ld=8), RemoteAccess(4096),
            OperandAccess('A', rows=4, cols=2, ld=8),
        ])
        self.backend.apply_precondition(precondition)
        self.assertEqual(self.backend.toucher.log,
                         [('operand', 'C'), ('remote', 4096), ('operand', 'A')])

    def test_operand_touch_keeps_values(self):
        self.backend.store['A'][:] = np.arange(64)
        self.backend.toucher.touch(OperandAccess('A', offset=3, rows=2, cols=3, ld=8))
        np.testing.assert_array_equal(self.backend.store['A'], np.arange(64))

    def test_scratch_too_small(self):
        toucher = CacheToucher(self.backend.store, 1024)
        with self.assertRaises(ScratchTooSmallError):
            toucher.touch(RemoteAccess(2048))

    def test_remote_size_positive(self):
        with self.assertRaises(ValueError):
            RemoteAccess(0)

    def test_access_of_call(self):
        call = Call.build('dgemv', trans='N', m=3, n=4, ldA=10, incx=5)
        self.assertEqual(OperandAccess.of(call, 'A'), OperandAccess('A', 0, 3, 4, 10))
        self.assertEqual(OperandAccess.of(call, 'x'), OperandAccess('x', 0, 1, 4, 5))


class CallListTests(SimpleTestCase):

    SCRIPT = '\n'.join(
        ['dmalloc A 1000000', 'dmalloc B 1000000', 'dmalloc C 1000000']
        + ['dgemm N N 1000 1000 1000 1 A 1000 B 1000 1 C 1000'] * 5
        + ['go']
    )

    def test_sampler_script(self):
        backend = SyntheticBackend(constant_runtime(0.055))
        results = run_call_list(self.SCRIPT, backend, MonotonicTimer())
        self.assertEqual(len(results), 5)
        self.assertEqual(results[0][0].sizes, {'m': 1000, 'n': 1000, 'k': 1000})
        self.assertEqual(format_timing(results[0][1], 2.6e9).split('\t')[0], '143000000')

    def test_adhoc_buffers_and_implicit_go(self):
        script = 'daxpy 1000 1.5 [1000] 1 [1000] 1  # ad hoc\n' * 2
        results = run_call_list(script, ReferenceBackend(), MonotonicTimer())
        self.assertEqual(len(results), 2)
        first, second = (call.operands['x'].buffer for call, _ in results)
        self.assertNotEqual(first, second)

    def test_parse_without_running(self):
        calls = parse_call_list(self.SCRIPT)
        self.assertEqual(len(calls), 5)
        self.assertEqual(calls[0].kernel, 'dgemm')
        with self.assertRaises(CallListError) as context:
            parse_call_list('dmalloc A 100\ndgemm N N 10 10\n')
        self.assertEqual(context.exception.line_number, 2)

    def test_empty(self):
        self.assertEqual(run_call_list('# nothing\n\n', ReferenceBackend(), MonotonicTimer()), [])

    def test_malformed_line_names_line_number(self):
        script = 'dmalloc A 100\ndgemm N N 10 10\n'
        with self.assertRaises(CallListError) as context:
            run_call_list(script, ReferenceBackend(), MonotonicTimer())
        self.assertEqual(context.exception.line_number, 2)

    def test_undeclared_buffer(self):
        with self.assertRaises(CallListError):
            run_call_list('ddot 10 X 1 [10] 1', ReferenceBackend(), MonotonicTimer())

    def test_buffer_too_small(self):
        with self.assertRaises(CallListError):
            run_call_list('dmalloc X 5\nddot 10 X 1 [10] 1', ReferenceBackend(), MonotonicTimer())


class BackendTests(SimpleTestCase):

    def test_unknown_backend(self):
        with self.assertRaises(BackendError):
            load_backend('openblas')

    def test_missing_library(self):
        with self.assertRaises(BackendError):
            load_backend('/nonexistent/libblas.so')

    def test_environment_template(self):
        self.assertEqual(parse_environment('OPENBLAS_NUM_THREADS={threads}', 4),
                         {'OPENBLAS_NUM_THREADS': '4'})

    def test_cycle_timer(self):
        timer = CycleTimer(2e9)
        self.assertEqual(timer.cycles(1e-3), 2000000)
