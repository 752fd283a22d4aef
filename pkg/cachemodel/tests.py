import math
from collections import OrderedDict

import numpy as np
from django.test import SimpleTestCase

from kernels.calls import Call
from kernels.machines import load_machine
from predictor.algorithms import call_sequence
from predictor.measurement import expand_inline
from sampler.backends import SyntheticBackend
from sampler.plans import Sampler
from sampler.preconditions import OperandAccess, RemoteAccess
from sampler.synthetic import flop_rate_runtime

from .distances import (
    AccessHistory, UnknownOperandError, access_distance, overlaps, region_bytes, split_records,
)
from .estimates import (
    ESTIMATE_COLUMNS, MissingTimingError, SmoothingParams, ZeroWeightError, association,
    calls_per_step, combined_estimates, estimate_sequence, in_cache_setup, initial_estimate,
    measure_timings, out_of_cache_setup, smooth_weights,
)


def vector_call(kernel, n, x, y):
    return Call.build(kernel, n=n, x=x, y=y)


def matrix_call(buffer, n):
    return Call.build('dtrti2', uplo='L', diag='N', n=n, A=buffer)


def brute_force_distance(calls, index, operand):
    """Sum over the full history, found by a forward pass: buffers only, no splitting"""
    target = calls[index].values[operand].buffer
    accessed = [
        [(call.values[name].buffer, OperandAccess.of(call, name).nbytes) for name in call.operands]
        for call in calls[:index]
    ]
    last = max((j for j, batch in enumerate(accessed) if any(b == target for b, _ in batch)),
               default=None)
    if last is None:
        return None
    own = sum(nbytes for buffer, nbytes in accessed[last] if buffer != target)
    return own + sum(nbytes for batch in accessed[last + 1:] for _, nbytes in batch)


def signature_timings(calls, runtime):
    return {call.signature(): runtime(call) for call in calls if all(call.sizes.values())}


class AccessDistanceTests(SimpleTestCase):
    """Backward scan over the access history"""

    def test_adjacent_reuse_counts_only_other_regions(self):
        calls = [vector_call('daxpy', 100, 'X', 'Y'), vector_call('ddot', 100, 'Y', 'Z')]
        self.assertEqual(access_distance(calls, 1, 'x', cache_bytes=10 ** 6), 800)

    def test_first_access_falls_back_to_total_size(self):
        calls = [vector_call('daxpy', 100, 'X', 'Y'), vector_call('ddot', 100, 'Y', 'Z')]
        self.assertEqual(access_distance(calls, 1, 'y', cache_bytes=10 ** 6), 2400)
        self.assertEqual(access_distance(calls, 1, 'y', 10 ** 6, total_bytes=123), 123)

    def test_three_call_history(self):
        calls = [
            vector_call('dcopy', 10, 'S', 'T'),
            vector_call('daxpy', 20, 'R', 'T'),
            vector_call('ddot', 30, 'P', 'Q'),
            vector_call('ddot', 10, 'T', 'P'),
        ]
        expected = 8 * 30 * 2 + 8 * 20
        self.assertEqual(access_distance(calls, 3, 'x', cache_bytes=10 ** 6), expected)
        self.assertEqual(brute_force_distance(calls, 3, 'x'), expected)

    def test_matches_brute_force_scan(self):
        rng = np.random.default_rng(3)
        buffers = ['P', 'Q', 'R', 'S', 'T']
        for _ in range(20):
            calls = [
                vector_call(str(rng.choice(['daxpy', 'ddot', 'dcopy'])), int(rng.integers(1, 50)),
                            *rng.choice(buffers, size=2, replace=False).tolist())
                for _ in range(8)
            ]
            history = AccessHistory(calls, cache_bytes=10 ** 9)
            for index, call in enumerate(calls):
                for operand in call.operands:
                    expected = brute_force_distance(calls, index, operand)
                    if expected is None:
                        expected = history.total_bytes
                    self.assertEqual(history.distance(index, operand), expected)

    def test_history_bound(self):
        calls = [vector_call('ddot', 10, 'A', 'B')] + [
            vector_call('ddot', 10, 'C', 'D') for _ in range(3)
        ] + [vector_call('ddot', 10, 'A', 'E')]
        self.assertEqual(access_distance(calls, 4, 'x', 10 ** 6), 3 * 160 + 80)
        self.assertEqual(access_distance(calls, 4, 'x', 10 ** 6, history=3, total_bytes=7), 7)

    def test_disjoint_blocks_of_one_buffer(self):
        top = OperandAccess('A', 0, 10, 10, 20)
        bottom = OperandAccess('A', 10, 10, 10, 20)
        right = OperandAccess('A', 200, 20, 10, 20)
        self.assertFalse(overlaps(top, bottom))
        self.assertTrue(overlaps(top, OperandAccess('A', 5, 10, 1, 20)))
        self.assertTrue(overlaps(right, OperandAccess('A', 0, 20, 20, 20)))
        self.assertFalse(overlaps(top, OperandAccess('B', 0, 10, 10, 20)))

    def test_unknown_operand(self):
        calls = [vector_call('ddot', 10, 'A', 'B')]
        with self.assertRaises(UnknownOperandError):
            access_distance(calls, 0, 'C', 10 ** 6)
        with self.assertRaises(IndexError):
            access_distance(calls, 1, 'x', 10 ** 6)

    def test_region_bytes_rounds_to_lines(self):
        self.assertEqual(region_bytes(OperandAccess('A', 0, 3, 2, 100)), 48)
        self.assertEqual(region_bytes(OperandAccess('A', 0, 3, 2, 100), line_bytes=64), 128)
        self.assertEqual(region_bytes(OperandAccess('x', 0, 1, 4, 100), line_bytes=64), 256)
        self.assertEqual(region_bytes(OperandAccess('A', 0, 0, 2, 100), line_bytes=64), 0)


class SplitRecordsTests(SimpleTestCase):

    def test_small_output_of_large_product_is_split(self):
        call = Call.build('dgemm', transA='T', transB='N', m=32, n=1000, k=2000)
        records = split_records(call, cache_bytes=6 * 2 ** 20)
        self.assertEqual([(r.operand, r.part) for r in records], [('A', 0), ('B', 0), ('C', 1)])
        following = Call.build('dtrmm', side='R', uplo='U', transA='N', diag='N', m=32, n=1000,
                               A='T', B='C')
        self.assertEqual(access_distance([call, following], 1, 'B', 6 * 2 ** 20), 0)
        self.assertEqual(
            access_distance([call, following], 1, 'B', 2 ** 30), 8 * (32 * 2000 + 2000 * 1000),
        )

    def test_equal_sizes_not_split(self):
        call = vector_call('daxpy', 10 ** 6, 'X', 'Y')
        self.assertEqual({r.part for r in split_records(call, cache_bytes=1024)}, {0})

    def test_threshold_rule(self):
        # output = inputs / 8, inputs = 2 x cache
        call = Call.build('dgemv', trans='N', m=7, n=7)
        records = split_records(call, cache_bytes=224)
        self.assertEqual([r.part for r in records if r.operand == 'y'], [1])
        self.assertEqual({r.part for r in split_records(call, cache_bytes=448)}, {0})
        self.assertEqual({r.part for r in split_records(call, 224, threshold=0.1)}, {0})


class AssociationTests(SimpleTestCase):

    def setUp(self):
        self.r = np.random.default_rng(11).uniform(-2.0, 1.0, 10 ** 4)

    def test_origin_and_limits(self):
        self.assertEqual(float(association(0.0)), 0.0)
        self.assertAlmostEqual(float(association(0.5)), math.tanh(2), places=12)
        self.assertAlmostEqual(float(association(-0.5)), math.tanh(-1), places=12)
        self.assertAlmostEqual(float(association(50.0)), 1.0)

    def test_sign_monotonicity_and_bound(self):
        f = association(self.r)
        self.assertTrue(np.all(np.sign(f) == np.sign(self.r)))
        self.assertTrue(np.all(np.diff(association(np.sort(self.r))) >= 0))
        self.assertTrue(np.all(np.abs(f) < 1))

    def test_tanh_share(self):
        s_ic, s_oc = smooth_weights([1000.0], [500.0], cache_bytes=1000)
        self.assertAlmostEqual(s_ic, 982.014, places=2)
        self.assertAlmostEqual(s_oc, 1000 - s_ic, places=12)

    def test_zero_distance_half_split(self):
        self.assertEqual(smooth_weights([64.0], [1000.0], cache_bytes=1000), (32.0, 32.0))

    def test_mass_conservation(self):
        rng = np.random.default_rng(5)
        for _ in range(100):
            sizes = rng.uniform(0, 1e6, 4)
            distances = rng.uniform(0, 4e6, 4)
            s_ic, s_oc = smooth_weights(sizes, distances, 2e6)
            self.assertLess(abs(s_ic + s_oc - sizes.sum()), 1e-12 * sizes.sum())

    def test_hard_rule_limit(self):
        r = self.r[np.abs(self.r) >= 1e-3]
        sizes = np.full(r.shape, 8.0)
        distances = (1 - r) * 1e6
        sharp = smooth_weights(sizes, distances, 1e6, SmoothingParams(1e6, 1e6))
        hard = smooth_weights(sizes, distances, 1e6, hard=True)
        self.assertLess(abs(sharp[0] - hard[0]), 1e-6 * sizes.sum())

    def test_parameters_must_be_positive(self):
        with self.assertRaises(ValueError):
            SmoothingParams(0, 2)
        with self.assertRaises(ValueError):
            SmoothingParams(4, -1)
        self.assertEqual(SmoothingParams.from_settings(), SmoothingParams(4.0, 2.0))


class InitialEstimateTests(SimpleTestCase):

    def test_weighting(self):
        self.assertEqual(initial_estimate(3, 1, 1, 5), 2.0)
        self.assertEqual(initial_estimate(7, 0, 1.5, 9.0), 1.5)
        self.assertEqual(initial_estimate(2, 2, 1.0, 3.0), 2.0)

    def test_bounds(self):
        rng = np.random.default_rng(2)
        for _ in range(200):
            s_ic, s_oc, t_ic, t_oc = rng.uniform(0.01, 10, 4)
            estimate = initial_estimate(s_ic, s_oc, t_ic, t_oc)
            self.assertLessEqual(min(t_ic, t_oc) - 1e-12, estimate)
            self.assertLessEqual(estimate, max(t_ic, t_oc) + 1e-12)

    def test_zero_weights(self):
        with self.assertRaises(ZeroWeightError):
            initial_estimate(0, 0, 1, 2)

    def test_monotone_in_access_distance(self):
        rng = np.random.default_rng(9)
        for _ in range(200):
            sizes = rng.uniform(1, 1e5, 3)
            distances = rng.uniform(0, 3e6, 3)
            t_ic, t_oc = sorted(rng.uniform(1e-6, 1e-3, 2))
            before = initial_estimate(*smooth_weights(sizes, distances, 1e6), t_ic, t_oc)
            distances[rng.integers(3)] += rng.uniform(0, 1e6)
            after = initial_estimate(*smooth_weights(sizes, distances, 1e6), t_ic, t_oc)
            self.assertGreaterEqual(after, before - 1e-15)


class LruOracleTests(SimpleTestCase):
    """Hard association against a fully associative LRU cache of whole operands"""

    T_IC, T_OC = 1.0, 5.0

    def lru_hits(self, buffers, size, capacity):
        cache = OrderedDict()
        hits = []
        for buffer in buffers:
            hits.append(buffer in cache)
            cache.pop(buffer, None)
            cache[buffer] = size
            while sum(cache.values()) > capacity:
                cache.popitem(last=False)
        return hits

    def check(self, buffers, factor):
        n = 32
        size = 8 * n * n
        calls = [matrix_call(buffer, n) for buffer in buffers]
        ic = {calls[0].signature(): self.T_IC}
        oc = {calls[0].signature(): self.T_OC}
        estimates = estimate_sequence(
            calls, ic, oc, cache_bytes=factor * size, hard=True, total_bytes=100 * size,
        )
        expected = [self.T_IC if hit else self.T_OC
                    for hit in self.lru_hits(buffers, size, factor * size)]
        self.assertEqual([e.t_est for e in estimates.estimates], expected)

    def test_alternating_operands(self):
        self.check(['P', 'Q'] * 5, 2.5)

    def test_cycle_of_three_that_fits(self):
        self.check(['P', 'Q', 'R'] * 4, 3.5)

    def test_cycle_of_three_that_thrashes(self):
        self.check(['P', 'Q', 'R'] * 4, 1.5)


class CombinedEstimateTests(SimpleTestCase):

    def setUp(self):
        self.machine = load_machine('sandybridge')
        self.runtime = flop_rate_runtime(1e9, overhead=1e-7)

    def timings(self, algorithm, n, b, scale=1.0):
        calls = expand_inline(call_sequence(algorithm, n, b))
        ic = signature_timings(calls, self.runtime)
        return ic, {key: scale * value for key, value in ic.items()}

    def test_equal_timings_sum_up(self):
        ic, oc = self.timings('chol3', 64, 16)
        estimates = combined_estimates('chol3', 64, 16, ic, oc, self.machine)
        calls = call_sequence('chol3', 64, 16)
        expected = sum(self.runtime(call) for call in calls if all(call.sizes.values()))
        self.assertAlmostEqual(estimates.total, expected, delta=1e-12 * expected)
        self.assertEqual(len(estimates), len(calls))

    def test_estimates_within_timing_bounds(self):
        ic, oc = self.timings('trinv3', 256, 32, scale=3.0)
        tiny = load_machine('harpertown')
        for hard in (False, True):
            estimates = combined_estimates('trinv3', 256, 32, ic, oc, tiny, hard=hard)
            for estimate in estimates.estimates:
                if estimate.t_est:
                    t_ic = ic[estimate.call.signature()]
                    self.assertLessEqual(t_ic - 1e-15, estimate.t_est)
                    self.assertLessEqual(estimate.t_est, 3 * t_ic + 1e-15)

    def test_pseudo_calls_replaced_by_inline_calls(self):
        ic, oc = self.timings('dgeqrf', 200, 32)
        estimates = combined_estimates('dgeqrf', 200, 32, ic, oc, self.machine)
        self.assertEqual(len(estimates), len(expand_inline(call_sequence('dgeqrf', 200, 32))))
        self.assertFalse(any(e.call.is_pseudo for e in estimates.estimates))

    def test_missing_timing(self):
        ic, oc = self.timings('chol3', 64, 16)
        with self.assertRaises(MissingTimingError):
            combined_estimates('chol3', 64, 16, {}, oc, self.machine)

    def test_history_is_one_step(self):
        calls = call_sequence('chol3', 64, 16)
        self.assertEqual(calls_per_step('chol3', 64, 16, calls), math.ceil(len(calls) / 4))

    def test_export_frame(self):
        ic, oc = self.timings('chol1', 48, 16)
        frame = combined_estimates('chol1', 48, 16, ic, oc, self.machine).as_frame()
        self.assertEqual(list(frame.columns), ESTIMATE_COLUMNS)
        self.assertEqual(list(frame['index']), list(range(len(frame))))
        self.assertTrue((frame['s_ic'] >= 0).all())


class SetupTests(SimpleTestCase):

    def test_in_cache_setup_loads_input_operands(self):
        call = Call.build('dgemm', transA='N', transB='N', m=8, n=8, k=8)
        precondition = in_cache_setup(call)
        self.assertEqual([access.buffer for access in precondition], ['A', 'B'])

    def test_out_of_cache_setup_exceeds_cache(self):
        machine = load_machine('sandybridge')
        precondition = out_of_cache_setup(Call.build('ddot', n=8), machine)
        self.assertEqual(list(precondition), [RemoteAccess(2 * machine.cache_bytes)])
        self.assertGreater(precondition.nbytes, machine.cache_bytes)

    def test_measure_timings(self):
        runtime = flop_rate_runtime(1e9)
        sampler = Sampler(SyntheticBackend(runtime), seed=0)
        calls = call_sequence('chol3', 64, 16)
        ic, oc = measure_timings(sampler, calls, 'sandybridge', repetitions=3)
        expected = signature_timings(calls, runtime)
        self.assertEqual(set(ic), set(expected))
        for key, value in expected.items():
            self.assertAlmostEqual(ic[key], value)
            self.assertAlmostEqual(oc[key], value)
