import numpy as np
from django.test import SimpleTestCase

from .buffers import BufferStore
from .calls import BindingError, Call, Operand
from .costs import (
    UndefinedIntensityError, arithmetic_intensity, attained_bandwidth, blocked_cost,
    compute_efficiency, data_volume, flop_count, min_data_movement, optimal_runtime,
    performance,
)
from .machines import MachineSpecError, available_machines, load_machine, roofline_limit
from .reference import SingularMatrixError, execute
from .signatures import KERNELS, InvalidFlagError, UnknownKernelError, get_kernel


def make_store(**arrays):
    """Store each array column-major in a buffer of its own name"""
    store = BufferStore()
    for name, array in arrays.items():
        array = np.atleast_1d(np.asarray(array, dtype=float))
        store.allocate(name, array.size)[:] = array.ravel(order='F')
    return store


def as_matrix(store, name, rows, cols):
    return store[name][:rows * cols].reshape((rows, cols), order='F').copy()


class FlopCountTests(SimpleTestCase):

    def test_dgemm_cube(self):
        self.assertEqual(flop_count('dgemm', {'m': 1000, 'n': 1000, 'k': 1000}, 'NN'), 2 * 10**9)

    def test_dtrsm_both_sides(self):
        sizes = {'m': 256, 'n': 256}
        self.assertEqual(flop_count('dtrsm', sizes, 'LLNN'), 16777216)
        self.assertEqual(flop_count('dtrsm', sizes, 'RLNN'), 16777216)

    def test_dtrsm_side_symmetry(self):
        rng = np.random.default_rng(3)
        for m, n in rng.integers(0, 300, size=(20, 2)):
            left = flop_count('dtrsm', {'m': int(m), 'n': int(n)}, 'LLNN')
            right = flop_count('dtrsm', {'m': int(n), 'n': int(m)}, 'RLNN')
            self.assertEqual(left, right)

    def test_dcopy_is_free(self):
        self.assertEqual(flop_count('dcopy', {'n': 5000}), 0)

    def test_cholesky_cost(self):
        self.assertEqual(flop_count('dpotf2', {'n': 800}, 'L'), 170986800)
        self.assertEqual(blocked_cost('dpotrf', {'n': 800}), 170986800)

    def test_qr_rounds_to_integer(self):
        # 2 * 5**2 * (7 - 5/3) = 266.67
        self.assertEqual(flop_count('dgeqr2', {'m': 7, 'n': 5}), 267)
        self.assertEqual(flop_count('dgeqr2', {'m': 5, 'n': 7}), 267)

    def test_flag_dict_and_string_agree(self):
        flags = {'side': 'R', 'uplo': 'L', 'transA': 'T', 'diag': 'N'}
        sizes = {'m': 30, 'n': 20}
        self.assertEqual(flop_count('dtrmm', sizes, flags), flop_count('dtrmm', sizes, 'RLTN'))

    def test_unknown_kernel(self):
        with self.assertRaises(UnknownKernelError):
            flop_count('dfoo', {'n': 1})

    def test_invalid_flag(self):
        with self.assertRaises(InvalidFlagError):
            flop_count('dgemm', {'m': 1, 'n': 1, 'k': 1}, {'transA': 'X', 'transB': 'N'})


class DataMovementTests(SimpleTestCase):

    def test_ddot(self):
        self.assertEqual(min_data_movement('ddot', {'n': 1000}), 2000)

    def test_dgemm_square(self):
        n = 300
        self.assertEqual(min_data_movement('dgemm', {'m': n, 'n': n, 'k': n}, 'NN'), 4 * n * n)

    def test_all_zero_sizes(self):
        for kernel in KERNELS.values():
            flags = {flag.name: flag.values[0] for flag in kernel.flags}
            sizes = {name: 0 for name in kernel.size_names}
            self.assertEqual(min_data_movement(kernel, sizes, flags), 0, kernel.name)

    def test_movement_bounds_volume(self):
        rng = np.random.default_rng(7)
        for kernel in KERNELS.values():
            for _ in range(10):
                flags = {flag.name: str(rng.choice(flag.values)) for flag in kernel.flags}
                sizes = {name: int(rng.integers(0, 200)) for name in kernel.size_names}
                # reflector blocks need k <= the reflector length
                if kernel.name == 'dlarft':
                    sizes['k'] = min(sizes['k'], sizes['n'])
                if kernel.name == 'dlarfb':
                    sizes['k'] = min(sizes['k'], sizes['m' if flags['side'] == 'L' else 'n'])
                volume = data_volume(kernel, sizes, flags)
                movement = min_data_movement(kernel, sizes, flags)
                self.assertGreaterEqual(volume, 0, kernel.name)
                self.assertGreaterEqual(movement, volume, kernel.name)
                self.assertGreaterEqual(flop_count(kernel, sizes, flags), 0, kernel.name)


class IntensityTests(SimpleTestCase):

    def test_ddot(self):
        self.assertEqual(arithmetic_intensity('ddot', {'n': 12345}), 1 / 8)

    def test_dgemm_grows_linearly(self):
        for n in (16, 160, 1600):
            intensity = arithmetic_intensity('dgemm', {'m': n, 'n': n, 'k': n}, 'NN')
            self.assertAlmostEqual(intensity, n / 16)

    def test_dgemv(self):
        intensity = arithmetic_intensity('dgemv', {'m': 1000, 'n': 1000}, 'N')
        self.assertAlmostEqual(intensity, 0.25, places=2)

    def test_zero_movement(self):
        with self.assertRaises(UndefinedIntensityError):
            arithmetic_intensity('dcopy', {'n': 0})


class MetricTests(SimpleTestCase):

    def setUp(self):
        self.machine = load_machine('sandybridge')

    def test_peaks(self):
        self.assertAlmostEqual(self.machine.peak(1), 20.8e9)
        self.assertAlmostEqual(self.machine.peak(8), 166.4e9)
        haswell = load_machine('haswell')
        self.assertAlmostEqual(haswell.peak(1), 52.8e9)
        self.assertAlmostEqual(haswell.peak(12), 480e9)

    def test_roofline(self):
        measured = 16.25e9
        self.assertEqual(roofline_limit(self.machine, 0.0), 0.0)
        self.assertAlmostEqual(roofline_limit(self.machine, 62.5, bandwidth=measured), 20.8e9)
        crossing = self.machine.peak(1) / measured
        self.assertAlmostEqual(crossing, 1.28)
        self.assertAlmostEqual(
            roofline_limit(self.machine, crossing, bandwidth=measured), measured * crossing
        )

    def test_derived_metrics(self):
        cost = flop_count('dgemm', {'m': 1000, 'n': 1000, 'k': 1000}, 'NN')
        perf = performance(cost, 0.2)
        self.assertAlmostEqual(perf, 10e9)
        self.assertAlmostEqual(compute_efficiency(perf, self.machine), 10 / 20.8)
        self.assertAlmostEqual(optimal_runtime(cost, self.machine), 2e9 / 20.8e9)
        self.assertAlmostEqual(attained_bandwidth(1000, 1e-6), 8e9)

    def test_shipped_machines_load(self):
        self.assertEqual(
            available_machines(),
            ['broadwell', 'harpertown', 'haswell', 'ivybridge', 'sandybridge'],
        )
        for name in available_machines():
            machine = load_machine(name)
            self.assertGreater(machine.cache_bytes, 0)

    def test_unknown_machine(self):
        with self.assertRaises(MachineSpecError):
            load_machine('pentium')


class DegreeTests(SimpleTestCase):

    def test_dtrsm(self):
        self.assertEqual(get_kernel('dtrsm').degrees({'side': 'L'}), {'m': 2, 'n': 1})
        self.assertEqual(get_kernel('dtrsm').degrees({'side': 'R'}), {'m': 1, 'n': 2})

    def test_min_counts_like_a_sum(self):
        self.assertEqual(get_kernel('dgetf2').degrees(), {'m': 2, 'n': 2})

    def test_constant_kernels(self):
        self.assertEqual(get_kernel('dcopy').degrees(), {'n': 1})
        self.assertEqual(get_kernel('dlaswp').degrees(), {'n': 0, 'k1': 0, 'k2': 0})


class ExecuteTests(SimpleTestCase):

    def setUp(self):
        self.rng = np.random.default_rng(42)

    def test_dgemm_identity(self):
        c0 = self.rng.random((2, 2))
        store = make_store(A=np.eye(2), B=c0, C=np.full((2, 2), 9.0))
        execute(Call.build('dgemm', transA='N', transB='N', m=2, n=2, k=2, beta=0.0), store)
        np.testing.assert_array_equal(as_matrix(store, 'C', 2, 2), c0)

    def test_dgemm_matches_triple_loop(self):
        for m, n, k in [(1, 1, 1), (3, 5, 2), (16, 7, 11), (4, 16, 16)]:
            for ta in 'NT':
                for tb in 'NT':
                    a = self.rng.random((m, k) if ta == 'N' else (k, m))
                    b = self.rng.random((k, n) if tb == 'N' else (n, k))
                    c = self.rng.random((m, n))
                    store = make_store(A=a, B=b, C=c)
                    execute(Call.build('dgemm', transA=ta, transB=tb, m=m, n=n, k=k,
                                       alpha=1.5, beta=0.5), store)
                    opa = a if ta == 'N' else a.T
                    opb = b if tb == 'N' else b.T
                    expected = np.zeros((m, n))
                    for i in range(m):
                        for j in range(n):
                            total = 0.0
                            for p in range(k):
                                total += opa[i, p] * opb[p, j]
                            expected[i, j] = 1.5 * total + 0.5 * c[i, j]
                    np.testing.assert_allclose(as_matrix(store, 'C', m, n), expected, rtol=1e-12)

    def test_submatrix_with_leading_dimension(self):
        big = self.rng.random((6, 6))
        store = make_store(A=big, B=np.eye(2), C=np.zeros((2, 2)))
        call = Call.build('dgemm', transA='N', transB='N', m=2, n=2, k=2, beta=0.0,
                          A=Operand('A', 1 + 2 * 6), ldA=6)
        execute(call, store)
        np.testing.assert_array_equal(as_matrix(store, 'C', 2, 2), big[1:3, 2:4])

    def test_dtrsm_diagonal_solve(self):
        store = make_store(A=2 * np.eye(2), B=np.ones((2, 2)))
        execute(Call.build('dtrsm', side='L', uplo='L', transA='N', diag='N', m=2, n=2), store)
        np.testing.assert_array_equal(as_matrix(store, 'B', 2, 2), 0.5 * np.ones((2, 2)))

    def test_dtrsm_right_side(self):
        lower = np.tril(self.rng.random((3, 3))) + 3 * np.eye(3)
        b = self.rng.random((4, 3))
        store = make_store(A=lower, B=b)
        execute(Call.build('dtrsm', side='R', uplo='L', transA='T', diag='N', m=4, n=3), store)
        np.testing.assert_allclose(as_matrix(store, 'B', 4, 3) @ lower.T, b, rtol=1e-12)

    def test_dpotf2_recovers_factor(self):
        lower = np.tril(self.rng.random((4, 4))) + np.eye(4)
        store = make_store(A=lower @ lower.T)
        execute(Call.build('dpotf2', uplo='L', n=4), store)
        np.testing.assert_allclose(np.tril(as_matrix(store, 'A', 4, 4)), lower, atol=1e-12)

    def test_dtrti2_inverts(self):
        upper = np.triu(self.rng.random((5, 5))) + 2 * np.eye(5)
        store = make_store(A=upper)
        execute(Call.build('dtrti2', uplo='U', diag='N', n=5), store)
        np.testing.assert_allclose(np.triu(as_matrix(store, 'A', 5, 5)) @ upper, np.eye(5),
                                   atol=1e-12)

    def test_dgetf2_factorizes_permuted_matrix(self):
        a0 = self.rng.random((5, 4))
        store = make_store(A=a0, ipiv=np.zeros(4))
        execute(Call.build('dgetf2', m=5, n=4), store)
        lu = as_matrix(store, 'A', 5, 4)
        lower = np.tril(lu, -1) + np.eye(5, 4)
        upper = np.triu(lu[:4])
        permuted = a0.copy()
        for j, pivot in enumerate(store['ipiv']):
            p = int(pivot) - 1
            permuted[[j, p]] = permuted[[p, j]]
        np.testing.assert_allclose(lower @ upper, permuted, atol=1e-12)

    def test_qr_kernels_agree(self):
        m, n = 6, 4
        a0 = self.rng.random((m, n))
        store = make_store(A=a0, tau=np.zeros(n), T=np.zeros((n, n)), C=a0)
        execute(Call.build('dgeqr2', m=m, n=n), store)
        execute(Call.build('dlarft', direct='F', storev='C', n=m, k=n, V='A'), store)
        execute(Call.build('dlarfb', side='L', trans='T', direct='F', storev='C',
                           m=m, n=n, k=n, V='A'), store)
        r = np.triu(as_matrix(store, 'A', m, n))
        np.testing.assert_allclose(as_matrix(store, 'C', m, n), r, atol=1e-12)

    def test_dtrsyl_residual(self):
        a = np.triu(self.rng.random((3, 3))) + np.eye(3)
        b = np.triu(self.rng.random((2, 2))) + np.eye(2)
        c = self.rng.random((3, 2))
        store = make_store(A=a, B=b, C=c)
        execute(Call.build('dtrsyl', transA='N', transB='N', isgn='1', m=3, n=2), store)
        x = as_matrix(store, 'C', 3, 2)
        np.testing.assert_allclose(a @ x + x @ b, c, atol=1e-12)

    def test_dsygs2_reduces(self):
        lower = np.tril(self.rng.random((4, 4))) + np.eye(4)
        sym = self.rng.random((4, 4))
        sym = sym + sym.T
        store = make_store(A=sym, B=lower)
        execute(Call.build('dsygs2', itype='1', uplo='L', n=4), store)
        expected = np.linalg.inv(lower) @ sym @ np.linalg.inv(lower).T
        np.testing.assert_allclose(np.tril(as_matrix(store, 'A', 4, 4)), np.tril(expected),
                                   atol=1e-10)

    def test_negative_increment(self):
        store = make_store(x=[1.0, 2.0, 3.0], y=np.zeros(3))
        execute(Call.build('dcopy', n=3, incx=-1), store)
        np.testing.assert_array_equal(store['y'], [3.0, 2.0, 1.0])

    def test_ddot_returns_value(self):
        store = make_store(x=[1.0, 2.0], y=[3.0, 4.0])
        self.assertEqual(execute(Call.build('ddot', n=2), store), 11.0)

    def test_zero_size_leaves_buffers_untouched(self):
        store = make_store(A=self.rng.random(16), B=self.rng.random(16), C=self.rng.random(16))
        before = store.snapshot()
        execute(Call.build('dgemm', transA='N', transB='N', m=4, n=4, k=0, beta=0.0, ld=4),
                store)
        execute(Call.build('dtrsm', side='L', uplo='L', transA='N', diag='N', m=0, n=4, ld=4,
                           A='A', B='B'), store)
        for name, values in before.items():
            np.testing.assert_array_equal(store[name], values)

    def test_leading_dimension_too_small(self):
        store = make_store(A=np.zeros(16), B=np.zeros(16), C=np.zeros(16))
        with self.assertRaises(BindingError):
            execute(Call.build('dgemm', transA='N', transB='N', m=4, n=2, k=2, ldA=3), store)

    def test_out_of_bounds(self):
        store = make_store(A=np.zeros(4), B=np.zeros(4), C=np.zeros(3))
        with self.assertRaises(BindingError):
            execute(Call.build('dgemm', transA='N', transB='N', m=2, n=2, k=2), store)

    def test_singular_triangular_solve(self):
        store = make_store(A=np.zeros((2, 2)), B=np.ones((2, 2)))
        with self.assertRaises(SingularMatrixError):
            execute(Call.build('dtrsm', side='L', uplo='L', transA='N', diag='N', m=2, n=2),
                    store)

    def test_unit_diagonal_ignores_stored_zeros(self):
        store = make_store(A=np.zeros((2, 2)), B=np.ones((2, 2)))
        execute(Call.build('dtrsm', side='L', uplo='L', transA='N', diag='U', m=2, n=2), store)
        np.testing.assert_array_equal(as_matrix(store, 'B', 2, 2), np.ones((2, 2)))
