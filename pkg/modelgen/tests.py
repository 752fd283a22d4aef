import itertools
import math
import tempfile

import numpy as np
from django.test import SimpleTestCase

from kernels.calls import Call
from sampler.backends import SyntheticBackend
from sampler.plans import Sampler

from .cases import Case, classify, enumerate_cases, parse_case
from .config import ErrorMeasure, GridKind, ModelConfig, ModelConfigError, default_config
from .fitting import (
    RankDeficientFitError, basis_degrees, evaluate_polynomial, fit_relative_lsq, leaf_error,
    monomial_basis, monomials, reduce_errors,
)
from .grids import (
    Domain, GridError, UnsplittableDomainError, chebyshev_nodes, grid_points, split_domain,
)
from .piecewise import Leaf, OutOfDomainError, PiecewiseModel, UnmodeledCaseError, evaluate
from .refinement import adaptive_refine, generate_model, leaf_grid
from .store import KernelModel, ModelFormatError, ModelSet, ModelStore


def piecewise_cubic(call):
    n = call.sizes['n']
    return 1e-9 * (n ** 3 + 5 * max(n - 280, 0) ** 3)


def refinement_config(**changes):
    values = dict(overfitting=0, oversampling=4, grid='chebyshev', repetitions=1,
                  reference_statistic='min', error_measure='maximum', error_bound=0.01,
                  min_width=32)
    values.update(changes)
    return ModelConfig(**values)


class DefaultConfigTests(SimpleTestCase):

    def test_single_threaded_default(self):
        config = default_config('dtrsm', 1)
        self.assertEqual(
            (config.overfitting, config.oversampling, config.grid, config.repetitions,
             config.reference_statistic.value, config.error_measure, config.error_bound,
             config.min_width),
            (2, 4, GridKind.CHEBYSHEV, 10, 'min', ErrorMeasure.MAXIMUM, 0.01, 32),
        )

    def test_dgemm(self):
        config = default_config('dgemm', 1)
        self.assertEqual((config.overfitting, config.min_width), (0, 64))

    def test_multithreaded(self):
        self.assertEqual(default_config('dtrsm', 8).min_width, 64)
        self.assertEqual(default_config('dgemm', 8).min_width, 256)

    def test_invalid(self):
        with self.assertRaises(ModelConfigError):
            ModelConfig(min_width=20)
        with self.assertRaises(ModelConfigError):
            ModelConfig(error_bound=0)
        with self.assertRaises(ModelConfigError):
            ModelConfig(overfitting=3)


class CaseTests(SimpleTestCase):

    def test_enumeration(self):
        self.assertEqual(len(enumerate_cases('dtrsm')), 16 * 4)
        self.assertEqual(len(enumerate_cases('ddot')), 4)
        self.assertEqual(len(enumerate_cases('dgemm')), 4 * 16)

    def test_classify(self):
        call = Call.build('dgemm', transA='N', transB='T', m=8, n=8, k=8, alpha=-1.0,
                          beta=0.7, ld=5000)
        case = classify(call)
        self.assertEqual(dict(case.flags), {'transA': 'N', 'transB': 'T'})
        self.assertEqual(dict(case.scalars), {'alpha': '-1', 'beta': 'other'})
        self.assertIn(case, enumerate_cases('dgemm'))

    def test_increment_classes(self):
        call = Call.build('daxpy', n=10, incx=-1, incy=5000)
        self.assertEqual(dict(classify(call).increments), {'incx': 'one', 'incy': 'large'})

    def test_parse_case(self):
        self.assertEqual(parse_case('dtrsm', 'LLNN,alpha=1').scalars, (('alpha', '1'),))
        self.assertEqual(dict(parse_case('dtrsyl', 'NN-1').flags)['isgn'], '-1')

    def test_case_call(self):
        call = parse_case('dtrsm', 'RLTN').call('dtrsm', {'m': 16, 'n': 24})
        self.assertEqual(call.ld('A'), 5000)
        self.assertEqual(call.scalars['alpha'], 1.5)
        self.assertEqual(classify(call), parse_case('dtrsm', 'RLTN'))

    def test_unknown_class(self):
        with self.assertRaises(ValueError):
            Case(scalars=(('alpha', '2'),))


class BasisTests(SimpleTestCase):

    def test_dtrsm(self):
        case = parse_case('dtrsm', 'LLNN')
        self.assertEqual(monomial_basis('dtrsm', case, 0),
                         [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (2, 1)])

    def test_dtrsm_overfit(self):
        basis = monomial_basis('dtrsm', parse_case('dtrsm', 'LLNN'), 1)
        self.assertEqual(len(basis), 12)
        self.assertEqual(basis[-1], (3, 2))

    def test_constant(self):
        self.assertEqual(monomials([0]), [(0,)])


class GridTests(SimpleTestCase):

    def test_chebyshev_nodes(self):
        np.testing.assert_allclose(chebyshev_nodes(3), [1.0, 0.0, -1.0], atol=1e-15)

    def test_chebyshev_includes_boundary(self):
        for count in range(2, 12):
            points = [p[0] for p in grid_points(Domain(((24, 4152),)), [count])]
            self.assertEqual(points[0], 24)
            self.assertEqual(points[-1], 4152)
            self.assertTrue(all(p % 8 == 0 for p in points))

    def test_cartesian(self):
        self.assertEqual(grid_points([(0, 24)], [4], GridKind.CARTESIAN),
                         [(0,), (8,), (16,), (24,)])

    def test_product(self):
        points = grid_points(Domain(((8, 64), (8, 64))), [3, 2], 'cartesian')
        self.assertEqual(len(points), 6)

    def test_too_many_points(self):
        with self.assertRaises(GridError):
            grid_points([(24, 40)], [4])

    def test_domain_validation(self):
        with self.assertRaises(GridError):
            Domain(((0, 24),))
        with self.assertRaises(GridError):
            Domain(((24, 30),))
        self.assertEqual(Domain.parse('24:536', 2).bounds, ((24, 536), (24, 536)))


class SplitTests(SimpleTestCase):

    def test_relatively_largest_dimension(self):
        dimension, left, right = split_domain(Domain(((24, 4152), (24, 536))), 32)
        self.assertEqual(dimension, 0)
        self.assertEqual(left.bounds, ((24, 2088), (24, 536)))
        self.assertEqual(right.bounds, ((2088, 4152), (24, 536)))

    def test_one_dimension(self):
        _, left, right = split_domain(Domain(((24, 536),)))
        self.assertEqual((left.upper[0], right.lower[0]), (280, 280))

    def test_tie_breaks_to_lowest_index(self):
        dimension, _, _ = split_domain(Domain(((24, 536), (24, 536))))
        self.assertEqual(dimension, 0)

    def test_only_wide_dimensions(self):
        dimension, _, _ = split_domain(Domain(((8, 512), (64, 96))), 32)
        self.assertEqual(dimension, 0)
        dimension, _, _ = split_domain(Domain(((8, 32), (64, 512))), 32)
        self.assertEqual(dimension, 1)

    def test_unsplittable(self):
        with self.assertRaises(UnsplittableDomainError):
            split_domain(Domain(((24, 56),)), 32)


class FitTests(SimpleTestCase):

    def test_scalar_closed_form(self):
        beta = fit_relative_lsq([(8,), (16,)], [1.0, 2.0], [(0,)])
        self.assertAlmostEqual(beta[0], 1.2, places=12)

    def test_exact_polynomial(self):
        basis = monomials([2, 1])
        coefficients = np.array([3e-6, 2e-8, 5e-8, 1e-9, 4e-10, 2e-12])
        points = grid_points(Domain(((24, 536), (24, 536))), [5, 4])
        values = [evaluate_polynomial(basis, coefficients, p) for p in points]
        beta = fit_relative_lsq(points, values, basis)
        self.assertLess(leaf_error(points, values, beta, basis), 1e-9)

    def test_cubic_on_ten_points(self):
        points = [(24 + 48 * i,) for i in range(10)]
        values = [1e-9 * n ** 3 + 1e-6 for (n,) in points]
        beta = fit_relative_lsq(points, values, monomials([3]))
        self.assertLess(leaf_error(points, values, beta, monomials([3])), 1e-9)

    def test_matches_grid_search(self):
        rng = np.random.default_rng(3)
        values = rng.uniform(1.0, 5.0, size=6)
        points = [(8 * (i + 1),) for i in range(6)]
        beta = fit_relative_lsq(points, values, [(0,)])[0]
        candidates = np.linspace(beta - 0.01, beta + 0.01, 20001)
        objective = [np.sum((1 - c / values) ** 2) for c in candidates]
        self.assertAlmostEqual(candidates[int(np.argmin(objective))], beta, delta=1e-6)

    def test_two_parameter_minimum(self):
        rng = np.random.default_rng(4)
        points = [(8 * (i + 1),) for i in range(8)]
        values = np.array([1.0 + 0.1 * p[0] for p in points]) * rng.uniform(0.9, 1.1, size=8)
        basis = monomials([1])
        beta = fit_relative_lsq(points, values, basis)

        def objective(b):
            return sum((1 - (b[0] + b[1] * p[0]) / y) ** 2 for p, y in zip(points, values))

        best = objective(beta)
        for d0, d1 in itertools.product((-1e-4, 0, 1e-4), (-1e-5, 0, 1e-5)):
            self.assertGreaterEqual(objective(beta + np.array([d0, d1])), best - 1e-15)

    def test_rank_deficient(self):
        with self.assertRaises(RankDeficientFitError):
            fit_relative_lsq([(8,), (8,), (8,)], [1.0, 1.0, 1.0], monomials([1]))
        with self.assertRaises(RankDeficientFitError):
            fit_relative_lsq([(8,)], [1.0], monomials([1]))

    def test_error_measures(self):
        self.assertEqual(reduce_errors([0.01, 0.03], 'maximum'), 0.03)
        self.assertAlmostEqual(reduce_errors([0.01, 0.03], 'average'), 0.02)
        self.assertEqual(reduce_errors([i / 100 for i in range(10, 0, -1)], 'p90'), 0.09)

    def test_perfect_fit(self):
        for measure in ErrorMeasure:
            self.assertEqual(leaf_error([(8,), (16,)], [2.0, 2.0], [2.0], [(0,)], measure), 0.0)


class RefinementTests(SimpleTestCase):

    def sampler(self, runtime):
        return Sampler(SyntheticBackend(runtime), seed=1)

    def test_splits_at_breakpoint(self):
        model = adaptive_refine(self.sampler(piecewise_cubic), refinement_config(), 'dpotf2',
                                parse_case('dpotf2', 'L'), Domain(((24, 536),)))
        self.assertEqual([leaf.domain.bounds for leaf in model.leaves],
                         [((24, 280),), ((280, 536),)])
        for leaf in model.leaves:
            self.assertLess(leaf.error, 1e-6)

    def test_constant_runtime(self):
        model = adaptive_refine(self.sampler(lambda call: 2e-4), refinement_config(overfitting=2),
                                'dtrsm', parse_case('dtrsm', 'LLNN'),
                                Domain(((24, 536), (24, 536))))
        self.assertEqual(len(model.leaves), 1)
        self.assertLess(model.leaves[0].error, 1e-9)

    def test_polynomial_runtime_needs_no_split(self):
        runtime = lambda call: 1e-9 * 2 * call.sizes['m'] * call.sizes['n'] * call.sizes['k'] + 1e-7
        model = adaptive_refine(self.sampler(runtime), refinement_config(oversampling=1), 'dgemm',
                                parse_case('dgemm', 'NN'), Domain(((8, 64),) * 3))
        self.assertEqual(len(model.leaves), 1)

    def test_partition_on_random_runs(self):
        rng = np.random.default_rng(2024)
        for _ in range(100):
            lower = 8 * rng.integers(1, 8, size=2)
            upper = lower + 8 * rng.choice([0, *range(2, 13)], size=2)
            domain = Domain(tuple(zip(lower.tolist(), upper.tolist())))
            kink = 8 * int(rng.integers(1, 25))
            slope = float(rng.uniform(0, 20))

            def runtime(call, kink=kink, slope=slope):
                m, n = call.sizes['m'], call.sizes['n']
                return 1e-9 * (m * n + slope * max(m - kink, 0) * n + 50)

            config = refinement_config(oversampling=1, min_width=int(rng.choice([32, 48])))
            model = adaptive_refine(self.sampler(runtime), config, 'dgemv',
                                    parse_case('dgemv', 'N,alpha=other,beta=other'), domain)
            self.assert_partition(domain, [leaf.domain for leaf in model.leaves])
            for leaf in model.leaves:
                self.assertTrue(
                    leaf.error <= config.error_bound
                    or all(width <= config.min_width for width in leaf.domain.widths)
                )

    def assert_partition(self, root, domains):
        def volume(bounds):
            return math.prod(max(0, u - l) for l, u in bounds)

        for domain in domains:
            self.assertTrue(root.contains(domain.lower) and root.contains(domain.upper))
        self.assertEqual(sum(volume(d.bounds) for d in domains), volume(root.bounds))
        for a, b in itertools.combinations(domains, 2):
            overlap = [(max(la, lb), min(ua, ub))
                       for (la, ua), (lb, ub) in zip(a.bounds, b.bounds)]
            self.assertEqual(volume(overlap), 0)


class LeafGridTests(SimpleTestCase):

    def setUp(self):
        self.degrees = basis_degrees('dtrsm', parse_case('dtrsm', 'LLNN'), 2)

    def test_full_grid_per_dimension(self):
        axes, degrees = leaf_grid(Domain(((24, 536),) * 2), self.degrees, default_config('dtrsm'))
        self.assertEqual(self.degrees, (4, 3))
        self.assertEqual([len(nodes) for nodes in axes], [9, 8])
        self.assertEqual(degrees, [4, 3])

    def test_narrow_leaf_raises(self):
        with self.assertRaises(GridError):
            leaf_grid(Domain(((24, 56),) * 2), self.degrees, default_config('dtrsm'))

    def test_narrow_leaf_with_reduced_degree(self):
        config = default_config('dtrsm').replace(reduce_degree=True)
        axes, degrees = leaf_grid(Domain(((24, 56),) * 2), self.degrees, config)
        self.assertEqual(axes, [[24, 32, 40, 48, 56]] * 2)
        self.assertEqual(degrees, [3, 3])

    def test_zero_width_dimension(self):
        axes, degrees = leaf_grid(Domain(((64, 64), (24, 536))), self.degrees,
                                  default_config('dtrsm'))
        self.assertEqual(axes[0], [64])
        self.assertEqual(degrees, [0, 3])

    def test_refinement_on_narrow_domain(self):
        sampler = Sampler(SyntheticBackend(lambda call: 2e-4), seed=1)
        case = parse_case('dtrsm', 'LLNN')
        domain = Domain(((24, 56),) * 2)
        with self.assertRaises(GridError):
            adaptive_refine(sampler, refinement_config(overfitting=2), 'dtrsm', case, domain)
        model = adaptive_refine(sampler, refinement_config(overfitting=2, reduce_degree=True),
                                'dtrsm', case, domain)
        self.assertEqual(len(model.leaves), 1)


class EvaluateTests(SimpleTestCase):

    def setUp(self):
        case = parse_case('dpotf2', 'L')
        basis = monomials([3])
        left = {s: [1e-6, 0.0, 0.0, 1e-9] for s in ('min', 'med', 'max', 'mean')}
        left['std'] = [0.0] * 4
        right = {s: [2e-6, 1e-8, 0.0, 1e-9] for s in ('min', 'med', 'max', 'mean')}
        right['std'] = [1e-7, 0.0, 0.0, 0.0]
        self.model = PiecewiseModel('dpotf2', case, Domain(((24, 536),)), [
            Leaf(Domain(((24, 280),)), basis, left),
            Leaf(Domain(((280, 536),)), basis, right),
        ])

    def call(self, n):
        return Call.build('dpotf2', uplo='L', n=n)

    def test_direct_polynomial(self):
        estimate = evaluate(self.model, self.call(100))
        self.assertAlmostEqual(estimate.med, 1e-6 + 1e-9 * 100 ** 3, delta=1e-12)
        self.assertEqual(estimate.std, 0.0)

    def test_boundary_rules(self):
        self.assertIs(self.model.locate((280,)), self.model.leaves[1])
        self.assertIs(self.model.locate((24,)), self.model.leaves[0])
        self.assertIs(self.model.locate((536,)), self.model.leaves[1])

    def test_out_of_domain(self):
        with self.assertRaises(OutOfDomainError):
            evaluate(self.model, self.call(544))
        with self.assertRaises(OutOfDomainError):
            evaluate(self.model, self.call(16))

    def test_unmodeled_case(self):
        with self.assertRaises(UnmodeledCaseError):
            evaluate(self.model, Call.build('dpotf2', uplo='U', n=100))

    def test_negative_estimates_clamped(self):
        self.model.leaves[0].coefficients['min'] = [-1.0, 0.0, 0.0, 0.0]
        self.assertEqual(evaluate(self.model, self.call(100)).min, 0.0)


class ModelFileTests(SimpleTestCase):

    def generate(self):
        sampler = Sampler(SyntheticBackend(piecewise_cubic), seed=7)
        return generate_model(sampler, refinement_config(), 'dpotf2',
                              [parse_case('dpotf2', 'L'), parse_case('dpotf2', 'U')],
                              Domain(((24, 536),)), 'sandybridge', 'synthetic', 1, 7)

    def test_deterministic_and_round_trip(self):
        text = self.generate().to_json()
        self.assertEqual(text, self.generate().to_json())
        self.assertEqual(KernelModel.from_json(text).to_json(), text)

    def test_default_config_recorded(self):
        sampler = Sampler(SyntheticBackend(lambda call: 1e-6), seed=0)
        model = generate_model(sampler, None, 'dgemm', [parse_case('dgemm', 'NN')],
                               Domain(((64, 128),) * 3))
        self.assertEqual(model.config.overfitting, 0)
        self.assertEqual(model.as_dict()['config']['overfitting'], 0)

    def test_malformed(self):
        with self.assertRaises(ModelFormatError):
            KernelModel.from_json('{"format_version": 1}')
        with self.assertRaises(ModelFormatError):
            KernelModel.from_json('{"format_version": 99}')

    def test_store(self):
        model = self.generate()
        with tempfile.TemporaryDirectory() as root:
            store = ModelStore(root, 'sandybridge', '/opt/blas/libopenblas.so.0', 1)
            path = store.save(model)
            self.assertEqual(path.parent.name, 'sandybridge_libopenblas_1t')
            self.assertEqual(store.kernels(), ['dpotf2'])
            models = store.model_set()
            estimate = models.estimate(Call.build('dpotf2', uplo='U', n=200))
            self.assertAlmostEqual(estimate.min, 1e-9 * 200 ** 3, delta=1e-9)
            self.assertEqual(models.estimate(Call.build('dpotf2', uplo='U', n=0)).med, 0.0)
            with self.assertRaises(UnmodeledCaseError):
                models.estimate(Call.build('dtrsm', side='L', uplo='L', transA='N', diag='N',
                                           m=64, n=64))

    def test_model_set_from_models(self):
        models = ModelSet([self.generate()])
        self.assertGreater(models.estimate(Call.build('dpotf2', uplo='L', n=300)).med, 0.0)
