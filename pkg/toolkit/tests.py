import json
import tempfile
from io import StringIO
from pathlib import Path

from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase
from pandas.testing import assert_frame_equal

from kernels.calls import Call
from modelgen.cases import parse_case
from modelgen.store import ModelStore

from .base import kernel_list
from .config import InvalidConfigError, ToolkitConfig
from .estimators import SampledEstimator
from .management.commands.rank import tied_with_fastest
from .reports import ReportFormatError, load_report, read_report, report_frame

SYNTHETIC = {'backend': 'synthetic', 'machine': 'sandybridge', 'seed': 3}

DGEMM_SCRIPT = '\n'.join(
    ['dmalloc A 1000000', 'dmalloc B 1000000', 'dmalloc C 1000000']
    + ['dgemm N N 1000 1000 1000 1 A 1000 B 1000 1 C 1000'] * 5
    + ['go']
)


def run(name, *args, **options):
    out = StringIO()
    call_command(name, *args, stdout=out, stderr=StringIO(), **options)
    return out.getvalue()


class CommandTestCase(SimpleTestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.root = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def write(self, name, text):
        path = self.root / name
        path.write_text(text)
        return str(path)


class ConfigTests(SimpleTestCase):

    def test_from_settings(self):
        config = ToolkitConfig.from_settings()
        self.assertEqual(config.threads, 1)
        self.assertEqual(config.cache_line, 64)
        self.assertEqual(config.smoothing.alpha, 4.0)

    def test_overrides(self):
        config = ToolkitConfig.from_settings(threads=4, backend='synthetic', seed=None)
        self.assertEqual((config.threads, config.backend, config.seed), (4, 'synthetic', 0))

    def test_threads_at_least_one(self):
        with self.assertRaises(InvalidConfigError):
            ToolkitConfig('sandybridge', 'reference', threads=0)
        with self.assertRaises(InvalidConfigError):
            ToolkitConfig.from_settings().override(threads=0)

    def test_machine_and_store(self):
        config = ToolkitConfig('sandybridge', 'synthetic', threads=2, models_dir='/tmp/models')
        self.assertEqual(config.machine_spec.name, 'sandybridge')
        store = config.model_store()
        self.assertEqual(store.directory.name, 'sandybridge_synthetic_2t')

    def test_kernel_list(self):
        self.assertEqual(kernel_list('gemm, gemv,,'), ('gemm', 'gemv'))


class MeasureCommandTests(CommandTestCase):

    def test_dgemm_script(self):
        lines = run('measure', self.write('dgemm.txt', DGEMM_SCRIPT), **SYNTHETIC).splitlines()
        self.assertEqual(len(lines), 5)
        for line in lines:
            cycles, seconds = line.split('\t')
            self.assertGreater(int(cycles), 0)
            self.assertGreater(float(seconds), 0)
        self.assertEqual(len(set(lines)), 1)

    def test_check_only(self):
        out = run('measure', self.write('dgemm.txt', DGEMM_SCRIPT), check=True, **SYNTHETIC)
        self.assertEqual(out.strip(), '5 valid call(s)')

    def test_empty_call_list(self):
        self.assertEqual(run('measure', self.write('empty.txt', ''), **SYNTHETIC), '')

    def test_malformed_line(self):
        path = self.write('bad.txt', 'dmalloc A 100\ndgemm N N 10 10\n')
        with self.assertRaisesMessage(CommandError, 'line 2'):
            run('measure', path, **SYNTHETIC)

    def test_missing_file(self):
        with self.assertRaises(CommandError):
            run('measure', str(self.root / 'missing.txt'), **SYNTHETIC)

    def test_threads_flag_validated(self):
        with self.assertRaises(CommandError):
            run('measure', self.write('empty.txt', ''), threads=0, **SYNTHETIC)


class ModelGenCommandTests(CommandTestCase):

    def generate(self, models_dir, *args, **options):
        return run('model_gen', *args, models_dir=str(models_dir), **SYNTHETIC, **options)

    def test_leaves_partition_domain(self):
        self.generate(self.root, 'dtrsm', cases=['LLNN'], domain='24:536')
        model = ModelStore(self.root, 'sandybridge', 'synthetic').load('dtrsm')
        case_model, = model.models
        self.assertEqual(case_model.domain.as_list(), [[24, 536], [24, 536]])
        for m in range(24, 537, 64):
            for n in range(24, 537, 64):
                leaf = case_model.locate((m, n))
                self.assertTrue(leaf.domain.contains((m, n)))

    def test_default_config_of_dgemm(self):
        self.generate(self.root, 'dgemm', cases=['NN'], domain='24:88')
        path = ModelStore(self.root, 'sandybridge', 'synthetic').path('dgemm')
        data = json.loads(path.read_text())
        self.assertEqual(data['config']['overfitting'], 0)
        self.assertEqual(data['seed'], 3)

    def test_same_seed_same_file(self):
        first, second = self.root / 'first', self.root / 'second'
        for models_dir in (first, second):
            self.generate(models_dir, 'daxpy', domain='24:536')
        name = 'sandybridge_synthetic_1t/daxpy.json'
        self.assertEqual((first / name).read_bytes(), (second / name).read_bytes())

    def test_merge_keeps_other_cases(self):
        self.generate(self.root, 'dtrsm', cases=['LLNN'], domain='24:280')
        self.generate(self.root, 'dtrsm', cases=['RLNN'], domain='24:280', merge=True)
        model = ModelStore(self.root, 'sandybridge', 'synthetic').load('dtrsm')
        self.assertEqual({m.case for m in model.models},
                         {parse_case('dtrsm', 'LLNN'), parse_case('dtrsm', 'RLNN')})

    def test_invalid_override(self):
        with self.assertRaises(CommandError):
            self.generate(self.root, 'dgemm', cases=['NN'], domain='24:88', overfitting=5)

    def test_wrong_domain_dimensions(self):
        with self.assertRaises(CommandError):
            self.generate(self.root, 'dtrsm', cases=['LLNN'], domain='24:88,24:88,24:88')

    def test_narrow_domain_needs_reduced_degree(self):
        with self.assertRaises(CommandError):
            self.generate(self.root, 'dtrsm', cases=['LLNN'], domain='24:56')
        self.generate(self.root, 'dtrsm', cases=['LLNN'], domain='24:56', reduce_degree=True)
        path = ModelStore(self.root, 'sandybridge', 'synthetic').path('dtrsm')
        self.assertTrue(json.loads(path.read_text())['config']['reduce_degree'])


class PredictionCommandTests(CommandTestCase):

    def sampled(self, name, *args, **options):
        return run(name, *args, estimator='sampled', repetitions=3, **SYNTHETIC, **options)

    def test_predict(self):
        lines = self.sampled('predict', 'chol3', n=512, b=64).splitlines()
        self.assertEqual(len(lines), 1)
        algorithm, b, runtime, rate, efficiency = lines[0].split('\t')
        self.assertEqual((algorithm, b), ('chol3', 'b=64'))
        self.assertTrue(efficiency.endswith('%'))

    def test_predict_cache_aware(self):
        out = self.sampled('predict', 'chol3', n=256, b=64, cache_aware=True)
        self.assertIn('chol3\tb=64\tcache-aware', out)

    def test_rank_tie(self):
        out = self.sampled('rank', 'chol', n=512, b=64)
        lines = out.splitlines()
        self.assertEqual(len(lines), 4)
        self.assertTrue(lines[-1].startswith('tie: '))
        self.assertEqual(sorted(lines[-1][len('tie: '):].split(', ')),
                         ['chol1', 'chol2', 'chol3'])

    def test_blocksize(self):
        out = self.sampled('blocksize', 'chol3', n=256, lower=32, upper=128, step=32)
        self.assertRegex(out, r'chol3: b_pred = (32|64|96|128)')

    def test_blocksize_empty_range(self):
        with self.assertRaisesMessage(CommandError, 'Empty block size range'):
            self.sampled('blocksize', 'chol3', n=256, lower=64, upper=32)

    def test_unknown_algorithm(self):
        with self.assertRaises(CommandError):
            self.sampled('predict', 'chol9', n=64, b=8)

    def test_missing_models(self):
        with self.assertRaises(CommandError):
            run('predict', 'chol3', n=128, b=32, models_dir=str(self.root), **SYNTHETIC)

    def test_sampled_estimator_reuses_timings(self):
        config = ToolkitConfig('sandybridge', 'synthetic')
        sampler = config.make_sampler()
        estimator = SampledEstimator(sampler, repetitions=2)
        call = Call.build('dgemm', transA='N', transB='N', m=64, n=64, k=64)
        first = estimator.estimate(call)
        self.assertEqual(estimator.estimate(call), first)
        self.assertEqual((len(estimator), sampler.plans_run), (1, 1))
        self.assertGreater(first.med, 0)


class TensorCommandTests(CommandTestCase):

    CONTRACTION = 'C[a,b,c] = A[a,i] * B[i,b,c]'

    def test_tensor_gen_lists_algorithms(self):
        lines = run('tensor_gen', self.CONTRACTION).splitlines()
        self.assertTrue(lines[0].endswith(': 36 algorithms'))
        self.assertEqual(len(lines), 37)
        self.assertIn("ca-gemv", [line.split('\t')[0] for line in lines[1:]])

    def test_tensor_gen_kernels_and_listing(self):
        out = run('tensor_gen', self.CONTRACTION, extents='a=b=c=4, i=2', kernels='gemm',
                  listing=True)
        self.assertTrue(out.splitlines()[0].endswith(': 2 algorithms'))
        self.assertIn('for (', out)

    def test_tensor_gen_export(self):
        path = self.root / 'algorithms.json'
        run('tensor_gen', self.CONTRACTION, extents='a=b=c=4, i=2', output=str(path))
        exported = json.loads(path.read_text())
        self.assertEqual(len(exported), 36)
        self.assertEqual(set(exported[0]), {'name', 'contraction', 'kernel', 'loops',
                                            'kernel_indices', 'flags', 'sizes', 'operands',
                                            'copies', 'listing'})

    def test_tensor_gen_bad_contraction(self):
        with self.assertRaises(CommandError):
            run('tensor_gen', 'C[a,b] = A[a,i] * B[j,b]')

    def test_tensor_predict(self):
        out = run('tensor_predict', 'C[a,b] = A[a,i] * B[i,b]; a=b=8, i=4', kernels='gemm,gemv',
                  repetitions=2, **SYNTHETIC)
        lines = out.splitlines()
        self.assertEqual(len(lines), 3)
        self.assertEqual(lines[0].split('\t')[:2], ['1', 'gemm'])

    def test_tensor_predict_deterministic(self):
        reports = []
        for name in ('first.json', 'second.json'):
            path = self.root / name
            run('tensor_predict', 'C[a,b] = A[a,i] * B[i,b]; a=b=8, i=4', repetitions=2,
                output=str(path), **SYNTHETIC)
            reports.append(path.read_bytes())
        self.assertEqual(reports[0], reports[1])


class ExportCommandTests(CommandTestCase):

    def test_prediction_round_trip(self):
        report = self.root / 'report.json'
        run('rank', 'chol', n=256, b=64, estimator='sampled', repetitions=2,
            output=str(report), **SYNTHETIC)
        table = self.root / 'report.tsv'
        run('export', str(report), output=str(table), separator='tab')
        expected = report_frame(load_report(report))
        self.assertEqual(len(expected), 15)
        assert_frame_equal(read_report(table, sep='\t'), expected, check_dtype=False)

    def test_tensor_round_trip(self):
        report = self.root / 'tensor.json'
        run('tensor_predict', 'C[a,b] = A[a,i] * B[i,b]; a=b=8, i=4', repetitions=2,
            output=str(report), **SYNTHETIC)
        table = self.root / 'tensor.csv'
        run('export', str(report), output=str(table))
        frame = read_report(table)
        self.assertEqual(list(frame['rank']), list(range(1, len(frame) + 1)))
        assert_frame_equal(frame, report_frame(load_report(report)), check_dtype=False)

    def test_report_setup_recorded(self):
        report = self.root / 'blocksize.json'
        run('blocksize', 'chol3', n=128, lower=32, upper=64, step=32, estimator='sampled',
            repetitions=2, output=str(report), **SYNTHETIC)
        data = load_report(report)
        self.assertEqual(data['setup'], {'machine': 'sandybridge', 'backend': 'synthetic',
                                         'threads': 1, 'seed': 3})
        self.assertIn(data['b_pred'], (32, 64))
        self.assertEqual(len(data['predictions']), 2)

    def test_not_a_report(self):
        with self.assertRaises(ReportFormatError):
            load_report(self.write('bad.json', '{"kind": "predict"}'))
        with self.assertRaises(CommandError):
            run('export', self.write('bad.json', 'not json'), output=str(self.root / 'x.csv'))


class TieTests(SimpleTestCase):

    def test_no_predictions(self):
        self.assertEqual(tied_with_fastest([], 0.01), [])
