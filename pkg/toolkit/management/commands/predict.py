from common.utils import format_seconds
from cachemodel.estimates import combined_estimates, measure_timings
from predictor.algorithms import call_sequence, problem_sizes, resolve_algorithms
from predictor.measurement import expand_inline
from predictor.prediction import predict
from toolkit.base import PredictionCommand


class Command(PredictionCommand):
    help = 'Predict the runtime, performance and efficiency of blocked algorithms'

    def add_prediction_arguments(self, parser):
        parser.add_argument('algorithms', nargs='+', help="Algorithm or family names ('chol')")
        parser.add_argument('-b', type=int, required=True, help='Block size')
        parser.add_argument(
            '--cache-aware', dest='cache_aware', action='store_true',
            help='Also print the cache-aware estimate from in- and out-of-cache timings',
        )
        parser.add_argument('--hard', action='store_true',
                            help='Split in-cache and out-of-cache shares with the sign rule')

    def run(self, config, **options):
        algorithms = resolve_algorithms(options['algorithms'])
        sizes, b = self.sizes(options), options['b']
        estimator = self.estimator(config, options)
        predictions = [predict(estimator, algorithm, sizes, b, config.machine_spec, config.threads)
                       for algorithm in algorithms]
        self.write_predictions(predictions)
        if options['cache_aware']:
            for algorithm in algorithms:
                self.cache_aware(config, algorithm, sizes, b, options)
        self.save_report(config, options['output'], 'predict', predictions=predictions)

    def cache_aware(self, config, algorithm, sizes, b, options):
        m, n = problem_sizes(sizes, algorithm.square)
        calls = expand_inline(call_sequence(algorithm, {'m': m, 'n': n}, b))
        ic, oc = measure_timings(config.make_sampler(), calls, config.machine_spec,
                                 options['repetitions'])
        estimates = combined_estimates(
            algorithm, {'m': m, 'n': n}, b, ic, oc, config.machine_spec, config.smoothing,
            options['hard'], line_bytes=config.cache_line,
        )
        self.stdout.write(
            f"{algorithm.name}\tb={b}\tcache-aware {format_seconds(estimates.total)}"
        )
