"""
Base class of the toolkit's management commands: global flags, run
configuration and error translation.
"""

import logging

from django.core.management.base import BaseCommand, CommandError

from common.errors import ToolkitError
from common.utils import format_percentage, format_rate, format_seconds

from .config import ToolkitConfig
from .estimators import SampledEstimator
from .reports import build_report, write_report

logger = logging.getLogger(__name__)


class ToolkitCommand(BaseCommand):
    """
    Subclasses implement `add_command_arguments` and `run(config, **options)`.

    Toolkit errors become CommandErrors, so the command exits nonzero with
    the diagnostic on stderr.
    """

    def add_arguments(self, parser):
        parser.add_argument('--machine', help='Machine name or machine JSON file')
        parser.add_argument('--backend', help="'reference', 'synthetic' or a BLAS library path")
        parser.add_argument('--threads', type=int, help='Backend thread count')
        parser.add_argument('--seed', type=int, help='Seed of the first measurement plan')
        parser.add_argument('--models-dir', dest='models_dir', help='Model store directory')
        self.add_command_arguments(parser)

    def add_command_arguments(self, parser):
        pass

    def handle(self, *args, **options):
        try:
            config = ToolkitConfig.from_settings(
                machine=options.get('machine'),
                backend=options.get('backend'),
                threads=options.get('threads'),
                seed=options.get('seed'),
                models_dir=options.get('models_dir'),
            )
            return self.run(config, **options)
        except ToolkitError as e:
            logger.error(f"{type(e).__name__}: {str(e)}")
            raise CommandError(str(e))

    def run(self, config, **options):
        raise NotImplementedError

    def setup(self, config):
        return {
            'machine': config.machine_spec.name,
            'backend': config.backend,
            'threads': config.threads,
            'seed': config.seed,
        }

    def save_report(self, config, output, kind, **content):
        """Write a JSON report when --output is given"""
        if not output:
            return None
        path = write_report(build_report(kind, self.setup(config), **content), output)
        self.stdout.write(self.style.SUCCESS(f"Report written to {path}"))
        return path


class PredictionCommand(ToolkitCommand):
    """Commands predicting blocked algorithms from an estimator"""

    ESTIMATORS = ('models', 'sampled')

    def add_command_arguments(self, parser):
        parser.add_argument('-n', type=int, required=True, help='Problem size')
        parser.add_argument('-m', type=int, help='Row count of rectangular problems (default n)')
        parser.add_argument(
            '--estimator', choices=self.ESTIMATORS, default='models',
            help="Stored kernel models, or direct sampling of every distinct call",
        )
        parser.add_argument('--repetitions', type=int, default=10,
                            help='Repetitions per call of the sampled estimator')
        parser.add_argument('--output', help='JSON report file')
        self.add_prediction_arguments(parser)

    def add_prediction_arguments(self, parser):
        pass

    def sizes(self, options):
        if options.get('m') is None:
            return options['n']
        return {'m': options['m'], 'n': options['n']}

    def estimator(self, config, options):
        if options['estimator'] == 'sampled':
            return SampledEstimator(config.make_sampler(), options['repetitions'])
        return config.model_store().model_set()

    def write_predictions(self, predictions):
        for prediction in predictions:
            runtime = format_seconds(prediction.runtime.med)
            line = (
                f"{prediction.algorithm}\tb={prediction.b}\t{runtime}\t"
                f"{format_rate(prediction.performance.med)}"
            )
            if prediction.efficiency:
                line += f"\t{format_percentage(prediction.efficiency.med)}"
            self.stdout.write(line)


def kernel_list(text):
    """Names from a comma-separated option"""
    return tuple(name.strip() for name in text.split(',') if name.strip())
