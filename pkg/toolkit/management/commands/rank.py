from predictor.algorithms import resolve_algorithms
from predictor.prediction import rank_algorithms
from toolkit.base import PredictionCommand


def tied_with_fastest(predictions, tolerance):
    """Algorithms whose predicted median is within `tolerance` (relative) of the fastest"""
    if not predictions:
        return []
    fastest = predictions[0].runtime.med
    return [prediction.algorithm for prediction in predictions
            if prediction.runtime.med - fastest <= tolerance * fastest]


class Command(PredictionCommand):
    help = 'Rank blocked algorithms by predicted median runtime'

    def add_prediction_arguments(self, parser):
        parser.add_argument('algorithms', nargs='+', help="Algorithm or family names ('chol')")
        parser.add_argument('-b', type=int, required=True, help='Block size')
        parser.add_argument('--tie-tolerance', dest='tie_tolerance', type=float, default=0.01,
                            help='Relative runtime difference reported as a tie')

    def run(self, config, **options):
        algorithms = resolve_algorithms(options['algorithms'])
        predictions = rank_algorithms(
            self.estimator(config, options), algorithms, self.sizes(options), options['b'],
            config.machine_spec, config.threads,
        )
        self.write_predictions(predictions)
        tied = tied_with_fastest(predictions, options['tie_tolerance'])
        if len(tied) > 1:
            self.stdout.write(self.style.WARNING(f"tie: {', '.join(tied)}"))
        elif tied:
            self.stdout.write(self.style.SUCCESS(f"fastest: {tied[0]}"))
        self.save_report(config, options['output'], 'rank', predictions=predictions,
                         tied=tied)
