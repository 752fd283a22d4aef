from predictor.prediction import blocksize_range, optimize_blocksize
from toolkit.base import PredictionCommand


class Command(PredictionCommand):
    help = 'Predict the optimal block size of a blocked algorithm'

    def add_prediction_arguments(self, parser):
        parser.add_argument('algorithm', help='Algorithm name')
        parser.add_argument('--lower', type=int, default=8, help='Smallest block size')
        parser.add_argument('--upper', type=int, default=256, help='Largest block size')
        parser.add_argument('--step', type=int, default=8, help='Block size step')

    def run(self, config, **options):
        blocksizes = blocksize_range(options['lower'], options['upper'], options['step'])
        b_pred, sweep = optimize_blocksize(
            self.estimator(config, options), options['algorithm'], self.sizes(options),
            blocksizes, config.machine_spec, config.threads,
        )
        predictions = [prediction for _, prediction in sweep]
        if options['verbosity'] > 1:
            self.write_predictions(predictions)
        self.stdout.write(self.style.SUCCESS(f"{options['algorithm']}: b_pred = {b_pred}"))
        self.save_report(config, options['output'], 'blocksize', predictions=predictions,
                         b_pred=b_pred)
