from common.utils import format_rate, format_seconds
from tensor.algorithms import KERNELS
from tensor.benchmarks import PredictionLevel
from tensor.contractions import parse_extents, parse_spec
from tensor.prediction import rank_contractions, ranking_frame
from toolkit.base import ToolkitCommand, kernel_list


class Command(ToolkitCommand):
    help = 'Predict and rank the algorithms of a tensor contraction with micro-benchmarks'

    def add_command_arguments(self, parser):
        parser.add_argument('contraction',
                            help="e.g. 'C[a,b,c] = A[a,i] * B[i,b,c]; a=b=c=64, i=8'")
        parser.add_argument('--extents', default='', help="Index extents, e.g. 'a=b=c=400, i=8'")
        parser.add_argument('--kernels', default=','.join(KERNELS),
                            help='Comma-separated kernels to map onto')
        parser.add_argument('--level', choices=[level.value for level in PredictionLevel],
                            default=PredictionLevel.FULL.value,
                            help='How much of the in-algorithm cache state to reproduce')
        parser.add_argument('--repetitions', type=int, default=10,
                            help='Repetitions per micro-benchmark')
        parser.add_argument('--top', type=int, default=0, help='Print only the fastest N')
        parser.add_argument('--output', help='JSON report file')

    def run(self, config, **options):
        spec = parse_spec(options['contraction'], parse_extents(options['extents']))
        predictions = rank_contractions(
            spec, config.make_sampler(), config.machine_spec, options['level'],
            options['repetitions'], kernel_list(options['kernels']),
            line_bytes=config.cache_line,
        )
        frame = ranking_frame(predictions)
        shown = frame.head(options['top']) if options['top'] else frame
        for row in shown.itertuples(index=False):
            self.stdout.write(
                f"{row.rank}\t{row.algorithm}\t{row.kernel}\t{format_seconds(row.runtime)}\t"
                f"{format_rate(row.performance)}"
            )
        self.save_report(config, options['output'], 'tensor-predict',
                         rows=[dict(prediction.as_row(), rank=rank)
                               for rank, prediction in enumerate(predictions, start=1)])
