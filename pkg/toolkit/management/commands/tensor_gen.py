import json
from pathlib import Path

from tensor.algorithms import KERNELS, export_algorithm, generate_algorithms, kernel_text, listing
from tensor.contractions import parse_extents, parse_spec
from toolkit.base import ToolkitCommand, kernel_list


class Command(ToolkitCommand):
    help = 'List every loop-nest algorithm of a tensor contraction'

    def add_command_arguments(self, parser):
        parser.add_argument('contraction', help="e.g. 'C[a,b,c] = A[a,i] * B[i,b,c]'")
        parser.add_argument('--extents', default='', help="Index extents, e.g. 'a=b=c=400, i=8'")
        parser.add_argument('--kernels', default=','.join(KERNELS),
                            help='Comma-separated kernels to map onto')
        parser.add_argument('--listing', action='store_true',
                            help='Print the loop nest of every algorithm (needs all extents)')
        parser.add_argument('--output', help='JSON file receiving the exported algorithms')

    def run(self, config, **options):
        spec = parse_spec(options['contraction'], parse_extents(options['extents']))
        algorithms = generate_algorithms(spec, kernel_list(options['kernels']))
        self.stdout.write(f"{spec.text()}: {len(algorithms)} algorithms")
        for algorithm in algorithms:
            self.stdout.write(f"{algorithm.name}\t{kernel_text(algorithm)}")
            if options['listing']:
                self.stdout.write(listing(algorithm))
        if options['output']:
            path = Path(options['output'])
            path.parent.mkdir(parents=True, exist_ok=True)
            exported = [export_algorithm(algorithm) for algorithm in algorithms]
            path.write_text(json.dumps(exported, indent=2) + '\n')
            self.stdout.write(self.style.SUCCESS(f"Algorithms written to {path}"))
