import json
from pathlib import Path

from django.core.management.base import CommandError

from kernels.signatures import get_kernel
from modelgen.cases import enumerate_cases, parse_case
from modelgen.config import ErrorMeasure, GridKind, ModelConfig, ReferenceStatistic, default_config
from modelgen.grids import Domain
from modelgen.refinement import generate_model
from toolkit.base import ToolkitCommand


class Command(ToolkitCommand):
    help = 'Generate piecewise polynomial runtime models of a kernel and store them'

    def add_command_arguments(self, parser):
        parser.add_argument('kernel', help='Kernel name, e.g. dtrsm')
        parser.add_argument(
            '--case', action='append', dest='cases', default=[],
            help="Case to model, e.g. 'LLNN' or 'NN,alpha=1' (repeatable; default all cases)",
        )
        parser.add_argument('--domain', default='24:536',
                            help="Size domain, one 'lower:upper' per size argument or one for all")
        parser.add_argument('--config', default='default',
                            help="'default' or a JSON file of model configuration values")
        parser.add_argument('--overfitting', type=int)
        parser.add_argument('--oversampling', type=int)
        parser.add_argument('--grid', choices=[kind.value for kind in GridKind])
        parser.add_argument('--repetitions', type=int)
        parser.add_argument('--reference-statistic', dest='reference_statistic',
                            choices=[statistic.value for statistic in ReferenceStatistic])
        parser.add_argument('--error-measure', dest='error_measure',
                            choices=[measure.value for measure in ErrorMeasure])
        parser.add_argument('--error-bound', dest='error_bound', type=float)
        parser.add_argument('--min-width', dest='min_width', type=int)
        parser.add_argument(
            '--reduce-degree', dest='reduce_degree', action='store_true', default=None,
            help='Lower the degree on leaves too narrow for their grid',
        )
        parser.add_argument('--merge', action='store_true',
                            help='Keep stored cases of the kernel that are not generated again')

    def model_config(self, descriptor, config, options):
        if options['config'] == 'default':
            model_config = default_config(descriptor, config.threads)
        else:
            try:
                data = json.loads(Path(options['config']).read_text())
                model_config = ModelConfig.from_dict(data)
            except (OSError, ValueError, TypeError) as e:
                raise CommandError(f"Cannot read model configuration {options['config']}: {str(e)}")
        return model_config.replace(**{
            key: options.get(key) for key in (
                'overfitting', 'oversampling', 'grid', 'repetitions', 'reference_statistic',
                'error_measure', 'error_bound', 'min_width', 'reduce_degree',
            )
        })

    def run(self, config, /, **options):
        descriptor = get_kernel(options['kernel'])
        model_config = self.model_config(descriptor, config, options)
        cases = ([parse_case(descriptor, text) for text in options['cases']]
                 or enumerate_cases(descriptor))
        domain = Domain.parse(options['domain'], len(descriptor.sizes))
        self.stdout.write(
            f"Modeling {descriptor.name}: {len(cases)} case(s) on {domain}, "
            f"overfitting {model_config.overfitting}"
        )
        model = generate_model(
            config.make_sampler(), model_config, descriptor, cases, domain,
            machine=config.machine_spec.name, backend=config.backend, threads=config.threads,
            seed=config.seed,
        )
        store = config.model_store()
        path = store.merge(model) if options['merge'] else store.save(model)
        leaves = sum(len(case_model.leaves) for case_model in model.models)
        self.stdout.write(self.style.SUCCESS(f"Wrote {leaves} leaf model(s) to {path}"))
