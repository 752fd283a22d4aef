from toolkit.base import ToolkitCommand
from toolkit.reports import export_report, load_report

SEPARATORS = {'comma': ',', 'tab': '\t', 'semicolon': ';'}


class Command(ToolkitCommand):
    help = 'Convert a JSON prediction report into a delimiter-separated table for plotting'

    def add_command_arguments(self, parser):
        parser.add_argument('report', help='JSON report written with --output')
        parser.add_argument('--output', required=True, help='Table file to write')
        parser.add_argument('--separator', choices=sorted(SEPARATORS), default='comma')

    def run(self, config, **options):
        report = load_report(options['report'])
        frame = export_report(report, options['output'], SEPARATORS[options['separator']])
        self.stdout.write(self.style.SUCCESS(
            f"Exported {len(frame)} row(s) of a {report['kind']} report to {options['output']}"
        ))
