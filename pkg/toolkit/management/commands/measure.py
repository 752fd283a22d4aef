import sys
from pathlib import Path

from django.core.management.base import CommandError

from sampler.calllist import format_timing, parse_call_list, run_call_list
from sampler.timers import TimerKind, make_timer
from toolkit.base import ToolkitCommand


class Command(ToolkitCommand):
    help = 'Run a call list and print one "cycles<TAB>seconds" line per kernel call'

    def add_command_arguments(self, parser):
        parser.add_argument('call_list', help="Call-list file ('-' reads standard input)")
        parser.add_argument(
            '--timer', choices=[kind.value for kind in TimerKind], default=TimerKind.CYCLES.value,
            help='Timer measuring each call',
        )
        parser.add_argument('--check', action='store_true',
                            help='Only validate the call list')

    def run(self, config, **options):
        source = options['call_list']
        try:
            text = sys.stdin.read() if source == '-' else Path(source).read_text()
        except OSError as e:
            raise CommandError(f"Cannot read call list {source}: {str(e)}")
        calls = parse_call_list(text)
        if options['check']:
            self.stdout.write(self.style.SUCCESS(f"{len(calls)} valid call(s)"))
            return
        machine = config.machine_spec
        timer = make_timer(options['timer'], machine)
        for _, seconds in run_call_list(text, config.make_backend(), timer):
            self.stdout.write(format_timing(seconds, machine.base_frequency))
