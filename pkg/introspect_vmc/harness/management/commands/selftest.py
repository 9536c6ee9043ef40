"""
Django management command to run the oracle and property test suite.

The suite is not installed with the package; without --tests the command
looks for it in the source checkout the package was imported from.

Usage:
    ivmc selftest
    ivmc selftest --slow
    ivmc selftest --tests path/to/tests
"""

from pathlib import Path

from django.core.management.base import BaseCommand, CommandError

DEFAULT_TESTS = Path(__file__).resolve().parents[4] / 'tests'


class Command(BaseCommand):
    help = 'Run the test suite (slow acceptance experiments only with --slow)'

    requires_system_checks = []

    def add_arguments(self, parser):
        parser.add_argument(
            '--slow',
            action='store_true',
            help='Also run the slow end-to-end experiments'
        )
        parser.add_argument(
            '--tests',
            type=str,
            default=None,
            help='Directory holding the test suite (default: tests/ of the source checkout)'
        )

    def handle(self, *args, **options):
        import pytest

        if options['tests'] is None:
            tests = DEFAULT_TESTS
            if not tests.is_dir():
                raise CommandError(
                    'No test suite found next to the installed package; '
                    'run from a source checkout or pass --tests DIR'
                )
        else:
            tests = Path(options['tests'])
            if not tests.exists():
                raise CommandError(f'Test directory not found: {tests}')
        argv = ['-q', str(tests)]
        if options['slow']:
            argv.append('--runslow')
        code = pytest.main(argv)
        if code != 0:
            raise CommandError(f'Self-test failed (pytest exit code {int(code)})')
        self.stdout.write(self.style.SUCCESS('Self-test passed'))
