"""
Shared base for the pipeline management commands.

Adds the global flags (--config, --seed, --out, --workers), resolves the run
configuration and turns library errors into ``CommandError`` so the CLI exits
with a message instead of a traceback.
"""

import logging
from pathlib import Path

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError

from introspect_vmc.exceptions import IntrospectVMCError
from introspect_vmc.harness.config import RunConfig, load_run_config

logger = logging.getLogger('introspect_vmc.harness')


class PipelineCommand(BaseCommand):
    requires_system_checks = []

    # RunConfig keys a subclass lets the command line override, as {option dest: config key}
    config_options = {}

    def add_arguments(self, parser):
        parser.add_argument(
            '--config',
            type=str,
            default=None,
            help='Path to a key = value run configuration file'
        )
        parser.add_argument(
            '--seed',
            type=int,
            default=None,
            help='Run seed (data, training and evaluation seeds derive from it unless set explicitly)'
        )
        parser.add_argument(
            '--out',
            type=str,
            default=None,
            help='Run directory for artifacts (default: IVMC_OUTPUT_DIR)'
        )
        parser.add_argument(
            '--workers',
            type=int,
            default=None,
            help='Worker processes for episode campaigns'
        )
        self.add_command_arguments(parser)

    def add_command_arguments(self, parser):
        """Hook for command-specific flags."""

    def handle(self, *args, **options):
        workers = options['workers'] if options['workers'] is not None else settings.IVMC_WORKERS
        if workers < 1:
            raise CommandError('--workers must be at least 1')
        out = Path(options['out'] or settings.IVMC_OUTPUT_DIR)
        overrides = {'seed': options['seed']}
        overrides.update({key: options.get(dest) for dest, key in self.config_options.items()})
        try:
            config = load_run_config(options['config'], overrides)
            return self.run(config, out, workers, options)
        except IntrospectVMCError as exc:
            logger.error('%s failed: %s', self.__module__.rsplit('.', 1)[-1], exc)
            raise CommandError(str(exc)) from exc

    def run(self, config: RunConfig, out: Path, workers: int, options) -> str:
        raise NotImplementedError
