"""
Django management command to generate expert demonstrations.

Usage:
    ivmc gen-demos --out runs/push --count 500
    ivmc gen-demos --config push.cfg --task pick_place --workers 4
"""

from django.core.management.base import CommandError

from introspect_vmc.harness.management.commands._base import PipelineCommand
from introspect_vmc.harness.pipeline import stage_gen_demos


class Command(PipelineCommand):
    help = 'Roll out the scripted expert and write a demonstration dataset'

    config_options = {'count': 'demo_count', 'task': 'task', 'obs_mode': 'obs_mode', 'horizon': 'horizon'}

    def add_command_arguments(self, parser):
        parser.add_argument(
            '--count',
            type=int,
            default=None,
            help='Number of successful expert episodes'
        )
        parser.add_argument(
            '--task',
            type=str,
            default=None,
            choices=['pushing', 'pick_place', 'pick_reach'],
            help='Task to demonstrate'
        )
        parser.add_argument(
            '--obs-mode',
            type=str,
            default=None,
            choices=['grid', 'oracle'],
            help='Observation mode stored in the dataset'
        )
        parser.add_argument(
            '--horizon',
            type=int,
            default=None,
            help='Episode length limit H'
        )

    def handle(self, *args, **options):
        if options.get('count') is not None and options['count'] <= 0:
            raise CommandError('--count must be positive')
        return super().handle(*args, **options)

    def run(self, config, out, workers, options):
        path = stage_gen_demos(config, out, workers)
        self.stdout.write(self.style.SUCCESS(f'Wrote {config.demo_count} demonstrations to {path}'))
        return ''
