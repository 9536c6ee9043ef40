"""
Django management command to collect foresight distillation data.

Usage:
    ivmc collect-foresight --out runs/push --episodes 200 --workers 4
"""

from introspect_vmc.harness.management.commands._base import PipelineCommand
from introspect_vmc.harness.pipeline import stage_collect_foresight


class Command(PipelineCommand):
    help = 'Deploy the trained policy and record (embedding, action, next uncertainty) samples'

    config_options = {'episodes': 'n_foresight_episodes'}

    def add_command_arguments(self, parser):
        parser.add_argument(
            '--episodes',
            type=int,
            default=None,
            help='Number of exploration episodes'
        )

    def run(self, config, out, workers, options):
        path = stage_collect_foresight(config, out, workers)
        self.stdout.write(self.style.SUCCESS(f'Distillation data written to {path}'))
        return ''
