"""
Django management command to run the paired evaluation campaign.

Usage:
    ivmc evaluate --out runs/push
    ivmc evaluate --out runs/push --modes none,min_unc --n-eval 50
"""

from introspect_vmc.harness.management.commands._base import PipelineCommand
from introspect_vmc.harness.pipeline import stage_evaluate


class Command(PipelineCommand):
    help = 'Evaluate VMC, BVMC and each recovery mode on shared scenes and write the report'

    config_options = {'n_eval': 'n_eval', 'n_binning': 'n_binning'}

    def add_command_arguments(self, parser):
        parser.add_argument(
            '--modes',
            type=str,
            default=None,
            help='Comma-separated recovery modes (none, rand, init, min_unc)'
        )
        parser.add_argument(
            '--n-eval',
            type=int,
            default=None,
            help='Evaluation episodes per row'
        )
        parser.add_argument(
            '--n-binning',
            type=int,
            default=None,
            help='No-recovery episodes for the uncertainty binning'
        )

    def run(self, config, out, workers, options):
        modes = [m.strip() for m in options['modes'].split(',') if m.strip()] if options['modes'] else None
        text = stage_evaluate(config, out, workers, modes)
        self.stdout.write(text)
        return ''
