"""
Django management command to choose the recovery threshold.

Usage:
    ivmc pick-threshold --out runs/push
    ivmc pick-threshold --out runs/push --lambdas 0.1,0.3,0.5
"""

from django.core.management.base import CommandError

from introspect_vmc.harness.management.commands._base import PipelineCommand
from introspect_vmc.harness.pipeline import stage_pick_threshold


class Command(PipelineCommand):
    help = 'Roll out the policy on validation scenes and pick the uncertainty threshold C'

    config_options = {'n_val': 'n_val'}

    def add_command_arguments(self, parser):
        parser.add_argument(
            '--n-val',
            type=int,
            default=None,
            help='Number of validation episodes'
        )
        parser.add_argument(
            '--lambdas',
            type=str,
            default='',
            help='Comma-separated calibration weights to sweep in addition to lam'
        )

    def run(self, config, out, workers, options):
        try:
            lambdas = [float(v) for v in options['lambdas'].split(',') if v.strip()]
        except ValueError:
            raise CommandError(f"Invalid --lambdas value {options['lambdas']!r}")
        results = stage_pick_threshold(config, out, workers, lambdas)
        for lam, result in results.items():
            self.stdout.write(f'lam={lam:g}  C={result.C!r}  i*={result.i_star}  r_bar={result.r_bar:.3f}')
            if result.degenerate:
                self.stdout.write(self.style.WARNING('  degenerate validation set, recovery disabled'))
        self.stdout.write(self.style.SUCCESS('Threshold recorded in the manifest'))
        return ''
