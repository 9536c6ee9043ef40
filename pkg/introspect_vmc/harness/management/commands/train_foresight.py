"""
Django management command to train the uncertainty foresight model.

Usage:
    ivmc train-foresight --out runs/push
"""

from introspect_vmc.harness.management.commands._base import PipelineCommand
from introspect_vmc.harness.pipeline import stage_train_foresight


class Command(PipelineCommand):
    help = 'Fit the foresight model to the collected distillation data'

    config_options = {'epochs': 'foresight_epochs'}

    def add_command_arguments(self, parser):
        parser.add_argument(
            '--epochs',
            type=int,
            default=None,
            help='Foresight training epochs'
        )

    def run(self, config, out, workers, options):
        report = stage_train_foresight(config, out)
        self.stdout.write(
            f"Held-out MSE {report['heldout_mse']:.6g}, R2 {report['heldout_r2']:.3f} "
            f"({report['samples']} samples, {report['target_transform']} targets)"
        )
        self.stdout.write(self.style.SUCCESS('Foresight checkpoint written'))
        return ''
