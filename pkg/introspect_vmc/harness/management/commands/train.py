"""
Django management command to train the visuomotor policy.

Usage:
    ivmc train --out runs/push
    ivmc train --out runs/push --dropout-free
"""

from introspect_vmc.harness.management.commands._base import PipelineCommand
from introspect_vmc.harness.pipeline import stage_train


class Command(PipelineCommand):
    help = 'Train the policy on the recorded demonstrations'

    config_options = {'epochs': 'epochs'}

    def add_command_arguments(self, parser):
        parser.add_argument(
            '--epochs',
            type=int,
            default=None,
            help='Training epochs'
        )
        parser.add_argument(
            '--dropout-free',
            action='store_true',
            help='Train the dropout-free baseline used for the VMC row instead'
        )

    def run(self, config, out, workers, options):
        result = stage_train(config, out, dropout_free=options['dropout_free'])
        rates = ', '.join(f'{p:.3f}' for p in result.model.dropout_rates) or 'none'
        self.stdout.write(
            f'Final train loss {result.final_train_loss:.6f}, validation loss {result.final_val_loss:.6f}, '
            f'dropout rates {rates}'
        )
        self.stdout.write(self.style.SUCCESS('Policy checkpoint written'))
        return ''
