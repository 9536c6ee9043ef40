"""
Django management command to rebuild the report from evaluation results.

Usage:
    ivmc report --out runs/push
"""

from introspect_vmc.harness.management.commands._base import PipelineCommand
from introspect_vmc.harness.pipeline import stage_report


class Command(PipelineCommand):
    help = 'Recompute the results table, binning report and McNemar counts from episodes.csv'

    def run(self, config, out, workers, options):
        self.stdout.write(stage_report(config, out))
        return ''
