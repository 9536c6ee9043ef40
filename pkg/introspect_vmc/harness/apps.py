"""
Django app configuration for the introspect_vmc harness.
"""

from django.apps import AppConfig


class HarnessConfig(AppConfig):
    """App configuration exposing the pipeline management commands."""

    name = 'introspect_vmc.harness'
    label = 'ivmc_harness'
    verbose_name = 'Introspective VMC Harness'
