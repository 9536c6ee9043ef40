"""
Django app driving the pipeline: configuration, artifact manifest, evaluation
campaigns, reports and the ``ivmc`` management commands.
"""
