"""Configuration, training orchestration and the command-line entry point.

Submodules are imported explicitly (``pipeline.config``, ``pipeline.train``,
``pipeline.cli``) so lower layers can depend on the config without cycles.
"""
