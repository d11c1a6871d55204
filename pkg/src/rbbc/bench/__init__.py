"""Experiment harness: configuration, world assembly, metrics and reports."""
