"""Experiment orchestration, the scripted low-level policy and the CLI."""
