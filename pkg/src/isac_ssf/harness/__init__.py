"""Scenario orchestration, experiment sweeps and the command line interface."""
