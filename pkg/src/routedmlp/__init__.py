"""Participant-routed MLP classifiers for multi-source tabular prediction."""

__version__ = "0.1.0"
