"""Hierarchical recurrent relational dynamics models and particle simulators."""

__version__ = "0.1.0"
