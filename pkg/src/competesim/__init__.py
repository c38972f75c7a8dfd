"""Simulation of learners competing for users who pick among them."""

__version__ = "0.1.0"
