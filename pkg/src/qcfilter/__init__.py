"""Conformity assessment as a probabilistic filter, and the partial safety factors it buys."""

__version__ = "0.1.0"
