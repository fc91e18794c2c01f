"""Constructive Q-commuting dilations and Q-commutant liftings."""

__version__ = "0.1.0"
