"""Rank-one connections and T_N configurations in small matrix spaces."""

__version__ = "0.1.0"
