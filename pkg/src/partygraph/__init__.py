"""Graph-based party affiliation inference for social network users."""

__version__ = "0.1.0"
