"""Matching priors solved by characteristics, with saddlepoint tail approximations."""

__version__ = "0.1.0"
