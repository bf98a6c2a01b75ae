"""Equity market simulator with valid-to quoting and locked-share settlement."""

__version__ = "0.1.0"
