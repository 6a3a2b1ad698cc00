"""Deterministic offline evaluation harness for trading agents on binary prediction markets."""

__version__ = "0.1.0"
