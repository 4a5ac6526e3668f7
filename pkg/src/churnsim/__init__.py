"""Deterministic discrete-event simulator of Bitcoin-style block and
transaction propagation under node churn."""

__version__ = "0.1.0"
