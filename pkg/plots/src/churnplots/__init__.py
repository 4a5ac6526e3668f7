"""Paper-style figures from churnsim CSV artifacts."""

__version__ = "0.1.0"
