"""Early-warning indicators of critical and noise-induced transitions in price series."""

__version__ = "0.1.0"
