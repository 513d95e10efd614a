"""Learning and evaluating path-specific dynamic treatment regimes."""
__version__ = "0.1.0"
