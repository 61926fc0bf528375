"""Self-play search for the highest-safe-rung game."""
__version__ = "0.1.0"
