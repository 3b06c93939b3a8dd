"""Decision-oriented learning of submodular routing objectives."""

__version__ = "0.1.0"
