"""Target-coin prediction for crypto pump-and-dump channels.

Pipeline: message corpus -> pump-message detector -> sessions and events ->
market features -> sequence model with positional attention -> ranking metrics.
"""

__version__ = "0.1.0"
