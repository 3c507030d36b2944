"""
pcfgnn - Pre-trained cross-feature graph networks for CTR prediction.

Learns explicit semantic cross features from click logs and serves the
inferred values to downstream CTR models.
"""

__version__ = "0.1.0"
