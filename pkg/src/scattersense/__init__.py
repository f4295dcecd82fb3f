"""Scatter localization from MIMO-OFDM channel state information.

The pipeline turns a channel matrix into an angular-delay image, detects
scatter coordinates with a small anchor-based convolutional detector, and
maps each detection to a 2D position through the bistatic ellipse.
"""

from scattersense.config import SystemConfig

__version__ = "0.1.0"

__all__ = ["SystemConfig", "__version__"]
