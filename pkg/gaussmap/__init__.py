"""
gaussmap: LiDAR-initialized Gaussian splatting maps refined against posed images.
"""

__version__ = "0.1.0"
