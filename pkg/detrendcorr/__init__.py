"""detrendcorr - detrended cross-correlation analysis of NFT collection markets.

Tick ingestion, MFDFA and q-dependent detrended correlation coefficients,
random-matrix filtering and minimal-spanning-tree networks, with synthetic
generators that serve as ground truth for every estimator.
"""

__version__ = "0.3.0"
