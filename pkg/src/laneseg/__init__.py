"""Lane segmentation engine: encoder-decoder network with index unpooling,
trained pixel-wise, plus a street-view acquisition pipeline."""

__version__ = "0.1.0"
