"""Streaming two-frame geometric estimation with a spatial memory cache.

Encodes image pairs with wavelet structure-aware blocks, reads/forgets/updates
a key-value memory, and decodes pointmaps, poses, confidence and rgb, with
illumination-aware supervision.  Ships its own procedural tube-scene generator
plus depth and point-cloud evaluation tooling.
"""

__version__ = "0.1.0"
