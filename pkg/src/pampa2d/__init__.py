"""pampa2d: third-order point-average schemes for 2D hyperbolic systems on polygonal meshes."""

__version__ = "0.1.0"
