"""Viewport-adaptive omnidirectional video streaming at the network edge.

Submodules: :mod:`imagery` (frames, PPM), :mod:`geometry` (ERP reprojection),
:mod:`vbm` (FOV/Base/Margin frames), :mod:`prediction`, :mod:`clustering`,
:mod:`metrics` and :mod:`pipeline` (simulation).
"""
from .errors import ConfigError, EvasError, LayoutError, PpmError, TraceError
from .geometry import Viewport
from .imagery import Frame, Rect

__version__ = "0.1.0"

__all__ = ["ConfigError", "EvasError", "Frame", "LayoutError", "PpmError", "Rect",
           "TraceError", "Viewport"]
