"""Numerical laboratory for mirror calibration identities and line bundle mean curvature flow on tori."""

__version__ = "0.1.0"

from .errors import FlowDiverged, InvalidInput, NotFound  # noqa: E402

__all__ = ["FlowDiverged", "InvalidInput", "NotFound", "__version__"]
