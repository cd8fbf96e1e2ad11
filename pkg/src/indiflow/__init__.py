"""Data-driven INDI optical-flow landing simulator."""
from ._accel import backend_name

__version__ = "0.1.0"
__all__ = ["backend_name", "__version__"]
