"""Joint spectrum-sensing and power-allocation equilibrium toolkit."""

from ._kernels import BACKEND_NAME

__version__ = "0.1.0"
__all__ = ["BACKEND_NAME", "__version__"]
