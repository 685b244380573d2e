"""Camera-aided mmWave beam alignment laboratory for road-side-unit links."""
from .kernels import BACKEND

__version__ = "0.1.0"
__all__ = ["BACKEND", "__version__"]
