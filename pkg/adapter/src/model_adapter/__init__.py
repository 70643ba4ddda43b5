"""Reference model-serving shim behind the kurag wire schemas."""

from .config import AdapterConfig, AdapterError
from .service import create_app

__version__ = "0.1.0"

__all__ = ["AdapterConfig", "AdapterError", "create_app"]
