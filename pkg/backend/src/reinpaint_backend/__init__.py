"""Reference HTTP inpainting backend for the reinpaint evaluation harness."""

__version__ = "0.1.0"

from .inpainters import INPAINTERS, identity_inpaint, nearest_boundary_fill
from .server import make_server, serve

__all__ = ["INPAINTERS", "identity_inpaint", "nearest_boundary_fill",
           "make_server", "serve", "__version__"]
