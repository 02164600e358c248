"""HTTP service wrapping the store and kernels.

This is the untrusted side of the system: it holds masked triples and runs
correlation/thresholding on them, but never receives key material. Clients
mask before uploading and unmask after download.
"""

from .app import create_app
from .client import StoreClient

__all__ = ["create_app", "StoreClient"]
