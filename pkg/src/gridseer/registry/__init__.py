"""Self-hosted model registry: store, HTTP server and client."""

from .client import RegistryClient
from .server import RegistryServer
from .store import RegistryEntry, RegistryStore

__all__ = ["RegistryClient", "RegistryEntry", "RegistryServer", "RegistryStore"]
