"""Embedding sidecar: real sentence encoders behind the routing wire protocol."""

__version__ = "0.1.0"
