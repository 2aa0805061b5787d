"""Run-length and Fisher-vector signatures for document image classification and retrieval."""

__version__ = "0.1.0"
