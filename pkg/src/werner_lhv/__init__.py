"""Local hidden variable models for two-qubit Werner states."""

__version__ = "0.1.0"
