"""MammoUnify - mammography dataset harmonization, bias audit and corruption injection."""

__version__ = "0.1.0"
