"""Feature selection with a sparse neural-network layer (SNeL-FS)."""

__version__ = "0.1.0"
