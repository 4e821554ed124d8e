"""Cross-comparison of rectilinear polygon sets by Jaccard similarity."""

__version__ = "0.1.0"
