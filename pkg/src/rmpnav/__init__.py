"""Vehicle navigation with Riemannian motion policies."""

__version__ = "0.1.0"
