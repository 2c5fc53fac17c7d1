"""Recognize and draw online handwritten characters with recurrent networks."""

__version__ = "0.1.0"
