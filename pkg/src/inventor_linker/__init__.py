"""Inventor/author disambiguation between patents and scientific publications."""

__version__ = "0.1.0"
