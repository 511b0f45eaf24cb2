"""Free-fall body-flight workbench."""

__version__ = "0.1.0"
