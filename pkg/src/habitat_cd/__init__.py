"""Post-classification and direct change detection pipeline for habitat maps."""

__version__ = "0.1.0"
