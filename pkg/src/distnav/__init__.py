"""Desk-scale object-goal navigation with predicted distance fields."""
__version__ = "0.1.0"
