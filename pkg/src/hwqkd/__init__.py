"""Simulator and attack workbench for a post-selection quantum key distribution scheme."""

__version__ = "0.1.0"
