"""Certification of full network nonlocality in the three-branch star and bilocal networks."""

__version__ = "0.1.0"
