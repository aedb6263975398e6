"""Membership inference auditing for small classifiers."""

__version__ = "0.1.0"
