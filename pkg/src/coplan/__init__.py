"""Robust co-planning of line hardening and mobile hydrogen resources."""

__version__ = "0.1.0"
