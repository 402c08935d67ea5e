"""Differential testing of database-connector backends with bandit-scheduled test generation."""

from __future__ import annotations

__version__ = "0.1.0"
