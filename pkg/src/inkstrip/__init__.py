"""Synthetic ink-artifact data, a from-scratch U-net eraser and its evaluation tools."""
from __future__ import annotations

__version__ = "0.1.0"
