"""Utility functions for ditforge."""

from ditforge.utils.helpers import ensure_dir, parse_bucket, parse_rate, parse_size

__all__ = ["ensure_dir", "parse_bucket", "parse_rate", "parse_size"]
