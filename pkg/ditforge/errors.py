"""Base error type shared by every ditforge module."""


class DitforgeError(RuntimeError):
    """Raised for domain failures the CLI reports with exit code 1."""
