"""CLI module for ditforge."""
