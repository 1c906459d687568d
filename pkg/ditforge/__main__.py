"""
Entry point for running ditforge as a module: python -m ditforge
"""

from ditforge.cli.commands import app

if __name__ == "__main__":
    app()
