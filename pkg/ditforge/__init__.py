"""
ditforge - desk-scale training infrastructure for video diffusion transformers
"""

__version__ = "0.1.0"
__logo__ = "⚒"
