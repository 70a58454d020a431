"""Grapheme-to-phoneme toolkit with evolution-strategy architecture search
and a prompted-speech recording service."""

__version__ = "0.1.0"
