"""Chord transcription decoding with harmonic language and duration models."""

__version__ = "0.1.0"
