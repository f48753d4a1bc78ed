"""Spectrally balanced DRAG pulses for crosstalk suppression in transmon processors."""

__version__ = "0.1.0"
