"""Synthetic RF waveform classification with an autoencoder watchdog for unknown signals."""

__version__ = "0.1.0"
