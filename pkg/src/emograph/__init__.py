"""Emotion diffusion on synthetic, LLM-simulated and real social reply graphs."""

__version__ = "0.1.0"
