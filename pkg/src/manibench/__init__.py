"""Desk-scale mobile-manipulation simulator, PPO trainer, and trajectory data factory."""

__version__ = "0.1.0"
