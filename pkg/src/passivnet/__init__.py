"""Decentralized passivity-based controller synthesis for coupled discrete-time LTI networks."""

__version__ = "0.1.0"
