"""Breakable Machine: a local-network classroom game server where students
try to spoof an image classifier, with CAM-based saliency views."""

__version__ = "0.1.0"
