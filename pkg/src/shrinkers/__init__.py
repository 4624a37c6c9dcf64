"""Rotationally symmetric self-shrinkers: profile geodesics, conical ends, classification."""
__version__ = "0.1.0"
