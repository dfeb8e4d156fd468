"""Procedural lumen renderer for the synthetic source and shifted target domains."""
