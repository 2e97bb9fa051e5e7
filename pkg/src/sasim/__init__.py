"""Deterministic simulator for presence-only port automata with k-leader selection."""

__version__ = "0.1.0"
