"""Factorization workbench: ILP encodings of factoring, a gate-network emulator
that solves them, and the relation algebra that turns solutions into factors."""

__version__ = "0.1.0"
