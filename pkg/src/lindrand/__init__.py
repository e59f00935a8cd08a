"""Randomized minimal-ancilla simulation of Lindblad dynamics, classically emulated."""

__version__ = "0.1.0"
