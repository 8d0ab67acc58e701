"""Peeling explorations of critical bipartite Boltzmann maps and their cores."""

__version__ = "0.1.0"
