"""Exhaustive laboratory for random K-SAT solution geometry, overlap gaps,
frustration-free CAT Hamiltonians, and p-spin models on regular hypergraphs."""

__version__ = "0.1.0"
