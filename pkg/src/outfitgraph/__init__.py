"""Outfit compatibility scoring with graph and hypergraph neural models."""

__version__ = "0.1.0"
