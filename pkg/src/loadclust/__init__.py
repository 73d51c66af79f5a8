"""Hierarchical temporal/spatial clustering of composite load models."""
