"""Partial-map localization: decide whether a robot is inside a partial
occupancy-grid map, and where, using a particle filter whose outside-map
observation likelihood comes from a hierarchical Dirichlet model of
environment structure."""

__version__ = "0.1.0"
