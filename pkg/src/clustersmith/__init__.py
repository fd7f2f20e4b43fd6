"""Cluster topology modeling, communication cost analysis, PCIe
contention simulation, parallelism planning, and rent-vs-buy economics."""

__version__ = "0.1.0"
