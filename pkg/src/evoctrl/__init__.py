"""Desk-scale workbench for CPG skill learning and evolved swarm controllers."""

__version__ = "0.1.0"
