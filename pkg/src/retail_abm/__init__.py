"""Agent-based simulation of competing pharmacy retail channels in a town."""
__version__ = "0.1.0"
