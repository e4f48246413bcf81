"""Source separation with a quantum-inspired genetic algorithm over band masks."""

__version__ = "0.1.0"
