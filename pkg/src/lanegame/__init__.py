"""Game-theoretic lane-change decisions with potential-field MPC planning."""

__version__ = "0.1.0"
