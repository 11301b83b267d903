"""Neural-network pulse synthesis for preparing qudit states in a qubit-coupled oscillator."""

__version__ = "0.1.0"
