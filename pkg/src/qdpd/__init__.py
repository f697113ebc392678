"""Digital predistortion for frequency-multiplexed qubit control signals."""

__version__ = "0.1.0"
