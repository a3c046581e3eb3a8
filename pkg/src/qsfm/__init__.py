"""Classical stochastic finite state machines, tight-binding qubits and Wannier bases."""

__version__ = "0.1.0"
