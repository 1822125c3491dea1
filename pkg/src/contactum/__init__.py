"""Contact Hamiltonian mechanics on Darboux-chart atlases."""

__version__ = "0.1.0"
