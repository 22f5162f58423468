"""Tunnel coupling of an ion-perturbed bosonic double well, the entangling sequence and two-mode dynamics."""

__version__ = "0.1.0"
