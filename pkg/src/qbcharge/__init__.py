"""Collision-model charging of a transmon quantum battery."""
from .collision import AncillaSpec, ProtocolConfig, Trajectory, run_protocol
from .observables import efficiency, ergotropy, stored_energy
from .transmon import Spectrum, TransmonSpec, solve_spectrum

__version__ = "0.1.0"

__all__ = ["AncillaSpec", "ProtocolConfig", "Trajectory", "run_protocol", "efficiency",
           "ergotropy", "stored_energy", "Spectrum", "TransmonSpec", "solve_spectrum"]
