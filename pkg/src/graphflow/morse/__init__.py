"""Desk-scale Morse theory on the catalog surfaces."""

from .backend import (
    CriticalPoint,
    MorseBackend,
    MorseComplex,
    backend_from_config,
    euler_from_critical_points,
    find_critical_points,
    homology_ranks,
    integrate_trajectory,
    morse_boundary,
)
from .flow import BACKWARD, FORWARD, Trajectory
from .functions import CATALOG, catalog_function, make_function
from .manifolds import RP2, Sphere, Torus, get_manifold

__all__ = [
    "BACKWARD", "CATALOG", "FORWARD", "RP2", "CriticalPoint", "MorseBackend", "MorseComplex",
    "Sphere", "Torus", "Trajectory", "backend_from_config", "catalog_function",
    "euler_from_critical_points", "find_critical_points", "get_manifold", "homology_ranks",
    "integrate_trajectory", "make_function", "morse_boundary",
]
