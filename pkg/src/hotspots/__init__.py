"""Hot-spot dynamics for heat flows with radial inverse-square type potentials.

Modules
-------
potential
    Potential families, characteristic exponents and the regularity check.
profiles
    Positive harmonic profiles U_k, operator classes and the functionals
    F, Gamma, Lambda, Pi and S.
spectral
    Spherical-harmonic decomposition of initial data and the moments
    M(phi), Xi(phi), M_{k,i}.
evolution
    Per-mode Crank-Nicolson evolution in the gauge w = u / U_k.
hotspot
    Hot-spot location, predictions per case and rate fitting.
scenario, cli
    YAML scenarios and the ``hotspots`` command line tool.
"""
from __future__ import annotations

from . import errors, evolution, hotspot, potential, profiles, spectral
from .errors import HotSpotsError
from .potential import PotentialSpec, characteristic_exponents, decaying, hardy, lorentz, tabulated, zero
from .profiles import classify_operator, solve_profile, solve_profiles
from .spectral import FunctionData, ModeList, RadialMode, decompose

__version__ = "0.1.0"

__all__ = [
    "errors", "evolution", "hotspot", "potential", "profiles", "spectral",
    "HotSpotsError", "PotentialSpec", "characteristic_exponents",
    "zero", "hardy", "lorentz", "decaying", "tabulated",
    "solve_profile", "solve_profiles", "classify_operator",
    "FunctionData", "ModeList", "RadialMode", "decompose",
]
