"""Numerical laboratory for spectral mixing and anomalous dissipation in the
rough Kraichnan passive-scalar model: special functions, Mellin asymptotics
of the flux function, the radial spectral master equation, and a Monte Carlo
lattice SPDE cross-check."""

__version__ = "0.1.0"

from . import errors, specfun, quad, mellin, flux, spectral, mc_spde, cli  # noqa: F401,E402
from .specfun import ModelParams  # noqa: F401
