"""Numerical laboratory for point-source recovery in an inhomogeneous Helmholtz medium."""

from hslab.grid import (
    CubeGrid,
    ScalarField,
    SpectralField,
    eval_at,
    from_spectral,
    sobolev_norm,
    spectral_derivative,
    to_spectral,
)

__version__ = "0.1.0"
