"""
Periodic inverse of the drift operator Delta + 2i xi . grad on the shifted lattice.

With xi = (s, it, 0) in canonical coordinates the symbol is
|alpha|^2 + 2 s alpha_1 + 2 i t alpha_2.  The half shift keeps alpha_2 away
from zero, so the imaginary part is at least pi t / R0 in modulus and the
inverse is a bounded diagonal operator.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from hslab.grid import SpectralField, sobolev_norm, spectral_derivative

__all__ = [
    "FaddeevParameter",
    "denominator",
    "min_abs_imag_denominator",
    "apply_G",
    "l2_bound_factor",
    "gradient_bound_factor",
    "gradient_bound_check",
]


@dataclass(frozen=True)
class FaddeevParameter:
    """Canonical drift parameter xi = s * frame[:,0] + i t * frame[:,1]."""

    s: float
    t: float
    frame: np.ndarray = field(default_factory=lambda: np.eye(3))

    def __post_init__(self) -> None:
        if self.t <= 0:
            raise ValueError("t must be positive")
        f = np.asarray(self.frame, dtype=float)
        if f.shape != (3, 3) or np.max(np.abs(f.T @ f - np.eye(3))) > 1e-12:
            raise ValueError("frame must be orthonormal")
        object.__setattr__(self, "frame", f)

    @property
    def xi(self) -> np.ndarray:
        """The complex vector in ambient coordinates."""
        return self.s * self.frame[:, 0] + 1j * self.t * self.frame[:, 1]


def denominator(grid, param: FaddeevParameter) -> np.ndarray:
    """Symbol |alpha|^2 + 2 s alpha_1 + 2 i t alpha_2 on the frequency lattice."""
    a1 = grid.alpha_axis(0)[:, None, None]
    a2 = grid.alpha_axis(1)[None, :, None]
    return grid.alpha_sq + 2.0 * param.s * a1 + 2j * param.t * a2


def min_abs_imag_denominator(grid, param: FaddeevParameter) -> float:
    """Smallest |Im symbol| over the lattice; equals t pi / R0 by the half shift."""
    a2 = grid.alpha_axis(1)
    return float(2.0 * param.t * np.min(np.abs(a2)))


def apply_G(spec: SpectralField, param: FaddeevParameter) -> SpectralField:
    """Coefficient-wise -1/symbol; exact inverse of the drift operator."""
    den = denominator(spec.grid, param)
    return SpectralField(spec.grid, -spec.coeffs / den)


def l2_bound_factor(grid, param: FaddeevParameter) -> float:
    """Operator bound R0 / (pi t) for the L2 -> L2 action."""
    return grid.R0 / (np.pi * param.t)


def gradient_bound_factor(grid, param: FaddeevParameter) -> float:
    """Bound for the summed first-derivative norms of the inverse."""
    s, t = abs(param.s), param.t
    return grid.R0 / np.pi * (s + np.sqrt(s**2 + np.pi * t / grid.R0)) / t


def gradient_bound_check(
    spec: SpectralField, param: FaddeevParameter
) -> tuple[float, float]:
    """(sum_i ||d_i G f||, bound * ||f||); the first never exceeds the second."""
    out = apply_G(spec, param)
    lhs = sum(sobolev_norm(spectral_derivative(out, axis), 0) for axis in range(3))
    rhs = gradient_bound_factor(spec.grid, param) * sobolev_norm(spec, 0)
    return float(lhs), float(rhs)
