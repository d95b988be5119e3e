"""
Fields on the cube (-R0, R0)^3 and transforms to the half-shifted Fourier lattice.

The frequency lattice carries a half-integer offset in the second axis:
alpha = (pi/R0) * (m1, m2 + 1/2, m3) with integer m.  The offset is what makes
the drift operator Delta + 2i xi . grad invertible mode by mode (see faddeev).
Transforms realize the offset as a modulation by exp(-i pi x2 / (2 R0)) around
a plain FFT, so band-limited fields round-trip exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property

import numpy as np

__all__ = [
    "CubeGrid",
    "ScalarField",
    "SpectralField",
    "to_spectral",
    "from_spectral",
    "eval_at",
    "eval_with_gradient",
    "spectral_derivative",
    "sobolev_norm",
    "resample",
    "dump_field",
    "load_field",
]


@dataclass(frozen=True)
class CubeGrid:
    """Uniform periodic grid on the cube (-R0, R0)^3, n nodes per axis."""

    R0: float
    n: int

    def __post_init__(self) -> None:
        if self.R0 <= 0:
            raise ValueError("R0 must be positive")
        if self.n % 2 != 0 or self.n < 8:
            raise ValueError("n must be even and >= 8")

    @property
    def spacing(self) -> float:
        return 2.0 * self.R0 / self.n

    @cached_property
    def axis_nodes(self) -> np.ndarray:
        return -self.R0 + self.spacing * np.arange(self.n)

    @cached_property
    def mode_numbers(self) -> np.ndarray:
        """Integer mode numbers in FFT layout: 0..n/2-1, -n/2..-1."""
        return np.fft.fftfreq(self.n, d=1.0 / self.n).astype(np.int64)

    def alpha_axis(self, axis: int) -> np.ndarray:
        """Frequency values along one axis; axis 1 carries the half shift."""
        shift = 0.5 if axis == 1 else 0.0
        return (np.pi / self.R0) * (self.mode_numbers + shift)

    @cached_property
    def alpha_sq(self) -> np.ndarray:
        """|alpha|^2 on the full (n, n, n) frequency lattice."""
        a1, a2, a3 = (self.alpha_axis(i) for i in range(3))
        return (
            a1[:, None, None] ** 2 + a2[None, :, None] ** 2 + a3[None, None, :] ** 2
        )

    def nodes(self) -> np.ndarray:
        """All grid nodes as an (n, n, n, 3) array."""
        x = self.axis_nodes
        g = np.stack(np.meshgrid(x, x, x, indexing="ij"), axis=-1)
        return g

    def contains(self, points: np.ndarray, tol: float = 1e-12) -> np.ndarray:
        pts = np.atleast_2d(points)
        return np.all(np.abs(pts) <= self.R0 * (1.0 + tol) + tol, axis=-1)


@dataclass(frozen=True)
class ScalarField:
    """Complex samples on the nodes of a CubeGrid."""

    grid: CubeGrid
    values: np.ndarray

    def __post_init__(self) -> None:
        n = self.grid.n
        if self.values.shape != (n, n, n):
            raise ValueError(f"values must have shape {(n, n, n)}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("values must be finite")


@dataclass(frozen=True)
class SpectralField:
    """Coefficients on the half-shifted frequency lattice, FFT layout."""

    grid: CubeGrid
    coeffs: np.ndarray

    def __post_init__(self) -> None:
        n = self.grid.n
        if self.coeffs.shape != (n, n, n):
            raise ValueError(f"coeffs must have shape {(n, n, n)}")
        if not np.all(np.isfinite(self.coeffs)):
            raise ValueError("coeffs must be finite")


def _half_shift_modulation(grid: CubeGrid) -> np.ndarray:
    # exp(-i pi x2 / (2 R0)) sampled on the axis nodes
    return np.exp(-0.5j * np.pi * grid.axis_nodes / grid.R0)


def _parity_phases(grid: CubeGrid) -> np.ndarray:
    # (-1)^(m1+m2+m3), from referencing the FFT sum to the node x = -R0
    sign = np.where(grid.mode_numbers % 2 == 0, 1.0, -1.0)
    return sign[:, None, None] * sign[None, :, None] * sign[None, None, :]


def to_spectral(field: ScalarField) -> SpectralField:
    """Expand grid samples in the orthonormal basis (2R0)^{-3/2} exp(i alpha.x)."""
    g = field.grid
    mod = _half_shift_modulation(g)
    work = field.values * mod[None, :, None]
    coeffs = np.fft.fftn(work)
    coeffs *= _parity_phases(g) * (2.0 * g.R0) ** 1.5 / g.n**3
    return SpectralField(g, coeffs)


def from_spectral(spec: SpectralField) -> ScalarField:
    """Exact inverse of to_spectral."""
    g = spec.grid
    work = spec.coeffs * _parity_phases(g) * (g.n**3 / (2.0 * g.R0) ** 1.5)
    values = np.fft.ifftn(work)
    values /= _half_shift_modulation(g)[None, :, None]
    return ScalarField(g, values)


def _axis_phases(grid: CubeGrid, points: np.ndarray) -> tuple[np.ndarray, ...]:
    # per-axis phase tables exp(i alpha_j x_j), shape (npoints, n)
    return tuple(
        np.exp(1j * np.outer(points[:, axis], grid.alpha_axis(axis)))
        for axis in range(3)
    )


def eval_at(spec: SpectralField, points: np.ndarray) -> np.ndarray | complex:
    """Evaluate the trigonometric sum at arbitrary points of the closed cube."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    g = spec.grid
    if not np.all(g.contains(pts)):
        raise ValueError("evaluation point outside the closed cube")
    p1, p2, p3 = _axis_phases(g, pts)
    vals = np.einsum("abc,pa,pb,pc->p", spec.coeffs, p1, p2, p3, optimize=True)
    vals *= (2.0 * g.R0) ** -1.5
    if np.asarray(points).ndim == 1:
        return complex(vals[0])
    return vals


def eval_with_gradient(
    spec: SpectralField, points: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Values and gradients at arbitrary points, sharing one phase table."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    g = spec.grid
    if not np.all(g.contains(pts)):
        raise ValueError("evaluation point outside the closed cube")
    phases = _axis_phases(g, pts)
    scale = (2.0 * g.R0) ** -1.5
    vals = np.einsum("abc,pa,pb,pc->p", spec.coeffs, *phases, optimize=True) * scale
    grads = np.empty((pts.shape[0], 3), dtype=complex)
    for axis in range(3):
        tabs = list(phases)
        tabs[axis] = tabs[axis] * (1j * g.alpha_axis(axis))[None, :]
        grads[:, axis] = (
            np.einsum("abc,pa,pb,pc->p", spec.coeffs, *tabs, optimize=True) * scale
        )
    return vals, grads


def spectral_derivative(spec: SpectralField, axis: int) -> SpectralField:
    """Exact derivative of the trigonometric representative along one axis."""
    if axis not in (0, 1, 2):
        raise ValueError("axis must be 0, 1 or 2")
    g = spec.grid
    alpha = g.alpha_axis(axis)
    shape = [1, 1, 1]
    shape[axis] = g.n
    return SpectralField(g, spec.coeffs * (1j * alpha).reshape(shape))


def sobolev_norm(spec: SpectralField, s: int) -> float:
    """Norm with multiplier (1 + |alpha|^2)^(s/2); s = 0 is the plain L2 norm."""
    if s not in (0, 1, 2, 3):
        raise ValueError("s must be one of 0, 1, 2, 3")
    w = (1.0 + spec.grid.alpha_sq) ** s
    return float(np.sqrt(np.sum(w * np.abs(spec.coeffs) ** 2)))


def resample(spec: SpectralField, n_new: int) -> ScalarField:
    """Exact band-limited resampling onto a finer grid (zero padding)."""
    g = spec.grid
    if n_new < g.n:
        raise ValueError("resample only refines")
    fine = CubeGrid(g.R0, n_new)
    coeffs = np.zeros((n_new, n_new, n_new), dtype=complex)
    half = g.n // 2
    idx = np.r_[0:half, n_new - half : n_new]
    src = np.r_[0:half, g.n - half : g.n]
    coeffs[np.ix_(idx, idx, idx)] = spec.coeffs[np.ix_(src, src, src)]
    return from_spectral(SpectralField(fine, coeffs))


_DUMP_KINDS = {"scalar": ScalarField, "spectral": SpectralField}


def dump_field(field: ScalarField | SpectralField, path: str) -> None:
    """Write a field as a JSON header line plus interleaved little-endian doubles."""
    if isinstance(field, ScalarField):
        kind, data = "scalar", field.values
    elif isinstance(field, SpectralField):
        kind, data = "spectral", field.coeffs
    else:
        raise TypeError("expected ScalarField or SpectralField")
    header = json.dumps({"R0": field.grid.R0, "n": field.grid.n, "kind": kind})
    flat = np.empty((data.size, 2), dtype="<f8")
    flat[:, 0] = data.real.ravel()
    flat[:, 1] = data.imag.ravel()
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii") + b"\n")
        fh.write(flat.tobytes())


def load_field(path: str) -> ScalarField | SpectralField:
    """Inverse of dump_field."""
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode("ascii"))
        raw = np.frombuffer(fh.read(), dtype="<f8")
    n = int(header["n"])
    kind = header["kind"]
    if kind not in _DUMP_KINDS:
        raise ValueError(f"unknown field kind {kind!r}")
    data = (raw[0::2] + 1j * raw[1::2]).reshape(n, n, n)
    grid = CubeGrid(float(header["R0"]), n)
    return _DUMP_KINDS[kind](grid, data)
