"""
Media, point-source configurations, the measurement sphere, and the free-space kernel.

The medium is a sum of smooth compactly supported bumps, so values and two
derivatives are available in closed form everywhere.  The singular part of the
radiated field is u0 = -sum_i a_i Phi(., z_i); with the outgoing kernel
Phi = e^{ikr}/(4 pi r) this sign makes Delta u0 + k^2 u0 = sum_i a_i delta_{z_i},
which is the convention every boundary identity in this package validates.

L2(Omega) norms of u0-type fields reduce to pairwise kernel integrals
int_Omega Phi(x, z) conj(Phi(x, z')) dx.  In two-focus (prolate spheroidal)
coordinates the 1/r singularities cancel against the volume element exactly,
leaving a smooth 2D integral over (tau, phi) with the ray exit coordinate
integrated in closed form.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

__all__ = [
    "Bump",
    "Medium",
    "PointSourceSet",
    "MeasurementSphere",
    "AdmissibilityReport",
    "check_admissible",
    "green_free",
    "green_gradient",
    "green_hessian",
    "eval_u0",
    "u0_gradient",
    "u0_hessian",
    "unit_sphere_rule",
    "ray_exit_length",
    "pair_kernel_l2",
    "u0_l2_norm",
    "u0_l2_distance",
    "max_green_l2",
    "u0_difference_bound",
]


# ---------------------------------------------------------------------------
# medium
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Bump:
    """amplitude * exp(1/((r/radius)^2 - 1)) inside its ball, zero outside."""

    amplitude: float
    center: tuple[float, float, float]
    radius: float

    def __post_init__(self) -> None:
        if self.radius <= 0:
            raise ValueError("bump radius must be positive")

    def _parts(self, x: np.ndarray):
        d = np.asarray(x, dtype=float) - np.asarray(self.center)
        u = np.sum(d * d, axis=-1) / self.radius**2
        inside = u < 1.0
        e = np.zeros_like(u)
        um1 = np.where(inside, u - 1.0, -1.0)
        e[inside] = np.exp(1.0 / um1[inside])
        return d, u, um1, e, inside

    def value(self, x: np.ndarray) -> np.ndarray:
        _, _, _, e, _ = self._parts(x)
        return self.amplitude * e

    def gradient(self, x: np.ndarray) -> np.ndarray:
        d, _, um1, e, inside = self._parts(x)
        # d/du of exp(1/(u-1)) is -exp(1/(u-1)) / (u-1)^2
        coef = np.where(inside, -e / um1**2, 0.0) * (2.0 / self.radius**2)
        return self.amplitude * coef[..., None] * d

    def hessian(self, x: np.ndarray) -> np.ndarray:
        d, u, um1, e, inside = self._parts(x)
        b1 = np.where(inside, -e / um1**2, 0.0)
        b2 = np.where(inside, e * (2.0 * u - 1.0) / um1**4, 0.0)
        gu = (2.0 / self.radius**2) * d
        eye = np.eye(3)
        h = b2[..., None, None] * gu[..., :, None] * gu[..., None, :]
        h += (b1 * 2.0 / self.radius**2)[..., None, None] * eye
        return self.amplitude * h

    def laplacian(self, x: np.ndarray) -> np.ndarray:
        d, u, um1, e, inside = self._parts(x)
        b1 = np.where(inside, -e / um1**2, 0.0)
        b2 = np.where(inside, e * (2.0 * u - 1.0) / um1**4, 0.0)
        r2 = np.sum(d * d, axis=-1)
        return self.amplitude * (
            b2 * 4.0 * r2 / self.radius**4 + b1 * 6.0 / self.radius**2
        )


@dataclass(frozen=True)
class Medium:
    """Closed-form C^2 medium: a finite sum of bumps (empty sum = free space)."""

    bumps: tuple[Bump, ...] = ()

    @staticmethod
    def free() -> "Medium":
        return Medium(())

    @staticmethod
    def single_bump(amplitude: float, center=(0.0, 0.0, 0.0), radius: float = 1.0):
        return Medium((Bump(amplitude, tuple(center), radius),))

    @property
    def is_zero(self) -> bool:
        return len(self.bumps) == 0 or all(b.amplitude == 0 for b in self.bumps)

    def support_radius(self) -> float:
        if not self.bumps:
            return 0.0
        return max(np.linalg.norm(b.center) + b.radius for b in self.bumps)

    def value(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1])
        for b in self.bumps:
            out += b.value(x)
        return out

    def gradient(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1] + (3,))
        for b in self.bumps:
            out += b.gradient(x)
        return out

    def hessian(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1] + (3, 3))
        for b in self.bumps:
            out += b.hessian(x)
        return out

    def laplacian(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1])
        for b in self.bumps:
            out += b.laplacian(x)
        return out

    def _sample_lattice(self, n: int = 64) -> np.ndarray:
        r = self.support_radius()
        if r == 0.0:
            return np.zeros((1, 3))
        t = np.linspace(-r, r, n)
        return np.stack(np.meshgrid(t, t, t, indexing="ij"), axis=-1).reshape(-1, 3)

    @cached_property
    def _dense_sup_norms(self) -> tuple[float, float, float]:
        pts = self._sample_lattice()
        v = float(np.max(np.abs(self.value(pts))))
        g = float(np.max(np.abs(self.gradient(pts)))) if self.bumps else 0.0
        h = float(np.max(np.abs(self.hessian(pts)))) if self.bumps else 0.0
        return v, g, h

    def c0_norm(self, safety: float = 3.0) -> float:
        """Sup norm estimated on a dense lattice, inflated by a safety factor."""
        return safety * self._dense_sup_norms[0]

    def grad_c0_norm(self, safety: float = 3.0) -> float:
        return safety * self._dense_sup_norms[1]

    def c2_norm(self, safety: float = 3.0) -> float:
        """Max over derivatives of order <= 2 of the dense-lattice sup, inflated."""
        return safety * max(self._dense_sup_norms)

    def project(self, grid) -> "object":
        """Band-limited representative: samples interpolated on the cube grid."""
        from hslab.grid import ScalarField, to_spectral

        vals = self.value(grid.nodes()).astype(complex)
        return to_spectral(ScalarField(grid, vals))

    def h_norm(self, grid, s: int) -> float:
        """Sobolev norm of the band-limited representative on the cube."""
        from hslab.grid import sobolev_norm

        return sobolev_norm(self.project(grid), s)


# ---------------------------------------------------------------------------
# sources and the measurement sphere
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PointSourceSet:
    """Point sources (a_i, z_i) with separation scale eta and configuration caps."""

    amplitudes: np.ndarray
    locations: np.ndarray
    eta: float
    n_max: int = 10
    amp_max: float = 2.0

    def __post_init__(self) -> None:
        a = np.atleast_1d(np.asarray(self.amplitudes, dtype=float))
        z = np.asarray(self.locations, dtype=float).reshape(-1, 3)
        if a.shape[0] != z.shape[0]:
            raise ValueError("amplitude and location counts differ")
        object.__setattr__(self, "amplitudes", a)
        object.__setattr__(self, "locations", z)
        if self.eta <= 0:
            raise ValueError("eta must be positive")

    def __len__(self) -> int:
        return self.amplitudes.shape[0]

    @staticmethod
    def empty(eta: float, **kw) -> "PointSourceSet":
        return PointSourceSet(np.zeros(0), np.zeros((0, 3)), eta, **kw)


@dataclass(frozen=True)
class MeasurementSphere:
    """Origin-centered sphere with a product quadrature (Gauss in cos(theta))."""

    radius: float
    n_theta: int = 48
    n_phi: int = 96

    def __post_init__(self) -> None:
        if self.radius <= 0:
            raise ValueError("radius must be positive")

    @cached_property
    def _rule(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        ct, wt = np.polynomial.legendre.leggauss(self.n_theta)
        phi = 2.0 * np.pi * np.arange(self.n_phi) / self.n_phi
        st = np.sqrt(1.0 - ct**2)
        dirs = np.empty((self.n_theta, self.n_phi, 3))
        dirs[..., 0] = st[:, None] * np.cos(phi)[None, :]
        dirs[..., 1] = st[:, None] * np.sin(phi)[None, :]
        dirs[..., 2] = ct[:, None]
        dirs = dirs.reshape(-1, 3)
        w = np.repeat(wt, self.n_phi) * (2.0 * np.pi / self.n_phi)
        theta = np.repeat(np.arccos(ct), self.n_phi)
        phis = np.tile(phi, self.n_theta)
        return dirs, w, theta, phis

    @property
    def normals(self) -> np.ndarray:
        return self._rule[0]

    @property
    def nodes(self) -> np.ndarray:
        return self.radius * self._rule[0]

    @property
    def weights(self) -> np.ndarray:
        """Surface weights; they sum to 4 pi radius^2."""
        return self.radius**2 * self._rule[1]

    @property
    def unit_weights(self) -> np.ndarray:
        """Weights for the unit-sphere measure (sum 4 pi)."""
        return self._rule[1]

    @property
    def angles(self) -> tuple[np.ndarray, np.ndarray]:
        return self._rule[2], self._rule[3]

    @property
    def area(self) -> float:
        return 4.0 * np.pi * self.radius**2


@dataclass(frozen=True)
class AdmissibilityReport:
    ok: bool
    violations: tuple[str, ...] = ()

    def __bool__(self) -> bool:
        return self.ok


def check_admissible(
    sources: PointSourceSet, sphere: MeasurementSphere
) -> AdmissibilityReport:
    """Strict separation / amplitude / count constraints of the source class."""
    v: list[str] = []
    n = len(sources)
    eta = sources.eta
    if n > sources.n_max:
        v.append(f"count {n} exceeds cap {sources.n_max}")
    a = sources.amplitudes
    if np.any(a < 0):
        v.append("negative amplitude")
    if np.any(a >= sources.amp_max):
        v.append(f"amplitude reaches cap {sources.amp_max}")
    z = sources.locations
    for i in range(n):
        for j in range(i + 1, n):
            d = float(np.linalg.norm(z[i] - z[j]))
            if not d > 8.0 * eta:
                v.append(f"sources {i},{j} separated by {d:.6g} <= 8 eta")
    for i in range(n):
        d = sphere.radius - float(np.linalg.norm(z[i]))
        if not d > 8.0 * eta:
            v.append(f"source {i} within {d:.6g} <= 8 eta of the boundary")
    return AdmissibilityReport(not v, tuple(v))


# ---------------------------------------------------------------------------
# free-space kernel and the singular part u0
# ---------------------------------------------------------------------------

_SINGULAR_TOL = 1e-13


def _radii(x: np.ndarray, z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    d = np.asarray(x, dtype=float) - np.asarray(z, dtype=float)
    r = np.sqrt(np.sum(d * d, axis=-1))
    if np.any(r < _SINGULAR_TOL):
        raise ValueError("kernel evaluated at its singularity")
    return d, r


def green_free(x: np.ndarray, z: np.ndarray, k: float) -> np.ndarray:
    """Outgoing kernel e^{ikr} / (4 pi r)."""
    _, r = _radii(x, z)
    return np.exp(1j * k * r) / (4.0 * np.pi * r)


def green_gradient(x: np.ndarray, z: np.ndarray, k: float) -> np.ndarray:
    """Gradient in x of the outgoing kernel."""
    d, r = _radii(x, z)
    phi = np.exp(1j * k * r) / (4.0 * np.pi * r)
    return (phi * (1j * k - 1.0 / r) / r)[..., None] * d


def green_hessian(x: np.ndarray, z: np.ndarray, k: float) -> np.ndarray:
    d, r = _radii(x, z)
    nhat = d / r[..., None]
    g = np.exp(1j * k * r) * (1j * k - 1.0 / r) / (4.0 * np.pi * r)
    gp = np.exp(1j * k * r) * (-(k**2) / r - 2j * k / r**2 + 2.0 / r**3) / (4.0 * np.pi)
    eye = np.eye(3)
    nn = nhat[..., :, None] * nhat[..., None, :]
    return gp[..., None, None] * nn + (g / r)[..., None, None] * (eye - nn)


def eval_u0(sources: PointSourceSet, k: float, x: np.ndarray) -> np.ndarray:
    """Singular part -sum_i a_i Phi(x, z_i)."""
    x = np.asarray(x, dtype=float)
    out = np.zeros(x.shape[:-1], dtype=complex)
    for a, z in zip(sources.amplitudes, sources.locations):
        out -= a * green_free(x, z, k)
    return out


def u0_gradient(sources: PointSourceSet, k: float, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    out = np.zeros(x.shape[:-1] + (3,), dtype=complex)
    for a, z in zip(sources.amplitudes, sources.locations):
        out -= a * green_gradient(x, z, k)
    return out


def u0_hessian(sources: PointSourceSet, k: float, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    out = np.zeros(x.shape[:-1] + (3, 3), dtype=complex)
    for a, z in zip(sources.amplitudes, sources.locations):
        out -= a * green_hessian(x, z, k)
    return out


# ---------------------------------------------------------------------------
# L2(Omega) integrals with point singularities
# ---------------------------------------------------------------------------


def unit_sphere_rule(n_theta: int, n_phi: int) -> tuple[np.ndarray, np.ndarray]:
    """Directions and weights integrating over the unit sphere (sum 4 pi)."""
    ct, wt = np.polynomial.legendre.leggauss(n_theta)
    phi = 2.0 * np.pi * np.arange(n_phi) / n_phi
    st = np.sqrt(1.0 - ct**2)
    dirs = np.empty((n_theta, n_phi, 3))
    dirs[..., 0] = st[:, None] * np.cos(phi)[None, :]
    dirs[..., 1] = st[:, None] * np.sin(phi)[None, :]
    dirs[..., 2] = ct[:, None]
    w = np.repeat(wt, n_phi) * (2.0 * np.pi / n_phi)
    return dirs.reshape(-1, 3), w


def ray_exit_length(z: np.ndarray, dirs: np.ndarray, radius: float) -> np.ndarray:
    """Distance from an interior point z to the sphere |x| = radius along dirs."""
    z = np.asarray(z, dtype=float)
    if np.linalg.norm(z) >= radius:
        raise ValueError("ray origin must lie inside the sphere")
    zd = dirs @ z
    return -zd + np.sqrt(zd**2 + radius**2 - z @ z)


def _orthonormal_complement(e: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    probe = np.zeros(3)
    probe[int(np.argmin(np.abs(e)))] = 1.0
    n1 = np.cross(e, probe)
    n1 /= np.linalg.norm(n1)
    return n1, np.cross(e, n1)


def pair_kernel_l2(
    z1: np.ndarray,
    z2: np.ndarray,
    k: float,
    radius: float,
    n_tau: int = 48,
    n_phi: int = 96,
) -> complex:
    """int over the ball |x| <= radius of Phi(x, z1) conj(Phi(x, z2)) dx.

    Two-focus coordinates (sigma, tau, phi) about z1, z2 absorb both
    singularities into the volume element; the sigma integral is the exit
    coordinate of the hyperbola branch and is evaluated by bisection.
    """
    z1 = np.asarray(z1, dtype=float)
    z2 = np.asarray(z2, dtype=float)
    if max(np.linalg.norm(z1), np.linalg.norm(z2)) >= radius:
        raise ValueError("kernel centers must lie inside the ball")
    sep = float(np.linalg.norm(z2 - z1))
    if sep < 1e-14:
        dirs, w = unit_sphere_rule(n_tau, n_phi)
        exit_len = ray_exit_length(z1, dirs, radius)
        return complex(np.sum(w * exit_len) / (16.0 * np.pi**2))

    c = 0.5 * sep
    mid = 0.5 * (z1 + z2)
    e = (z2 - z1) / sep
    n1, n2 = _orthonormal_complement(e)

    tau, wt = np.polynomial.legendre.leggauss(n_tau)
    phi = 2.0 * np.pi * np.arange(n_phi) / n_phi
    tt, pp = np.meshgrid(tau, phi, indexing="ij")

    # |x(sigma)|^2 = c^2 sigma^2 + a1 sigma + b sqrt(sigma^2 - 1) + a0
    a1 = 2.0 * c * tt * (mid @ e)
    b = (
        2.0
        * c
        * np.sqrt(1.0 - tt**2)
        * (np.cos(pp) * (mid @ n1) + np.sin(pp) * (mid @ n2))
    )
    a0 = mid @ mid - c**2 * (1.0 - tt**2) - radius**2

    def excess(sigma):
        return (
            c**2 * sigma**2 + a1 * sigma + b * np.sqrt(sigma**2 - 1.0) + a0
        )

    lo = np.ones_like(tt)
    hi_val = np.sqrt(((radius + np.linalg.norm(mid)) / c) ** 2 + 1.0) + 1.0
    hi = np.full_like(tt, hi_val)
    for _ in range(64):
        midpt = 0.5 * (lo + hi)
        inside = excess(midpt) < 0.0
        lo = np.where(inside, midpt, lo)
        hi = np.where(inside, hi, midpt)
    sigma_exit = 0.5 * (lo + hi)

    integrand = np.exp(2j * k * c * tau)[:, None] * (sigma_exit - 1.0)
    val = np.sum(wt[:, None] * integrand) * (2.0 * np.pi / n_phi)
    return complex(val * c / (16.0 * np.pi**2))


def _weighted_l2(points: np.ndarray, coeffs: np.ndarray, k: float, radius: float) -> float:
    n = len(coeffs)
    total = 0.0
    for p in range(n):
        for q in range(p, n):
            kern = pair_kernel_l2(points[p], points[q], k, radius)
            term = coeffs[p] * np.conj(coeffs[q]) * kern
            total += term.real if p == q else 2.0 * term.real
    return float(np.sqrt(max(total, 0.0)))


def u0_l2_norm(sources: PointSourceSet, k: float, sphere: MeasurementSphere) -> float:
    """L2 norm of u0 over the measurement ball."""
    if len(sources) == 0:
        return 0.0
    return _weighted_l2(sources.locations, sources.amplitudes, k, sphere.radius)


def u0_l2_distance(
    s1: PointSourceSet, s2: PointSourceSet, k: float, sphere: MeasurementSphere
) -> float:
    """L2(Omega) distance between the singular parts of two configurations."""
    pts = np.vstack([s1.locations, s2.locations])
    coeffs = np.concatenate([s1.amplitudes, -s2.amplitudes])
    if len(coeffs) == 0:
        return 0.0
    return _weighted_l2(pts, coeffs, k, sphere.radius)


def max_green_l2(sphere: MeasurementSphere) -> float:
    """max over z of ||Phi(., z)||_{L2(Omega)}; attained at the center."""
    return float(np.sqrt(sphere.radius / (4.0 * np.pi)))


@dataclass(frozen=True)
class DifferenceBound:
    lhs: float
    rhs: float
    m1: float
    m2: float


def u0_difference_bound(
    s1: PointSourceSet,
    s2: PointSourceSet,
    pairing: np.ndarray,
    alpha: float,
    k: float,
    sphere: MeasurementSphere,
    R0: float,
) -> DifferenceBound:
    """Both sides of the kernel-splitting estimate for ||u0_1 - u0_2||_{L2}.

    The right-hand side combines an amplitude term m1 * sum |da| with a
    location term whose factor depends weakly on each displacement.
    """
    if not 0.0 < alpha < 0.5:
        raise ValueError("alpha must lie in (0, 1/2)")
    if len(s1) != len(s2):
        raise ValueError("configurations must have matching counts")
    perm = np.asarray(pairing, dtype=int)
    s2p = PointSourceSet(
        s2.amplitudes[perm], s2.locations[perm], s2.eta, s2.n_max, s2.amp_max
    )
    lhs = u0_l2_distance(s1, s2p, k, sphere)
    m1 = max_green_l2(sphere)
    da = np.abs(s1.amplitudes - s2p.amplitudes)
    dz = np.linalg.norm(s1.locations - s2p.locations, axis=1)
    base = 4.0 * np.sqrt(np.pi) * np.sqrt(1.0 + (2.0 * R0) ** 0.75)
    m2_each = base + 2.0 * np.sqrt(np.pi) * dz ** (1.0 - 1.5 * alpha)
    rhs = float(m1 * np.sum(da) + np.sum(m2_each * dz**alpha))
    m2 = float(np.max(m2_each)) if len(m2_each) else 0.0
    return DifferenceBound(lhs, rhs, m1, m2)
