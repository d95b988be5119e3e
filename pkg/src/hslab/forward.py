"""
Forward solves through the volume integral formulation, and Cauchy data on the
measurement sphere.

The radiated field splits as u = u0 + w with u0 the closed-form singular part
and w smooth.  w satisfies (I - V_q) w = V_q u0 with the volume potential
V_q f = k^2 int Phi(x-y) q(y) f(y) dy, so free space is never discretized and
the radiation condition is inherited from the outgoing kernel.

V_q is applied on a cell-centered lattice over a box around supp q through an
FFT with the exact Fourier symbol of the kernel truncated at a radius larger
than the box diameter.  For sources with vanishing q nearby the data chain is
spectrally accurate; sources inside supp q fall back to cell averages of u0
around the singularity.

Boundary norms use spherical-harmonic coefficients throughout: the Dirichlet
part in H^1(boundary), the Neumann part in L^2(boundary).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.sparse.linalg import LinearOperator, gmres
from scipy.special import sph_harm_y

from hslab._kernels import potential_sum
from hslab.media import (
    Bump,
    MeasurementSphere,
    Medium,
    PointSourceSet,
    check_admissible,
    eval_u0,
    ray_exit_length,
    u0_gradient,
    u0_l2_distance,
    u0_l2_norm,
    unit_sphere_rule,
)

__all__ = [
    "ForwardLattice",
    "FieldSolution",
    "CauchyData",
    "apply_Vq",
    "solve_forward",
    "extract_cauchy",
    "perturb_cauchy",
    "cauchy_gap",
    "boundary_h1_norm",
    "boundary_l2_norm",
    "solution_l2_on_omega",
    "forward_stability_probe",
    "SolveError",
]


class SolveError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# volume potential on a lattice
# ---------------------------------------------------------------------------


class ForwardLattice:
    """Cell-centered cube lattice around supp q with an FFT volume potential."""

    def __init__(
        self,
        medium: Medium,
        k: float,
        n: int = 28,
        margin: float = 0.3,
        pad_factor: int = 4,
    ):
        if k <= 0:
            raise ValueError("wavenumber must be positive")
        self.medium = medium
        self.k = k
        self.n = n
        half = max(medium.support_radius(), 0.5) + margin
        self.half = half
        self.h = 2.0 * half / n
        axis = -half + self.h * (np.arange(n) + 0.5)
        self.axis = axis
        pts = np.stack(np.meshgrid(axis, axis, axis, indexing="ij"), axis=-1)
        self.points = pts.reshape(-1, 3)
        self.q_values = medium.value(pts)
        self.m = pad_factor * n
        self._symbol = self._kernel_symbol()

    def _kernel_symbol(self) -> np.ndarray:
        # exact transform of the kernel truncated at T, T > box diameter
        t_cut = 3.5 * self.half
        k = self.k
        zeta = 2.0 * np.pi * np.fft.fftfreq(self.m, d=self.h)
        zz = np.sqrt(
            zeta[:, None, None] ** 2 + zeta[None, :, None] ** 2 + zeta[None, None, :] ** 2
        )
        ring = np.abs(zz - k) < 1e-8 * k
        safe = np.where(ring, k + 1.0, zz)
        # sin(|zeta| T)/|zeta| via sinc handles |zeta| = 0
        sin_over = t_cut * np.sinc(safe * t_cut / np.pi)
        num = 1.0 - np.exp(1j * k * t_cut) * (np.cos(safe * t_cut) - 1j * k * sin_over)
        out = num / (safe**2 - k**2)
        ring_val = (1.0 - np.exp(2j * k * t_cut)) / (4.0 * k) + 0.5j * t_cut
        out[ring] = ring_val / k
        return out

    def convolve(self, density: np.ndarray) -> np.ndarray:
        """Kernel convolution of a lattice density, values on the lattice."""
        n, m = self.n, self.m
        work = np.zeros((m, m, m), dtype=complex)
        work[:n, :n, :n] = density
        work = np.fft.ifftn(np.fft.fftn(work) * self._symbol)
        return work[:n, :n, :n]

    def apply_vq(self, values: np.ndarray) -> np.ndarray:
        """V_q acting on lattice samples."""
        return self.k**2 * self.convolve(self.q_values * values)

    def eval_potential(
        self, values: np.ndarray, targets: np.ndarray, gradient: bool = False
    ):
        """V_q at arbitrary targets by direct midpoint summation.

        Superalgebraically accurate for targets away from supp q; inside the
        support the nearest-cell kernel spike limits accuracy to O(h^2).
        """
        dens = (self.k**2 * self.q_values * values).reshape(-1)
        live = np.abs(dens) > 0
        src = self.points[live]
        dens = dens[live] * self.h**3
        pts = np.atleast_2d(np.asarray(targets, dtype=float))
        return potential_sum(pts, src, dens, self.k, gradient=gradient)


def apply_Vq(values: np.ndarray, lattice: ForwardLattice) -> np.ndarray:
    """Volume-potential application on the lattice (thin wrapper)."""
    return lattice.apply_vq(values)


# ---------------------------------------------------------------------------
# forward solve
# ---------------------------------------------------------------------------


def _u0_effective(sources: PointSourceSet, k: float, lattice: ForwardLattice):
    """u0 on the lattice with cell averages replacing values near sources."""
    vals = np.zeros((lattice.n,) * 3, dtype=complex)
    pts = lattice.points.reshape((lattice.n,) * 3 + (3,))
    h = lattice.h
    for a, z in zip(sources.amplitudes, sources.locations):
        d = pts - z
        r = np.sqrt(np.sum(d * d, axis=-1))
        near = r < 2.0 * h
        rr = np.where(near, 1.0, r)
        vals -= a * np.where(near, 0.0, np.exp(1j * k * rr) / (4.0 * np.pi * rr))
        if not np.any(near):
            continue
        sub = np.linspace(-0.5 * h, 0.5 * h, 9)[:-1] + 0.5 * h / 8
        off = np.stack(np.meshgrid(sub, sub, sub, indexing="ij"), axis=-1).reshape(-1, 3)
        for idx in np.argwhere(near):
            center = pts[tuple(idx)]
            y = center[None, :] + off
            ry = np.linalg.norm(y - z, axis=1)
            cell = np.exp(1j * k * ry) / (4.0 * np.pi * ry)
            singular = ry < (h / 8) * 0.75
            if np.any(singular):
                # analytic average of the kernel over an equal-volume ball
                delta = h / 8
                req = delta * (3.0 / (4.0 * np.pi)) ** (1.0 / 3.0)
                ball = (
                    np.exp(1j * k * req) * (req / (1j * k) + 1.0 / k**2) - 1.0 / k**2
                ) / delta**3
                cell = np.where(singular, ball, cell)
            vals[tuple(idx)] -= a * np.mean(cell)
    return vals


@dataclass
class FieldSolution:
    """Smooth part on the lattice plus everything needed to evaluate u."""

    sources: PointSourceSet
    medium: Medium
    k: float
    lattice: ForwardLattice
    w_lattice: np.ndarray
    u_lattice: np.ndarray
    residual: float
    iterations: int

    def eval_w(self, targets: np.ndarray, gradient: bool = False):
        """Smooth part anywhere through its potential representation."""
        if self.medium.is_zero:
            pts = np.atleast_2d(np.asarray(targets, dtype=float))
            if gradient:
                return (
                    np.zeros(len(pts), dtype=complex),
                    np.zeros((len(pts), 3), dtype=complex),
                )
            return np.zeros(len(pts), dtype=complex)
        return self.lattice.eval_potential(self.u_lattice, targets, gradient)

    def eval_u(self, targets: np.ndarray, gradient: bool = False):
        pts = np.atleast_2d(np.asarray(targets, dtype=float))
        if gradient:
            w, gw = self.eval_w(pts, gradient=True)
            return w + eval_u0(self.sources, self.k, pts), gw + u0_gradient(
                self.sources, self.k, pts
            )
        return self.eval_w(pts) + eval_u0(self.sources, self.k, pts)

    def w_spectral(self, grid):
        """Smooth part sampled on a cube grid, as a spectral field."""
        from hslab.grid import ScalarField, to_spectral

        nodes = grid.nodes().reshape(-1, 3)
        vals = self.eval_w(nodes).reshape((grid.n,) * 3)
        return to_spectral(ScalarField(grid, vals))


def solve_forward(
    sources: PointSourceSet,
    medium: Medium,
    k: float,
    tol: float = 1e-10,
    n_lattice: int = 28,
    sphere: MeasurementSphere | None = None,
    max_iter: int = 400,
) -> FieldSolution:
    """Solve (I - V_q) w = V_q u0 on the lattice by GMRES.

    With a vanishing medium the smooth part is identically zero and the
    solution is exact.  Admissibility is enforced when a sphere is supplied.
    """
    if sphere is not None:
        report = check_admissible(sources, sphere)
        if not report:
            raise ValueError("inadmissible sources: " + "; ".join(report.violations))
    lattice = ForwardLattice(medium, k, n=n_lattice)
    shape = (lattice.n,) * 3
    if medium.is_zero:
        zero = np.zeros(shape, dtype=complex)
        u0v = _u0_effective(sources, k, lattice)
        return FieldSolution(sources, medium, k, lattice, zero, u0v, 0.0, 0)

    u0v = _u0_effective(sources, k, lattice)
    rhs = lattice.apply_vq(u0v)
    rhs_norm = np.linalg.norm(rhs)
    if rhs_norm == 0.0:
        return FieldSolution(sources, medium, k, lattice, np.zeros(shape, complex), u0v, 0.0, 0)

    def matvec(flat):
        v = flat.reshape(shape)
        return (v - lattice.apply_vq(v)).ravel()

    op = LinearOperator((lattice.n**3,) * 2, matvec=matvec, dtype=complex)
    count = {"n": 0}
    sol, info = gmres(
        op,
        rhs.ravel(),
        rtol=tol,
        atol=0.0,
        maxiter=max_iter,
        restart=60,
        callback=lambda _: count.__setitem__("n", count["n"] + 1),
        callback_type="pr_norm",
    )
    if info != 0:
        raise SolveError(f"volume-equation GMRES failed (info={info})")
    w = sol.reshape(shape)
    resid = float(np.linalg.norm(w - lattice.apply_vq(w) - rhs) / rhs_norm)
    if resid > 10 * tol:
        raise SolveError(f"volume-equation residual {resid:.2e} above tolerance")
    return FieldSolution(sources, medium, k, lattice, w, u0v + w, resid, count["n"])


# ---------------------------------------------------------------------------
# Cauchy data
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CauchyData:
    """Field trace and normal derivative sampled on the measurement sphere."""

    sphere: MeasurementSphere
    u_values: np.ndarray
    dn_values: np.ndarray

    def __post_init__(self) -> None:
        m = len(self.sphere.weights)
        if self.u_values.shape != (m,) or self.dn_values.shape != (m,):
            raise ValueError("value arrays must match the quadrature node count")

    def __sub__(self, other: "CauchyData") -> "CauchyData":
        if other.sphere != self.sphere:
            raise ValueError("mismatched spheres")
        return CauchyData(
            self.sphere, self.u_values - other.u_values, self.dn_values - other.dn_values
        )


def extract_cauchy(sol: FieldSolution, sphere: MeasurementSphere) -> CauchyData:
    """Trace and normal derivative of u on the sphere.

    The singular part is closed form; the smooth part comes from its volume
    potential, which is smooth across the sphere because the density lives
    strictly inside.
    """
    margin = 2.0 * sol.sources.eta
    if len(sol.sources) and sphere.radius - np.max(
        np.linalg.norm(sol.sources.locations, axis=1)
    ) < margin:
        raise ValueError("sphere too close to a source")
    if not sol.medium.is_zero and sphere.radius - sol.medium.support_radius() < margin:
        raise ValueError("sphere too close to the medium support")
    x = sphere.nodes
    w, gw = sol.eval_w(x, gradient=True)
    u = w + eval_u0(sol.sources, sol.k, x)
    gu = gw + u0_gradient(sol.sources, sol.k, x)
    dn = np.einsum("ij,ij->i", sphere.normals, gu)
    return CauchyData(sphere, u, dn)


# ---------------------------------------------------------------------------
# boundary norms through spherical harmonics
# ---------------------------------------------------------------------------


@lru_cache(maxsize=8)
def _sh_table(sphere: MeasurementSphere, lmax: int) -> np.ndarray:
    theta, phi = sphere.angles
    rows = []
    for l in range(lmax + 1):
        for m in range(-l, l + 1):
            rows.append(sph_harm_y(l, m, theta, phi))
    return np.array(rows)


def _sh_degrees(lmax: int) -> np.ndarray:
    return np.concatenate([[l] * (2 * l + 1) for l in range(lmax + 1)]).astype(float)


def sh_project(sphere: MeasurementSphere, values: np.ndarray, lmax: int) -> np.ndarray:
    """Coefficients against orthonormal harmonics of the unit sphere."""
    table = _sh_table(sphere, lmax)
    return table.conj() @ (sphere.unit_weights * values)


def boundary_l2_norm(
    sphere: MeasurementSphere, values: np.ndarray, lmax: int = 24
) -> float:
    c = sh_project(sphere, values, lmax)
    return float(sphere.radius * np.linalg.norm(c))


def boundary_h1_norm(
    sphere: MeasurementSphere, values: np.ndarray, lmax: int = 24
) -> float:
    c = sh_project(sphere, values, lmax)
    l = _sh_degrees(lmax)
    w = 1.0 + l * (l + 1.0) / sphere.radius**2
    return float(sphere.radius * np.sqrt(np.sum(w * np.abs(c) ** 2)))


def cauchy_gap(d1: CauchyData, d2: CauchyData, lmax: int = 24) -> float:
    """H1(boundary) + L2(boundary) size of a Cauchy data difference."""
    diff = d1 - d2
    return boundary_h1_norm(d1.sphere, diff.u_values, lmax) + boundary_l2_norm(
        d1.sphere, diff.dn_values, lmax
    )


def perturb_cauchy(
    data: CauchyData, eps: float, seed: int, degree: int = 8
) -> CauchyData:
    """Add band-limited noise with combined boundary norm exactly eps.

    All randomness flows from the 64-bit seed through a counter-based
    generator, so identical seeds reproduce identical perturbations.
    """
    if eps < 0:
        raise ValueError("noise level must be nonnegative")
    if eps == 0.0:
        return data
    sphere = data.sphere
    rng = np.random.Generator(np.random.Philox(key=seed))
    ncoef = (degree + 1) ** 2
    gu = rng.standard_normal(ncoef) + 1j * rng.standard_normal(ncoef)
    gd = rng.standard_normal(ncoef) + 1j * rng.standard_normal(ncoef)
    l = _sh_degrees(degree)
    h1 = sphere.radius * np.sqrt(
        np.sum((1.0 + l * (l + 1) / sphere.radius**2) * np.abs(gu) ** 2)
    )
    l2 = sphere.radius * np.linalg.norm(gd)
    scale = eps / (h1 + l2)
    table = _sh_table(sphere, degree)
    du = scale * (gu @ table)
    dd = scale * (gd @ table)
    return CauchyData(sphere, data.u_values + du, data.dn_values + dd)


# ---------------------------------------------------------------------------
# interior norms and the stability probe
# ---------------------------------------------------------------------------


def _omega_lattice(sphere: MeasurementSphere, n: int, excluded=None, excl_radius=0.0):
    """Cell-centered lattice over the ball, minus optional excluded balls."""
    half = sphere.radius
    h = 2.0 * half / n
    axis = -half + h * (np.arange(n) + 0.5)
    pts = np.stack(np.meshgrid(axis, axis, axis, indexing="ij"), axis=-1).reshape(-1, 3)
    mask = np.linalg.norm(pts, axis=1) < sphere.radius
    if excluded is not None and len(excluded):
        for z in excluded:
            mask &= np.linalg.norm(pts - z, axis=1) > excl_radius
    return pts[mask], h**3


def solution_l2_on_omega(
    sol: FieldSolution,
    sphere: MeasurementSphere,
    n_lattice: int = 40,
    n_dirs: tuple[int, int] = (16, 32),
    n_radial: int = 24,
) -> float:
    """||u||_{L2(Omega)} including the integrable source singularities.

    Expands |u0 + w|^2: the u0 x u0 part is exact through pairwise kernels,
    the cross term uses exit-ray radial quadrature around each source, and
    the smooth part uses the plain lattice.
    """
    s, k = sol.sources, sol.k
    norm0_sq = u0_l2_norm(s, k, sphere) ** 2
    cross = 0.0
    dirs, wdir = unit_sphere_rule(*n_dirs)
    gl_x, gl_w = np.polynomial.legendre.leggauss(n_radial)
    for a, z in zip(s.amplitudes, s.locations):
        if a == 0.0:
            continue
        exits = ray_exit_length(z, dirs, sphere.radius)
        # radial nodes per direction: r = exit * (x+1)/2
        r = 0.5 * exits[:, None] * (gl_x[None, :] + 1.0)
        pts = z[None, None, :] + r[..., None] * dirs[:, None, :]
        wvals = sol.eval_w(pts.reshape(-1, 3)).reshape(r.shape)
        phase = np.exp(1j * k * r) / (4.0 * np.pi)
        # int Phi(x,z) conj(w) dx in polar form: r^2 dr cancels 1/r
        integ = np.sum(
            wdir[:, None] * (0.5 * exits[:, None] * gl_w[None, :]) * r * phase * np.conj(wvals)
        )
        cross += -2.0 * a * integ.real
    pts, cell = _omega_lattice(sphere, n_lattice)
    wsq = float(np.sum(np.abs(sol.eval_w(pts)) ** 2) * cell)
    total = norm0_sq + cross + wsq
    return float(np.sqrt(max(total, 0.0)))


def resolvent_norm_estimate(
    lattice: ForwardLattice, trials: int = 3, seed: int = 0, tol: float = 1e-8
) -> float:
    """Lower estimate of ||(I - V_q)^{-1}|| from random right-hand sides."""
    rng = np.random.Generator(np.random.Philox(key=seed))
    shape = (lattice.n,) * 3
    best = 1.0

    def matvec(flat):
        v = flat.reshape(shape)
        return (v - lattice.apply_vq(v)).ravel()

    op = LinearOperator((lattice.n**3,) * 2, matvec=matvec, dtype=complex)
    for _ in range(trials):
        f = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
        sol, info = gmres(op, f.ravel(), rtol=tol, atol=0.0, maxiter=200, restart=60)
        if info == 0:
            best = max(best, float(np.linalg.norm(sol) / np.linalg.norm(f)))
    return best


def forward_stability_probe(
    s1: PointSourceSet,
    s2: PointSourceSet,
    q1: Medium,
    q2: Medium,
    k: float,
    sphere: MeasurementSphere,
    n_lattice: int = 24,
    mask_lattice: int = 28,
    excl_radius: float | None = None,
) -> dict:
    """Field difference against the perturbation structure of the resolvent.

    Reports ||u1 - u2|| on the source-deleted domain together with the medium
    and source terms of the bound; the resolvent norms are measured, not
    certified.
    """
    sol1 = solve_forward(s1, q1, k, n_lattice=n_lattice)
    sol2 = solve_forward(s2, q2, k, n_lattice=n_lattice)
    if excl_radius is None:
        excl_radius = 4.0 * min(s1.eta, s2.eta)
    excluded = np.vstack([s1.locations, s2.locations]) if len(s1) + len(s2) else None
    pts, cell = _omega_lattice(sphere, mask_lattice, excluded, excl_radius)
    du = sol1.eval_u(pts) - sol2.eval_u(pts)
    diff_norm = float(np.sqrt(np.sum(np.abs(du) ** 2) * cell))

    dq = Medium(q1.bumps + tuple(Bump(-b.amplitude, b.center, b.radius) for b in q2.bumps))
    c1 = resolvent_norm_estimate(sol1.lattice) if not q1.is_zero else 1.0
    c2 = resolvent_norm_estimate(sol2.lattice) if not q2.is_zero else 1.0
    u02_norm = u0_l2_norm(s2, k, sphere)
    u0_diff = u0_l2_distance(s1, s2, k, sphere)
    medium_term = k**2 * c1 * c2 * u02_norm * dq.c0_norm(safety=1.0)
    source_term = c1 * u0_diff
    return {
        "diff_norm": diff_norm,
        "medium_term": medium_term,
        "source_term": source_term,
        "bound": medium_term + source_term,
        "resolvent_1": c1,
        "resolvent_2": c2,
        "u0_diff": u0_diff,
    }
