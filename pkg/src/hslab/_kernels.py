"""
Hot inner loops: direct summation of the outgoing kernel over lattice densities.

Compiled with numba when available (fastmath SIMD makes the transcendentals
usable on modest CPUs); a vectorized numpy fallback keeps the package working
without it.  Both paths produce identical results to rounding.
"""

from __future__ import annotations

import os

import numpy as np

os.environ.setdefault("NUMBA_THREADING_LAYER", "workqueue")

try:  # pragma: no cover - exercised implicitly
    from numba import njit, prange

    _HAVE_NUMBA = True
except Exception:  # pragma: no cover
    _HAVE_NUMBA = False


if _HAVE_NUMBA:

    @njit(parallel=True, fastmath=True)
    def _potential_numba(targets, src, dens_re, dens_im, k, want_grad):
        nt = targets.shape[0]
        ns = src.shape[0]
        vals = np.zeros((nt, 2))
        grads = np.zeros((nt, 3, 2))
        for i in prange(nt):
            x0, x1, x2 = targets[i, 0], targets[i, 1], targets[i, 2]
            vre = 0.0
            vim = 0.0
            g0re = 0.0
            g0im = 0.0
            g1re = 0.0
            g1im = 0.0
            g2re = 0.0
            g2im = 0.0
            for j in range(ns):
                d0 = x0 - src[j, 0]
                d1 = x1 - src[j, 1]
                d2 = x2 - src[j, 2]
                r2 = d0 * d0 + d1 * d1 + d2 * d2
                if r2 < 1e-24:
                    r2 = 1e-24
                r = np.sqrt(r2)
                c = np.cos(k * r)
                s = np.sin(k * r)
                inv = 1.0 / (12.566370614359172 * r)
                kre = c * inv
                kim = s * inv
                dre = dens_re[j]
                dim = dens_im[j]
                vre += kre * dre - kim * dim
                vim += kre * dim + kim * dre
                if want_grad:
                    are = -1.0 / r2
                    aim = k / r
                    fre = kre * are - kim * aim
                    fim = kre * aim + kim * are
                    pre = fre * dre - fim * dim
                    pim = fre * dim + fim * dre
                    g0re += pre * d0
                    g0im += pim * d0
                    g1re += pre * d1
                    g1im += pim * d1
                    g2re += pre * d2
                    g2im += pim * d2
            vals[i, 0] = vre
            vals[i, 1] = vim
            grads[i, 0, 0] = g0re
            grads[i, 0, 1] = g0im
            grads[i, 1, 0] = g1re
            grads[i, 1, 1] = g1im
            grads[i, 2, 0] = g2re
            grads[i, 2, 1] = g2im
        return vals, grads


def _potential_numpy(targets, src, dens, k, want_grad):
    src_sq = np.sum(src * src, axis=1)
    src_w = dens[:, None] * src
    nt = targets.shape[0]
    vals = np.empty(nt, dtype=complex)
    grads = np.empty((nt, 3), dtype=complex) if want_grad else None
    chunk = max(1, int(1.2e7 // max(len(src), 1)))
    for lo in range(0, nt, chunk):
        block = targets[lo : lo + chunk]
        r2 = (
            np.sum(block * block, axis=1)[:, None]
            + src_sq[None, :]
            - 2.0 * block @ src.T
        )
        r = np.sqrt(np.maximum(r2, 1e-24))
        kern = np.exp(1j * k * r) / (4.0 * np.pi * r)
        vals[lo : lo + chunk] = kern @ dens
        if want_grad:
            gk = kern * (1j * k - 1.0 / r) / r
            row = gk @ dens
            grads[lo : lo + chunk] = block * row[:, None] - gk @ src_w
    return vals, grads


def potential_sum(targets, src, dens, k, gradient=False):
    """sum_j dens_j Phi(x_i - y_j) and optionally its gradient in x."""
    targets = np.ascontiguousarray(targets, dtype=float)
    src = np.ascontiguousarray(src, dtype=float)
    dens = np.asarray(dens, dtype=complex)
    if len(src) == 0:
        vals = np.zeros(len(targets), dtype=complex)
        return (vals, np.zeros((len(targets), 3), complex)) if gradient else vals
    if _HAVE_NUMBA:
        v, g = _potential_numba(
            targets,
            src,
            np.ascontiguousarray(dens.real),
            np.ascontiguousarray(dens.imag),
            float(k),
            gradient,
        )
        vals = v[:, 0] + 1j * v[:, 1]
        if gradient:
            return vals, g[..., 0] + 1j * g[..., 1]
        return vals
    vals, grads = _potential_numpy(targets, src, dens, k, gradient)
    return (vals, grads) if gradient else vals
