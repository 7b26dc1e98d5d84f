"""Radially symmetric reference solution on [0, 1].

For radially symmetric data the model problem
-div(grad u + u grad psi) + lambda_bar e^{-psi} u 1_K = 1 on the unit ball
with zero flux reduces to an ODE in r. It is solved here with standard P1
elements on a fine mesh whose nodes include the interface radius exactly, so
the reference carries no interface error of its own. The weak form carries
the r^{d-1} volume weight, which also enforces regularity at r = 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .mesh import SimplicialMesh, generate_interval_mesh

__all__ = ["RadialSolution", "solve_radial", "eval_radial"]


@dataclass(frozen=True)
class RadialSolution:
    mesh: SimplicialMesh
    values: np.ndarray
    d: int
    lambda_bar: float
    kappa_bar: float
    rstar: float


def solve_radial(d: int, lambda_bar: float, kappa_bar: float, rstar: float,
                 n_elements: int = 10000) -> RadialSolution:
    """P1 solve of -(1/r^{d-1}) (r^{d-1}(u' + u psi'))' + lambda_bar e^{-psi} u 1_{r<r*} = 1.

    psi(r) = kappa_bar r^2, natural boundary conditions. For rstar >= 1 the
    reaction covers the whole interval (the interface leaves the domain), which
    is the regime used by constant-solution checks.
    """
    if lambda_bar <= 0:
        raise ValueError("lambda_bar must be positive")
    if rstar <= 0:
        raise ValueError("rstar must be positive")
    pinned = [rstar] if rstar < 1 else None
    mesh = generate_interval_mesh(n_elements, 0.0, 1.0, pinned)
    x = mesh.nodes[:, 0]
    nn = len(x)

    gq, gw = np.polynomial.legendre.leggauss(5)
    x0, x1 = x[:-1], x[1:]
    h = x1 - x0
    xm = 0.5 * (x0 + x1)[:, None] + 0.5 * h[:, None] * gq[None, :]  # (E, 5)
    w = 0.5 * h[:, None] * gw[None, :]
    rfac = xm ** (d - 1)
    psi = kappa_bar * xm**2
    dpsi = 2 * kappa_bar * xm
    lam_loc = lambda_bar * np.exp(-psi) * (xm < rstar)
    phi0 = (x1[:, None] - xm) / h[:, None]
    phi1 = (xm - x0[:, None]) / h[:, None]
    dphi = 1.0 / h

    diag = np.zeros(nn)
    lower = np.zeros(nn - 1)
    upper = np.zeros(nn - 1)
    rhs = np.zeros(nn)
    basis = ((phi0, -dphi), (phi1, dphi))
    for i, (Pi, dPi) in enumerate(basis):
        np.add.at(rhs, np.arange(nn - 1) + i, np.sum(w * rfac * Pi, axis=1))
        for j, (Pj, dPj) in enumerate(basis):
            val = np.sum(w * rfac * (dPj[:, None] + Pj * dpsi) * dPi[:, None], axis=1)
            val += np.sum(w * rfac * lam_loc * Pj * Pi, axis=1)
            if i == j:
                np.add.at(diag, np.arange(nn - 1) + i, val)
            elif i < j:
                upper += val
            else:
                lower += val
    ab = np.zeros((3, nn))
    ab[0, 1:] = upper
    ab[1] = diag
    ab[2, :-1] = lower
    u = scipy.linalg.solve_banded((1, 1), ab, rhs)
    return RadialSolution(mesh, u, d, float(lambda_bar), float(kappa_bar), float(rstar))


def eval_radial(sol: RadialSolution, r):
    """P1 interpolation of the radial solution; accepts scalars or arrays in [0, 1]."""
    r = np.asarray(r, dtype=float)
    if np.any(r < -1e-12) or np.any(r > 1 + 1e-12):
        raise ValueError("radius outside [0, 1]")
    rc = np.clip(r, 0.0, 1.0)
    out = np.interp(rc, sol.mesh.nodes[:, 0], sol.values)
    return float(out) if out.ndim == 0 else out
