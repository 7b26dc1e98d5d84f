"""Linear solves and the discrete norms used for all error reporting."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import LinearSystem
from .dual import DualMesh
from .mesh import SimplicialMesh, element_geometry_arrays

__all__ = [
    "SolveReport",
    "FeField",
    "solve",
    "discrete_l2_norm",
    "discrete_l2_relative_error",
    "h1_seminorm_diff",
    "interpolate",
    "evaluate",
]

DENSE_THRESHOLD = 2000


@dataclass(frozen=True)
class SolveReport:
    iterations: int
    residual: float  # final relative residual
    method: str  # "dense", "krylov", "stationary"


@dataclass(frozen=True)
class FeField:
    mesh: SimplicialMesh
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if len(vals) != self.mesh.n_nodes:
            raise ValueError("length mismatch")
        object.__setattr__(self, "values", vals)


def solve(system: LinearSystem, tol: float = 1e-10, max_iter: int | None = None):
    """Solve the sparse system to a relative residual <= tol.

    Dense factorization for n <= 2000; otherwise BiCGStab with Jacobi
    preconditioning, falling back to damped Jacobi iteration (convergent for
    the strictly dominant M-matrices assembled here) if the Krylov solver
    stalls. Raises with the best residual if the iteration cap is hit.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    A = system.matrix.tocsr()
    b = np.asarray(system.rhs, dtype=float)
    n = A.shape[0]
    bnorm = np.linalg.norm(b)
    if bnorm == 0:
        return np.zeros(n), SolveReport(0, 0.0, "dense")
    if max_iter is None:
        max_iter = 10 * n

    if n <= DENSE_THRESHOLD:
        x = scipy.linalg.solve(A.toarray(), b)
        res = np.linalg.norm(b - A @ x) / bnorm
        return x, SolveReport(0, float(res), "dense")

    diag = A.diagonal()
    if np.any(diag == 0):
        raise ValueError("zero diagonal entry")
    M = spla.LinearOperator((n, n), matvec=lambda v: v / diag)
    count = [0]

    def cb(_):
        count[0] += 1

    x, info = spla.bicgstab(A, b, rtol=tol, atol=0.0, maxiter=max_iter, M=M, callback=cb)
    res = np.linalg.norm(b - A @ x) / bnorm
    if info == 0 and res <= tol * 10:
        return x, SolveReport(count[0], float(res), "krylov")

    # damped Jacobi sweep, monotone for the M-matrix systems assembled here
    omega = 0.8
    best = x if np.all(np.isfinite(x)) else np.zeros(n)
    r = b - A @ best
    it = 0
    while it < max_iter:
        best = best + omega * (r / diag)
        r = b - A @ best
        it += 1
        res = np.linalg.norm(r) / bnorm
        if res <= tol:
            return best, SolveReport(count[0] + it, float(res), "stationary")
    raise RuntimeError(f"solver failed to converge: best relative residual {res:.3e}")


def discrete_l2_norm(dual: DualMesh, values) -> float:
    """Voxel-weighted root-mean-square nodal norm sqrt(sum |V_i| v_i^2)."""
    values = np.asarray(values, dtype=float)
    if values.shape != dual.voxel_measure.shape:
        raise ValueError("length mismatch")
    return float(np.sqrt(np.sum(dual.voxel_measure * values**2)))


def discrete_l2_relative_error(dual: DualMesh, approx, reference_at_nodes) -> float:
    approx = np.asarray(approx, dtype=float)
    ref = np.asarray(reference_at_nodes, dtype=float)
    den = discrete_l2_norm(dual, ref)
    if den == 0:
        raise ValueError("zero reference norm")
    return discrete_l2_norm(dual, approx - ref) / den


def h1_seminorm_diff(stiffness: sp.spmatrix, u, v) -> float:
    """sqrt((u-v)^T S (u-v)): the L2 norm of the piecewise gradient difference."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape or len(u) != stiffness.shape[0]:
        raise ValueError("dimension mismatch")
    d = u - v
    return float(np.sqrt(max(d @ (stiffness @ d), 0.0)))


def interpolate(mesh: SimplicialMesh, f) -> FeField:
    """Nodal interpolant of a callable."""
    return FeField(mesh, np.asarray(f(np.asarray(mesh.nodes)), dtype=float))


def evaluate(field: FeField, point) -> float:
    """Point evaluation of a P1 field: locate the element, interpolate barycentrically."""
    mesh = field.mesh
    point = np.atleast_1d(np.asarray(point, dtype=float))
    if mesh.dim == 1:
        x = mesh.nodes[:, 0]
        r = float(point[0])
        if r < x.min() - 1e-12 or r > x.max() + 1e-12:
            raise ValueError("point outside domain")
        r = min(max(r, x.min()), x.max())
        return float(np.interp(r, x, field.values))
    p = mesh.nodes[mesh.elements]
    e0 = p[:, 1] - p[:, 0]
    e1 = p[:, 2] - p[:, 0]
    det = e0[:, 0] * e1[:, 1] - e0[:, 1] * e1[:, 0]
    d = point[None, :] - p[:, 0]
    a = (d[:, 0] * e1[:, 1] - d[:, 1] * e1[:, 0]) / det
    b = (e0[:, 0] * d[:, 1] - e0[:, 1] * d[:, 0]) / det
    ok = (a >= -1e-12) & (b >= -1e-12) & (a + b <= 1 + 1e-12)
    hits = np.flatnonzero(ok)
    if len(hits) == 0:
        raise ValueError("point outside domain")
    e = hits[0]
    verts = mesh.elements[e]
    lam = np.array([1 - a[e] - b[e], a[e], b[e]])
    return float(lam @ field.values[verts])
