"""Discrete operators: P1 stiffness, the exponentially fitted transport matrix,
reaction matrices, load vector, Dirichlet elimination, Kronecker products, and
M-matrix verification.

The transport discretization scales each stiffness off-diagonal by the
Bernoulli function of the potential difference across that edge
(A[r, c] = B(psi_r - psi_c) * S[r, c]) and sets the diagonal so every column
sums to zero. On Delaunay-type meshes (stiffness off-diagonals <= 0) this
yields an M-matrix, which is what guarantees nonnegative solutions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .dual import DualMesh
from .mesh import SimplicialMesh, TensorMesh, element_geometry_arrays, mesh_size
from .quadrature import MC_SAMPLE_CAP, ReactionWeights
from .region import RegionSet, classify_elements, INTERIOR, INTERFACE
from .region import _D4_PTS, _D4_WTS

__all__ = [
    "LinearSystem",
    "MMatrixReport",
    "bernoulli",
    "assemble_p1_stiffness",
    "assemble_eafe",
    "assemble_reaction_diagonal",
    "assemble_galerkin_reaction",
    "assemble_load",
    "eliminate_dirichlet",
    "kronecker_assemble",
    "check_m_matrix",
    "dump_matrix",
]


@dataclass(frozen=True)
class LinearSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray
    free_nodes: np.ndarray

    def __post_init__(self):
        if self.matrix.shape[0] != self.matrix.shape[1]:
            raise ValueError("matrix must be square")
        if self.matrix.shape[0] != len(self.rhs):
            raise ValueError("rhs length mismatch")


@dataclass(frozen=True)
class MMatrixReport:
    max_positive_offdiag: float
    worst_offdiag_location: tuple | None
    min_diagonal: float
    min_column_dominance: float  # min_j (A_jj - sum_{i != j} |A_ij|)
    inverse_min_entry: float | None  # dense check, only when n <= threshold


def bernoulli(t):
    """B(t) = t / (e^t - 1) with B(0) = 1, series evaluation near zero.

    Satisfies B(-t) = e^t B(t); decays like t e^{-t} for large positive t and
    grows like -t for large negative t.
    """
    t = np.asarray(t, dtype=float)
    out = np.empty_like(t)
    small = np.abs(t) < 1e-4
    ts = t[small]
    out[small] = 1 - ts / 2 + ts**2 / 12 - ts**4 / 720
    tb = t[~small]
    with np.errstate(over="ignore"):
        out[~small] = np.where(tb > 708, 0.0, tb / np.expm1(np.minimum(tb, 708.0)))
    return out if out.ndim else float(out)


def assemble_p1_stiffness(mesh: SimplicialMesh) -> sp.csr_matrix:
    """S_ij = ∫ grad(phi_i) . grad(phi_j); symmetric, zero row sums."""
    meas, grads, _, _ = element_geometry_arrays(mesh)
    if np.any(meas <= 0):
        raise ValueError("degenerate element")
    nv = mesh.vertices_per_element
    rows, cols, vals = [], [], []
    for i in range(nv):
        for j in range(nv):
            rows.append(mesh.elements[:, i])
            cols.append(mesh.elements[:, j])
            vals.append(meas * np.einsum("ed,ed->e", grads[:, i], grads[:, j]))
    n = mesh.n_nodes
    S = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))
    S.sum_duplicates()
    return S


def assemble_eafe(mesh: SimplicialMesh, psi) -> sp.csr_matrix:
    """Transport operator for -div(grad u + u grad psi) with Bernoulli edge weights."""
    psi = np.asarray(psi, dtype=float)
    if not np.all(np.isfinite(psi)):
        raise ValueError("non-finite psi")
    S = assemble_p1_stiffness(mesh).tocoo()
    off = S.row != S.col
    r, c, v = S.row[off], S.col[off], S.data[off]
    a = bernoulli(psi[r] - psi[c]) * v
    A = sp.csr_matrix((a, (r, c)), shape=S.shape)
    colsum = np.asarray(A.sum(axis=0)).ravel()
    return (A - sp.diags(colsum)).tocsr()


def assemble_reaction_diagonal(weights: ReactionWeights) -> sp.csr_matrix:
    if np.any(weights.values < 0):
        raise ValueError("negative weight")
    return sp.diags(weights.values).tocsr()


def assemble_galerkin_reaction(mesh: SimplicialMesh, region: RegionSet, lam,
                               samples_per_h2: int = 1000, seed: int = 0,
                               sample_cap: int = MC_SAMPLE_CAP) -> sp.csr_matrix:
    """Consistent reaction mass matrix ∫_K lam phi_i phi_j by the three-case element loop.

    Elements fully inside K use a degree-4 rule, elements fully outside
    contribute nothing, and interface elements are integrated by Monte Carlo
    with floor(samples_per_h2/h^2) samples from a per-element RNG stream.
    """
    if region.kind != "ball":
        raise ValueError("three-case assembly requires ball")
    if mesh.dim != 2:
        raise NotImplementedError("Galerkin reaction implemented for 2D meshes")
    tags = classify_elements(mesh, region).tags
    meas = element_geometry_arrays(mesh)[0]
    n = mesh.n_nodes
    tris = mesh.elements
    p = mesh.nodes[tris]
    rows, cols, vals = [], [], []

    interior = np.flatnonzero(tags == INTERIOR)
    if len(interior):
        pi = p[interior]
        x = (pi[:, None, 0]
             + _D4_PTS[None, :, 0:1] * (pi[:, None, 1] - pi[:, None, 0])
             + _D4_PTS[None, :, 1:2] * (pi[:, None, 2] - pi[:, None, 0]))
        lam_q = np.asarray(lam(x.reshape(-1, 2)), dtype=float).reshape(len(interior), -1)
        phis = np.stack([1 - _D4_PTS[:, 0] - _D4_PTS[:, 1], _D4_PTS[:, 0], _D4_PTS[:, 1]], axis=1)
        local = np.einsum("eq,qi,qj->eij", lam_q * _D4_WTS[None, :], phis, phis) * meas[interior][:, None, None]
        for i in range(3):
            for j in range(3):
                rows.append(tris[interior, i])
                cols.append(tris[interior, j])
                vals.append(local[:, i, j])

    interface = np.flatnonzero(tags == INTERFACE)
    if len(interface):
        h = mesh_size(mesh)
        n_mc = min(max(int(samples_per_h2 / h**2), 1), sample_cap)
        chunk = 10**6
        for e in interface:
            rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(int(e),)))
            acc = np.zeros((3, 3))
            left = n_mc
            while left > 0:
                m = min(left, chunk)
                uv = rng.random((m, 2))
                fold = uv.sum(axis=1) > 1
                uv[fold] = 1 - uv[fold]
                x = p[e, 0] + uv[:, 0:1] * (p[e, 1] - p[e, 0]) + uv[:, 1:2] * (p[e, 2] - p[e, 0])
                w = np.asarray(lam(x), dtype=float) * region.indicator(x)
                phi = np.stack([1 - uv[:, 0] - uv[:, 1], uv[:, 0], uv[:, 1]], axis=1)
                acc += (phi * w[:, None]).T @ phi
                left -= m
            local = meas[e] * acc / n_mc
            for i in range(3):
                for j in range(3):
                    rows.append(tris[e, i:i + 1])
                    cols.append(tris[e, j:j + 1])
                    vals.append(local[i:i + 1, j])

    if not rows:
        return sp.csr_matrix((n, n))
    M = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))
    M.sum_duplicates()
    return M


def assemble_load(dual: DualMesh, f=None) -> np.ndarray:
    """Load vector by mass lumping: (f_h)_i = f(x_i) |V_i|; exactly |V_i| for f ≡ 1."""
    if f is None:
        return dual.voxel_measure.copy()
    if callable(f):
        vals = np.asarray(f(np.asarray(dual.mesh.nodes)), dtype=float)
    else:
        vals = np.asarray(f, dtype=float)
    if vals.shape != dual.voxel_measure.shape:
        raise ValueError("length mismatch")
    return vals * dual.voxel_measure


def eliminate_dirichlet(system: LinearSystem, nodes, values=0.0, mesh=None) -> LinearSystem:
    """Remove Dirichlet rows/columns, moving the known values to the right-hand side."""
    nodes = np.asarray(nodes, dtype=np.int64)
    if len(nodes) == 0:
        return system
    if mesh is not None and not np.all(np.isin(nodes, mesh.boundary)):
        raise ValueError("node not on boundary")
    n = system.matrix.shape[0]
    vals = np.broadcast_to(np.asarray(values, dtype=float), nodes.shape)
    free = np.setdiff1d(np.arange(n), nodes)
    A = system.matrix.tocsc()
    rhs = system.rhs[free] - A[:, nodes][free, :] @ vals
    return LinearSystem(A[:, free][free, :].tocsr(), rhs, free)


def kronecker_assemble(tmesh: TensorMesh, component_transport, component_lumped_masses) -> sp.csr_matrix:
    """Tensor-product operator sum_j M1 (x) ... (x) A_j (x) ... (x) MJ (lumped masses off-axis)."""
    J = len(tmesh.components)
    if len(component_transport) != J or len(component_lumped_masses) != J:
        raise ValueError("dimension mismatch")
    shape = tmesh.shape
    for j in range(J):
        if component_transport[j].shape != (shape[j], shape[j]):
            raise ValueError("dimension mismatch")
        if len(component_lumped_masses[j]) != shape[j]:
            raise ValueError("dimension mismatch")
    if J == 1:
        return sp.csr_matrix(component_transport[0])
    total = None
    for j in range(J):
        term = None
        for k in range(J):
            factor = sp.csr_matrix(component_transport[k]) if k == j \
                else sp.diags(np.asarray(component_lumped_masses[k], dtype=float))
            term = factor if term is None else sp.kron(term, factor, format="csr")
        total = term if total is None else total + term
    return total.tocsr()


def check_m_matrix(A, dense_threshold: int = 500) -> MMatrixReport:
    """Report the M-matrix diagnostics: off-diagonal signs, diagonal, dominance, inverse positivity."""
    A = sp.csr_matrix(A)
    C = A.tocoo()
    off = C.row != C.col
    if off.any():
        k = np.argmax(C.data[off])
        max_off = float(C.data[off][k])
        loc = (int(C.row[off][k]), int(C.col[off][k]))
    else:
        max_off = 0.0
        loc = None
    diag = A.diagonal()
    col_abs_off = np.asarray(abs(A).sum(axis=0)).ravel() - np.abs(diag)
    dominance = float(np.min(diag - col_abs_off))
    inv_min = None
    n = A.shape[0]
    if n <= dense_threshold:
        inv = np.linalg.inv(A.toarray())
        inv_min = float(inv.min())
    return MMatrixReport(max_off, loc, float(diag.min()), dominance, inv_min)


def dump_matrix(A, path) -> None:
    """Write coordinate text: one 'row col value' line per stored entry, row-major."""
    C = sp.csr_matrix(A).tocoo()
    order = np.lexsort((C.col, C.row))
    with open(path, "w", encoding="utf-8") as fh:
        for k in order:
            fh.write(f"{C.row[k]} {C.col[k]} {C.data[k]:.17g}\n")
