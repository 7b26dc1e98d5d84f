"""Barycentric dual meshes: per-element voxel pieces and voxel measures.

Each node x_i owns a voxel V_i; its intersection with an element T containing
x_i is one "piece". Pieces are stored per element (never merged) because all
downstream integration is piecewise. In 2D a piece is the quadrilateral
(vertex, edge midpoint, centroid, other edge midpoint), counter-clockwise;
in 1D it is a half-interval. Key identities: |V_i ∩ T| = |T| / N_T and
|V_i| = sum over elements containing x_i of |T| / N_T.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import SimplicialMesh, TensorMesh, element_geometry_arrays

__all__ = [
    "VoxelPiece",
    "DualMesh",
    "DualReport",
    "barycentric_dual",
    "tensor_dual",
    "verify_dual_identities",
]


@dataclass(frozen=True)
class VoxelPiece:
    node: int
    element: int
    polygon: np.ndarray  # (corners, dim), CCW in 2D
    measure: float


@dataclass(frozen=True)
class DualMesh:
    """All voxel pieces of a mesh plus per-node voxel measures."""

    mesh: object
    piece_node: np.ndarray  # (P,)
    piece_element: np.ndarray  # (P,)
    piece_polys: np.ndarray  # (P, corners, dim)
    piece_measure: np.ndarray  # (P,)
    voxel_measure: np.ndarray  # (N,)

    @property
    def n_pieces(self) -> int:
        return len(self.piece_node)

    def piece(self, k: int) -> VoxelPiece:
        return VoxelPiece(int(self.piece_node[k]), int(self.piece_element[k]),
                          self.piece_polys[k], float(self.piece_measure[k]))

    def pieces(self):
        for k in range(self.n_pieces):
            yield self.piece(k)


@dataclass(frozen=True)
class DualReport:
    max_piece_deviation: float  # max |measure(V_i ∩ T) * N_T / |T| - 1|
    area_deviation: float  # |sum |V_i| - |Omega|| / |Omega|


def polygon_measure(polys: np.ndarray) -> np.ndarray:
    """Shoelace measure of (..., corners, dim) polygons; 1D inputs are intervals."""
    if polys.shape[-1] == 1:
        return np.abs(polys[..., -1, 0] - polys[..., 0, 0])
    x, y = polys[..., 0], polys[..., 1]
    return 0.5 * np.abs(np.sum(x * np.roll(y, -1, axis=-1) - np.roll(x, -1, axis=-1) * y, axis=-1))


def barycentric_dual(mesh: SimplicialMesh) -> DualMesh:
    meas = element_geometry_arrays(mesh)[0]
    if np.any(meas <= 0):
        raise ValueError("degenerate element")
    p = mesh.nodes[mesh.elements]
    m = mesh.n_elements
    if mesh.dim == 1:
        mid = 0.5 * (p[:, 0] + p[:, 1])
        polys = np.empty((m, 2, 2, 1))
        polys[:, 0, 0], polys[:, 0, 1] = p[:, 0], mid
        polys[:, 1, 0], polys[:, 1, 1] = mid, p[:, 1]
    elif mesh.dim == 2:
        c = p.mean(axis=1)
        m01 = 0.5 * (p[:, 0] + p[:, 1])
        m12 = 0.5 * (p[:, 1] + p[:, 2])
        m20 = 0.5 * (p[:, 2] + p[:, 0])
        polys = np.empty((m, 3, 4, 2))
        for slot, (v, ma, mb) in enumerate(((0, m01, m20), (1, m12, m01), (2, m20, m12))):
            polys[:, slot, 0] = p[:, v]
            polys[:, slot, 1] = ma
            polys[:, slot, 2] = c
            polys[:, slot, 3] = mb
    else:
        raise NotImplementedError(f"dim {mesh.dim}")
    nv = mesh.vertices_per_element
    polys = polys.reshape(m * nv, -1, mesh.dim)
    piece_node = mesh.elements.ravel().copy()
    piece_element = np.repeat(np.arange(m, dtype=np.int64), nv)
    piece_measure = polygon_measure(polys)
    voxel = np.zeros(mesh.n_nodes)
    np.add.at(voxel, piece_node, piece_measure)
    return DualMesh(mesh, piece_node, piece_element, polys, piece_measure, voxel)


def tensor_dual(tmesh: TensorMesh, component_duals) -> DualMesh:
    """Product dual: voxel measures multiply, pieces are boxes of component pieces."""
    if len(component_duals) != len(tmesh.components):
        raise ValueError("mismatched component counts")
    if len(component_duals) == 1:
        d = component_duals[0]
        return DualMesh(tmesh, d.piece_node, d.piece_element, d.piece_polys,
                        d.piece_measure, d.voxel_measure)
    vox = component_duals[0].voxel_measure
    for d in component_duals[1:]:
        vox = np.multiply.outer(vox, d.voxel_measure)
    vox = vox.ravel()

    # product pieces, element-major lexicographic like the node indexing
    node_shape = tmesh.shape
    elem_shape = tuple(c.n_elements for c in tmesh.components)
    per_elem = [_pieces_by_element(d, c.n_elements) for d, c in zip(component_duals, tmesh.components)]
    piece_node, piece_element, polys, measures = [], [], [], []
    for eflat in range(int(np.prod(elem_shape))):
        eidx = np.unravel_index(eflat, elem_shape)
        lists = [pe[e] for pe, e in zip(per_elem, eidx)]
        for combo in np.ndindex(*[len(l) for l in lists]):
            parts = [lists[j][combo[j]] for j in range(len(lists))]
            nflat = np.ravel_multi_index([prt[0] for prt in parts], node_shape)
            ivals = [prt[1] for prt in parts]  # component intervals (lo, hi)
            corners = _box_corners(ivals)
            piece_node.append(nflat)
            piece_element.append(eflat)
            polys.append(corners)
            measures.append(float(np.prod([hi - lo for lo, hi in ivals])))
    return DualMesh(tmesh, np.array(piece_node, dtype=np.int64),
                    np.array(piece_element, dtype=np.int64),
                    np.array(polys), np.array(measures), vox)


def _pieces_by_element(dual: DualMesh, n_elements: int):
    """For a 1D component dual: per element, list of (node, (lo, hi)) pieces."""
    out = [[] for _ in range(n_elements)]
    for k in range(dual.n_pieces):
        poly = dual.piece_polys[k]
        lo, hi = float(poly[0, 0]), float(poly[-1, 0])
        if lo > hi:
            lo, hi = hi, lo
        out[int(dual.piece_element[k])].append((int(dual.piece_node[k]), (lo, hi)))
    return out


def _box_corners(intervals):
    """Corner list of a product box; CCW order in 2D, binary order otherwise."""
    if len(intervals) == 2:
        (a0, b0), (a1, b1) = intervals
        return np.array([[a0, a1], [b0, a1], [b0, b1], [a0, b1]])
    corners = []
    for bits in np.ndindex(*([2] * len(intervals))):
        corners.append([iv[b] for iv, b in zip(intervals, bits)])
    return np.array(corners)


def verify_dual_identities(mesh, dual: DualMesh) -> DualReport:
    """Max relative deviations of the piece identity |V_i ∩ T| = |T|/N_T and the area partition."""
    if isinstance(mesh, TensorMesh):
        elem_meas = element_geometry_arrays(mesh.components[0])[0]
        for c in mesh.components[1:]:
            elem_meas = np.multiply.outer(elem_meas, element_geometry_arrays(c)[0])
        elem_meas = elem_meas.ravel()
    else:
        elem_meas = element_geometry_arrays(mesh)[0]
    n_t = mesh.vertices_per_element
    expected = elem_meas[dual.piece_element] / n_t
    piece_dev = float(np.max(np.abs(dual.piece_measure / expected - 1.0))) if dual.n_pieces else 0.0
    omega = elem_meas.sum()
    area_dev = float(abs(dual.voxel_measure.sum() - omega) / omega)
    return DualReport(piece_dev, area_dev)
