"""Simplicial meshes: interval and disk generators, tensor products, geometry, text I/O.

Meshes are immutable after construction (node/element arrays are set read-only).
The disk generator builds concentric rings of nodes (ring k at radius k/rings
with 6k nodes) triangulated band by band, so refinement means regenerating
with a doubled ring count.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "SimplicialMesh",
    "TensorMesh",
    "ElementGeometry",
    "generate_interval_mesh",
    "generate_disk_mesh",
    "tensor_product_mesh",
    "element_geometry",
    "element_geometry_arrays",
    "mesh_size",
    "nondegeneracy_ratio",
    "save_mesh",
    "load_mesh",
]


@dataclass(frozen=True)
class SimplicialMesh:
    """Conforming simplicial mesh: nodes (N, d), elements (M, d+1), boundary node indices."""

    dim: int
    nodes: np.ndarray
    elements: np.ndarray
    boundary: np.ndarray

    def __post_init__(self):
        nodes = np.ascontiguousarray(np.atleast_2d(np.asarray(self.nodes, dtype=float)))
        if nodes.shape[0] == 1 and self.dim == 1 and nodes.shape[1] > 1:
            nodes = nodes.T
        elements = np.ascontiguousarray(np.asarray(self.elements, dtype=np.int64))
        boundary = np.ascontiguousarray(np.asarray(self.boundary, dtype=np.int64))
        if nodes.ndim != 2 or nodes.shape[1] != self.dim:
            raise ValueError(f"nodes must have shape (N, {self.dim})")
        if not np.all(np.isfinite(nodes)):
            raise ValueError("non-finite coordinate")
        if elements.ndim != 2 or elements.shape[1] != self.dim + 1:
            raise ValueError(f"elements must have shape (M, {self.dim + 1})")
        for arr in (elements, boundary):
            if arr.size and (arr.min() < 0 or arr.max() >= len(nodes)):
                raise ValueError("index out of range")
        for arr in (nodes, elements, boundary):
            arr.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "elements", elements)
        object.__setattr__(self, "boundary", boundary)
        meas = element_geometry_arrays(self)[0]
        if np.any(meas <= 0):
            raise ValueError("degenerate or negatively oriented element")

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    @property
    def vertices_per_element(self) -> int:
        return self.dim + 1


@dataclass(frozen=True)
class TensorMesh:
    """Tensor product of simplicial component meshes, lexicographic indexing.

    Node index = i1*(N2*...*NJ) + i2*(N3*...*NJ) + ... (first component slowest),
    matching the Kronecker product convention A1 (x) A2 (x) ... used in assembly.
    """

    components: tuple
    nodes: np.ndarray = field(init=False)

    def __post_init__(self):
        if not self.components:
            raise ValueError("empty component list")
        object.__setattr__(self, "components", tuple(self.components))
        grids = [c.nodes for c in self.components]
        idx = np.meshgrid(*[np.arange(len(g)) for g in grids], indexing="ij")
        coords = [g[i.ravel()] for g, i in zip(grids, idx)]
        nodes = np.hstack(coords)
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)

    @property
    def shape(self) -> tuple:
        return tuple(c.n_nodes for c in self.components)

    @property
    def n_nodes(self) -> int:
        return int(np.prod(self.shape))

    @property
    def n_elements(self) -> int:
        return int(np.prod([c.n_elements for c in self.components]))

    @property
    def vertices_per_element(self) -> int:
        return int(np.prod([c.dim + 1 for c in self.components]))


@dataclass(frozen=True)
class ElementGeometry:
    measure: float
    gradients: np.ndarray  # (d+1, d): P1 basis gradients per vertex
    diameter: float
    inradius: float


def generate_interval_mesh(n: int, a: float, b: float, pinned: Sequence[float] | None = None) -> SimplicialMesh:
    """Quasi-uniform mesh of [a, b] with n elements whose nodes include all pinned values exactly.

    Elements are allocated to the sub-segments between pinned values in
    proportion to length, so for well-separated pins the max/min element
    length ratio stays at most 2.
    """
    if n <= 0:
        raise ValueError("nonpositive n")
    if not a < b:
        raise ValueError("need a < b")
    pins = sorted(set(float(p) for p in (pinned or [])))
    for p in pins:
        if not (a < p < b):
            raise ValueError(f"pinned value {p} outside ({a}, {b})")
    cuts = [a] + pins + [b]
    lengths = np.diff(cuts)
    if n < len(lengths):
        raise ValueError("n too small for the pinned values")
    ideal = n * lengths / (b - a)
    counts = np.maximum(1, np.floor(ideal).astype(int))
    while counts.sum() > n:
        surplus = np.where(counts > 1, counts - ideal, -np.inf)
        counts[np.argmax(surplus)] -= 1
    while counts.sum() < n:
        j = np.argmax(np.where(counts >= 1, ideal - counts, -np.inf))
        counts[j] += 1
    pieces = [np.linspace(cuts[s], cuts[s + 1], counts[s] + 1)[: -1 if s < len(lengths) - 1 else None]
              for s in range(len(lengths))]
    x = np.concatenate(pieces)
    elements = np.stack([np.arange(n), np.arange(1, n + 1)], axis=1)
    return SimplicialMesh(1, x[:, None], elements, np.array([0, n]))


def generate_disk_mesh(rings: int) -> SimplicialMesh:
    """Spiderweb triangulation of the unit disk: ring k at radius k/rings with 6k nodes.

    Bands between consecutive rings are triangulated by a zig-zag within each
    of the six sectors. All triangles are positively oriented; the boundary
    ring lies exactly at radius 1, so the mesh covers the inscribed polygon.
    """
    if rings < 1:
        raise ValueError("rings must be >= 1")
    nodes = [(0.0, 0.0)]
    ring_start = [0]
    for k in range(1, rings + 1):
        ring_start.append(len(nodes))
        r = k / rings
        ang = 2 * np.pi * np.arange(6 * k) / (6 * k)
        nodes.extend(zip(r * np.cos(ang), r * np.sin(ang)))
    nodes = np.array(nodes)

    tris = []
    s1 = ring_start[1]
    for j in range(6):
        tris.append((0, s1 + j, s1 + (j + 1) % 6))
    for k in range(2, rings + 1):
        so, si = ring_start[k], ring_start[k - 1]
        mo, mi = 6 * k, 6 * (k - 1)
        for s in range(6):
            for j in range(k):
                o0 = so + (s * k + j) % mo
                o1 = so + (s * k + j + 1) % mo
                i0 = si + (s * (k - 1) + j) % mi
                tris.append((o0, o1, i0))
            for j in range(k - 1):
                i0 = si + (s * (k - 1) + j) % mi
                i1 = si + (s * (k - 1) + j + 1) % mi
                o1 = so + (s * k + j + 1) % mo
                tris.append((i0, o1, i1))
    tris = np.array(tris, dtype=np.int64)
    p = nodes[tris]
    signed2 = (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1]) - (
        p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1])
    flip = signed2 < 0
    tris[flip] = tris[flip][:, [0, 2, 1]]
    boundary = np.arange(ring_start[rings], len(nodes))
    return SimplicialMesh(2, nodes, tris, boundary)


def tensor_product_mesh(components: Sequence[SimplicialMesh]) -> TensorMesh:
    if not components:
        raise ValueError("empty component list")
    return TensorMesh(tuple(components))


def element_geometry_arrays(mesh: SimplicialMesh):
    """Vectorized geometry for all elements: (measures, gradients, diameters, inradii)."""
    p = mesh.nodes[mesh.elements]
    if mesh.dim == 1:
        h = p[:, 1, 0] - p[:, 0, 0]
        grads = np.stack([-1.0 / h, 1.0 / h], axis=1)[:, :, None]
        return h, grads, np.abs(h), np.abs(h) / 2
    if mesh.dim == 2:
        e0 = p[:, 1] - p[:, 0]
        e1 = p[:, 2] - p[:, 0]
        area = 0.5 * (e0[:, 0] * e1[:, 1] - e0[:, 1] * e1[:, 0])
        grads = np.empty((len(p), 3, 2))
        for i in range(3):
            edge = p[:, (i + 2) % 3] - p[:, (i + 1) % 3]
            grads[:, i, 0] = -edge[:, 1]
            grads[:, i, 1] = edge[:, 0]
        grads /= (2 * area)[:, None, None]
        sides = np.stack([
            np.linalg.norm(p[:, 1] - p[:, 0], axis=1),
            np.linalg.norm(p[:, 2] - p[:, 1], axis=1),
            np.linalg.norm(p[:, 0] - p[:, 2], axis=1),
        ])
        diam = sides.max(axis=0)
        inr = area / (0.5 * sides.sum(axis=0))
        return area, grads, diam, inr
    raise NotImplementedError(f"dim {mesh.dim}")


def element_geometry(mesh: SimplicialMesh, e: int) -> ElementGeometry:
    if not 0 <= e < mesh.n_elements:
        raise IndexError("element index out of range")
    meas, grads, diam, inr = element_geometry_arrays(mesh)
    if meas[e] <= 0:
        raise ValueError("degenerate element")
    return ElementGeometry(float(meas[e]), grads[e].copy(), float(diam[e]), float(inr[e]))


def mesh_size(mesh: SimplicialMesh) -> float:
    """h = max element diameter."""
    if mesh.n_elements == 0:
        raise ValueError("empty mesh")
    return float(element_geometry_arrays(mesh)[2].max())


def nondegeneracy_ratio(mesh: SimplicialMesh) -> float:
    """max over elements of diameter / inradius."""
    if mesh.n_elements == 0:
        raise ValueError("empty mesh")
    _, _, diam, inr = element_geometry_arrays(mesh)
    return float((diam / inr).max())


def save_mesh(mesh: SimplicialMesh, path) -> None:
    """Write the plain-text format: dim / nodes / coordinate rows / elements / index rows / boundary."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"dim {mesh.dim}\n")
        fh.write(f"nodes {mesh.n_nodes}\n")
        for row in mesh.nodes:
            fh.write(" ".join(f"{v:.17g}" for v in row) + "\n")
        fh.write(f"elements {mesh.n_elements}\n")
        for row in mesh.elements:
            fh.write(" ".join(str(int(v)) for v in row) + "\n")
        if len(mesh.boundary):
            fh.write(f"boundary {len(mesh.boundary)}\n")
            fh.write(" ".join(str(int(v)) for v in mesh.boundary) + "\n")


def load_mesh(path) -> SimplicialMesh:
    with open(path, encoding="utf-8") as fh:
        tokens = fh.read().split()
    pos = 0

    def expect(keyword):
        nonlocal pos
        if pos >= len(tokens) or tokens[pos] != keyword:
            raise ValueError(f"malformed header: expected '{keyword}'")
        pos += 1
        try:
            count = int(tokens[pos])
        except (IndexError, ValueError):
            raise ValueError(f"malformed header: bad count after '{keyword}'")
        pos += 1
        return count

    dim = expect("dim")
    n = expect("nodes")
    need = n * dim
    try:
        coords = np.array(tokens[pos:pos + need], dtype=float).reshape(n, dim)
    except ValueError:
        raise ValueError("malformed node coordinates")
    pos += need
    if not np.all(np.isfinite(coords)):
        raise ValueError("non-finite coordinate")
    m = expect("elements")
    need = m * (dim + 1)
    try:
        elements = np.array(tokens[pos:pos + need], dtype=np.int64).reshape(m, dim + 1)
    except ValueError:
        raise ValueError("malformed element indices")
    pos += need
    boundary = np.empty(0, dtype=np.int64)
    if pos < len(tokens):
        b = expect("boundary")
        boundary = np.array(tokens[pos:pos + b], dtype=np.int64)
        pos += b
    if elements.size and (elements.min() < 0 or elements.max() >= n):
        raise ValueError("index out of range")
    return SimplicialMesh(dim, coords, elements, boundary)
