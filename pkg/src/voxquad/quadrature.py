"""Dual-mesh reaction quadrature Q(u, v) = sum u_i v_i w_i and its error functionals.

The reaction coefficient lambda(x) = lambda_bar * profile(x) is split
multiplicatively as lambda = lambda1 * lambda2. The "lump" mode evaluates the
whole coefficient at the node and integrates the indicator exactly
(w_i = lambda(x_i) |V_i ∩ K|); the "average" mode integrates the profile over
the voxel intersection (w_i = lambda_bar ∫_{V_i∩K} profile). Either way the
weights are nonnegative whenever lambda is, which is what keeps the assembled
reaction operator monotone.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .dual import DualMesh
from .mesh import mesh_size
from .region import (
    RegionSet,
    mc_integrate_piece,
    reference_region_integral,
    region_polygon_area,
    _deg4_batch,
)

__all__ = [
    "CoefficientSplit",
    "ReactionWeights",
    "reaction_weights",
    "apply_Q",
    "mass_lump",
    "local_error",
]

MC_SAMPLE_CAP = 10**7


@dataclass(frozen=True)
class CoefficientSplit:
    """Multiplicative splitting of lambda: mode 'lump' or 'average', with the smooth profile.

    profile is the x-dependent factor of the coefficient (lambda(x) =
    lambda_bar * profile(x)); it must be vectorized over (n, d) points and
    nonnegative. With mode 'lump', lambda1 = lambda and lambda2 = 1; with
    'average', lambda1 = 1 and lambda2 = lambda.
    """

    mode: str
    profile: Callable = None

    def __post_init__(self):
        if self.mode not in ("lump", "average"):
            raise ValueError("mode must be 'lump' or 'average'")
        if self.profile is None:
            object.__setattr__(self, "profile", lambda x: np.ones(np.asarray(x).shape[:-1]))


@dataclass(frozen=True)
class ReactionWeights:
    values: np.ndarray  # per-node w_i >= 0
    stderr: np.ndarray  # per-node MC standard error, 0 on exact paths
    method: str


def _classify_pieces(dual: DualMesh, region: RegionSet):
    """0 fully inside K, 1 straddling, 2 fully outside, per voxel piece."""
    polys = dual.piece_polys
    codes = np.ones(len(polys), dtype=np.int8)
    if region.kind == "ball":
        rv = np.linalg.norm(polys - region.center, axis=-1)
        codes[np.all(rv <= region.radius, axis=1)] = 0
        # exact distance from the ball center to each (convex, CCW) piece
        d2 = np.full(len(polys), np.inf)
        inside = np.ones(len(polys), dtype=bool)
        p = region.center
        for i in range(polys.shape[1]):
            a = polys[:, i]
            b = polys[:, (i + 1) % polys.shape[1]]
            ab = b - a
            ap = p[None, :] - a
            cross = ab[:, 0] * ap[:, 1] - ab[:, 1] * ap[:, 0]
            inside &= cross >= 0
            t = np.clip(np.einsum("nd,nd->n", ap, ab) / np.maximum(np.einsum("nd,nd->n", ab, ab), 1e-300), 0, 1)
            proj = a + t[:, None] * ab
            d2 = np.minimum(d2, ((p[None, :] - proj) ** 2).sum(axis=1))
        dist = np.sqrt(d2)
        dist[inside] = 0.0
        codes[dist >= region.radius] = 2
    else:
        s = np.asarray(region.signed_distance(polys))
        if region.kind == "halfplane":
            codes[np.all(s <= 0, axis=1)] = 0
            codes[np.all(s >= 0, axis=1) & ~np.all(s <= 0, axis=1)] = 2
        else:
            diam = polys.max(axis=1) - polys.min(axis=1)
            margin = region.lipschitz_bound * np.linalg.norm(diam, axis=-1)
            codes[np.all(s < -margin[:, None], axis=1)] = 0
            codes[np.all(s > margin[:, None], axis=1)] = 2
    return codes


def _piece_budget(dual, region, codes, samples_per_h2, cap):
    """Per-piece MC sample counts: the voxel budget floor(samples_per_h2/h^2) split
    over that voxel's straddling pieces."""
    h = mesh_size(dual.mesh)
    per_voxel = min(max(int(samples_per_h2 / h**2), 1), cap)
    straddle = codes == 1
    n_straddle = np.zeros(len(dual.voxel_measure), dtype=np.int64)
    np.add.at(n_straddle, dual.piece_node[straddle], 1)
    counts = np.zeros(len(codes), dtype=np.int64)
    counts[straddle] = np.maximum(per_voxel // np.maximum(n_straddle[dual.piece_node[straddle]], 1), 1)
    return counts


def _profile_integrals_smooth(polys, profile):
    """Degree-4 integrals of the profile over fully inside pieces (quads or intervals)."""
    if len(polys) == 0:
        return np.empty(0)
    out = np.zeros(len(polys))
    nc = polys.shape[1]
    for k in range(1, nc - 1):
        tris = polys[:, [0, k, k + 1]]
        out += _deg4_batch(tris, profile)
    return out


def reaction_weights(dual: DualMesh, region: RegionSet, split: CoefficientSplit,
                     lambda_bar: float, samples_per_h2: int = 1000, seed: int = 0,
                     sample_cap: int = MC_SAMPLE_CAP, use_oracle: bool = False,
                     oracle_tol: float = 1e-10) -> ReactionWeights:
    """Per-node reaction weights w_i = lambda1(x_i) ∫_{V_i∩K} lambda2 dx.

    Lump mode integrates the indicator exactly (closed-form ball/half-plane
    clipping; Monte Carlo only for generic regions). Average mode integrates
    the profile: pieces fully inside K use a degree-4 rule, straddling pieces
    use Monte Carlo with the voxel budget floor(samples_per_h2/h^2) split
    among them, or the adaptive oracle when use_oracle is set. Per-node RNG
    streams make the result independent of evaluation order.
    """
    if lambda_bar < 0:
        raise ValueError("nonnegativity violated")
    mesh = dual.mesh
    nodes = np.asarray(mesh.nodes)
    prof_nodes = np.asarray(split.profile(nodes), dtype=float)
    if np.any(prof_nodes < 0):
        raise ValueError("nonnegativity violated")
    if mesh.dim != 2:
        raise NotImplementedError("reaction weights implemented for 2D duals")

    codes = _classify_pieces(dual, region)
    corner_prof = np.asarray(split.profile(dual.piece_polys.reshape(-1, 2)), dtype=float)
    if np.any(corner_prof < 0):
        raise ValueError("nonnegativity violated")
    n = mesh.n_nodes
    values = np.zeros(n)
    variance = np.zeros(n)
    straddle_idx = np.flatnonzero(codes == 1)
    inside_idx = np.flatnonzero(codes == 0)

    if split.mode == "lump":
        area_in = np.zeros(len(codes))
        area_in[inside_idx] = dual.piece_measure[inside_idx]
        if region.kind in ("ball", "halfplane"):
            for k in straddle_idx:
                area_in[k] = region_polygon_area(dual.piece_polys[k], region)
        else:
            counts = _piece_budget(dual, region, codes, samples_per_h2, sample_cap)
            one = lambda x: np.ones(len(x))
            for k in straddle_idx:
                stream = np.random.SeedSequence(entropy=seed, spawn_key=(int(dual.piece_node[k]), int(k)))
                est, se = mc_integrate_piece(dual.piece_polys[k], one, region, int(counts[k]), stream)
                area_in[k] = est
                variance[dual.piece_node[k]] += se**2
        np.add.at(values, dual.piece_node, area_in)
        values *= lambda_bar * prof_nodes
        stderr = lambda_bar * prof_nodes * np.sqrt(variance)
        return ReactionWeights(values, stderr, "lump")

    integrals = np.zeros(len(codes))
    integrals[inside_idx] = _profile_integrals_smooth(dual.piece_polys[inside_idx], split.profile)
    if use_oracle:
        for k in straddle_idx:
            integrals[k] = reference_region_integral(dual.piece_polys[k], split.profile, region, oracle_tol)
    else:
        counts = _piece_budget(dual, region, codes, samples_per_h2, sample_cap)
        for k in straddle_idx:
            stream = np.random.SeedSequence(entropy=seed, spawn_key=(int(dual.piece_node[k]), int(k)))
            est, se = mc_integrate_piece(dual.piece_polys[k], split.profile, region, int(counts[k]), stream)
            integrals[k] = est
            variance[dual.piece_node[k]] += se**2
    np.add.at(values, dual.piece_node, integrals)
    values *= lambda_bar
    return ReactionWeights(values, lambda_bar * np.sqrt(variance), "average")


def apply_Q(weights: ReactionWeights, u, v) -> float:
    """The reaction quadrature bilinear form: sum_i u_i v_i w_i."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != weights.values.shape or v.shape != weights.values.shape:
        raise ValueError("length mismatch")
    return float(np.sum(u * v * weights.values))


def mass_lump(dual: DualMesh, f) -> float:
    """Mass-lumped integral sum_i f(x_i) |V_i|; exact on piecewise multilinear f."""
    f = np.asarray(f, dtype=float)
    if f.shape != dual.voxel_measure.shape:
        raise ValueError("length mismatch")
    return float(np.sum(f * dual.voxel_measure))


def local_error(mesh, dual: DualMesh, element: int, region: RegionSet,
                split: CoefficientSplit, u, v, oracle_tol: float = 1e-10,
                lambda_bar: float = 1.0, samples_per_h2: int = 1000, seed: int = 0,
                use_oracle: bool = True) -> float:
    """Quadrature consistency error on one element.

    E_T = ∫_T lambda u_h v_h 1_K dx (adaptive oracle, with u_h, v_h the P1
    interpolants on T) minus the element's share of the quadrature rule,
    Σ_{x_i in T} u_i v_i lambda1(x_i) ∫_{V_i∩T} lambda2 1_K, integrated along
    the same paths as reaction_weights.
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    verts = mesh.elements[element]
    p = mesh.nodes[verts]
    # P1 interpolants via barycentric coordinates on T
    mat = np.array([[p[1, 0] - p[0, 0], p[2, 0] - p[0, 0]],
                    [p[1, 1] - p[0, 1], p[2, 1] - p[0, 1]]])
    inv = np.linalg.inv(mat)

    def interp(vals):
        def fn(x):
            uv = (np.asarray(x, dtype=float) - p[0]) @ inv.T
            lam0 = 1 - uv[..., 0] - uv[..., 1]
            return vals[0] * lam0 + vals[1] * uv[..., 0] + vals[2] * uv[..., 1]
        return fn

    uh = interp(u[verts])
    vh = interp(v[verts])
    weight = lambda x: lambda_bar * np.asarray(split.profile(x), dtype=float) * uh(x) * vh(x)
    left = reference_region_integral(p, weight, region, oracle_tol)

    right = 0.0
    mask = dual.piece_element == element
    prof_nodes = np.asarray(split.profile(mesh.nodes), dtype=float)
    for k in np.flatnonzero(mask):
        i = int(dual.piece_node[k])
        poly = dual.piece_polys[k]
        if split.mode == "lump":
            part = lambda_bar * prof_nodes[i] * region_polygon_area(poly, region)
        else:
            codes = _classify_pieces(_single_piece_view(dual, k), region)
            if codes[0] == 2:
                part = 0.0
            elif codes[0] == 0:
                part = lambda_bar * float(_profile_integrals_smooth(poly[None], split.profile)[0])
            elif use_oracle:
                part = lambda_bar * reference_region_integral(poly, split.profile, region, oracle_tol)
            else:
                h = mesh_size(mesh)
                n_mc = min(max(int(samples_per_h2 / h**2), 1), MC_SAMPLE_CAP)
                stream = np.random.SeedSequence(entropy=seed, spawn_key=(i, int(k)))
                part = lambda_bar * mc_integrate_piece(poly, split.profile, region, n_mc, stream)[0]
        right += u[i] * v[i] * part
    return left - right


def _single_piece_view(dual: DualMesh, k: int) -> DualMesh:
    return DualMesh(dual.mesh, dual.piece_node[k:k + 1], dual.piece_element[k:k + 1],
                    dual.piece_polys[k:k + 1], dual.piece_measure[k:k + 1], dual.voxel_measure)
