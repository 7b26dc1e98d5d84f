import numpy as np
import pytest
import scipy.sparse as sp

import voxquad as vq


RSTAR = np.pi / 5


def model_psi(mesh, kappa=5.0):
    return kappa * (np.asarray(mesh.nodes) ** 2).sum(axis=1)


def test_bernoulli_values_and_identities():
    assert vq.bernoulli(0.0) == 1.0
    assert vq.bernoulli(1.0) == pytest.approx(1.0 / np.expm1(1.0), rel=1e-15)
    t = np.linspace(-50, 50, 1001)
    b = vq.bernoulli(t)
    # B(-t) - B(t) = t, the additive form of the reflection identity
    assert np.max(np.abs(vq.bernoulli(-t) - b - t)) <= 1e-13 * np.max(np.abs(b))
    assert np.all(b > 0)
    assert vq.bernoulli(709.0) == 0.0 and vq.bernoulli(1e9) == 0.0
    assert vq.bernoulli(708.0) >= 0.0


def test_bernoulli_series_matches_direct_formula():
    # straddle the series cutoff: both routes must agree to rounding
    for t in (9.9e-5, 5e-5, -9.9e-5, 1.01e-4, -1.01e-4):
        direct = t / np.expm1(t)
        assert vq.bernoulli(t) == pytest.approx(direct, rel=5e-15)
    arr = vq.bernoulli(np.array([0.0, 1.0, -1.0]))
    assert arr.shape == (3,)


def test_stiffness_reference_triangle():
    nodes = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    mesh = vq.SimplicialMesh(2, nodes, np.array([[0, 1, 2]]), np.empty(0, dtype=np.int64))
    S = vq.assemble_p1_stiffness(mesh).toarray()
    want = 0.5 * np.array([[2.0, -1.0, -1.0], [-1.0, 1.0, 0.0], [-1.0, 0.0, 1.0]])
    assert np.max(np.abs(S - want)) <= 1e-15


def test_stiffness_energy_of_linear_field(disk4):
    S = vq.assemble_p1_stiffness(disk4)
    coef = np.array([0.7, -1.3])
    u = disk4.nodes @ coef
    area = vq.element_geometry_arrays(disk4)[0].sum()
    # grad u_h = coef on every element, so the energy is |coef|^2 |Omega_h|
    assert u @ (S @ u) == pytest.approx(coef @ coef * area, rel=1e-13)
    assert np.max(np.abs(S @ np.ones(disk4.n_nodes))) <= 1e-13 * abs(S).max()
    assert abs(S - S.T).max() <= 1e-15 * abs(S).max()


def test_eafe_reduces_to_stiffness_at_zero_potential(disk8):
    S = vq.assemble_p1_stiffness(disk8)
    A = vq.assemble_eafe(disk8, np.zeros(disk8.n_nodes))
    assert abs(A - S).max() <= 1e-14 * abs(S).max()


def test_eafe_annihilates_equilibrium(disk8):
    # e^{-psi} solves the continuous equation with zero flux, and the Bernoulli
    # edge weights preserve that exactly: A e^{-psi} = 0 and 1^T A = 0
    psi = model_psi(disk8)
    A = vq.assemble_eafe(disk8, psi)
    scale = abs(A).max()
    assert np.max(np.abs(A @ np.exp(-psi))) <= 1e-12 * scale
    assert np.max(np.abs(np.asarray(A.sum(axis=0)).ravel())) <= 1e-12 * scale


def test_eafe_rejects_bad_potential(disk4):
    with pytest.raises(ValueError, match="non-finite psi"):
        vq.assemble_eafe(disk4, np.full(disk4.n_nodes, np.nan))


def test_eafe_no_positive_offdiagonals():
    for rings in (1, 2, 4, 8):
        mesh = vq.generate_disk_mesh(rings)
        for kappa in (1.0, 5.0):
            A = vq.assemble_eafe(mesh, model_psi(mesh, kappa))
            rep = vq.check_m_matrix(A, dense_threshold=0)
            assert rep.max_positive_offdiag <= 1e-13 * abs(A).max()
            assert rep.min_diagonal > 0


def test_reaction_diagonal(disk4_dual):
    big = vq.ball_region(np.zeros(2), 3.0)
    w = vq.reaction_weights(disk4_dual, big, vq.CoefficientSplit("lump"), 2.0)
    R = vq.assemble_reaction_diagonal(w)
    assert np.max(np.abs(R.diagonal() - w.values)) == 0.0
    assert R.nnz == np.count_nonzero(w.values)
    bad = vq.ReactionWeights(np.array([1.0, -0.5]), np.zeros(2), "lump")
    with pytest.raises(ValueError, match="negative weight"):
        vq.assemble_reaction_diagonal(bad)


def test_galerkin_reaction_is_mass_matrix_for_full_cover(disk4):
    big = vq.ball_region(np.zeros(2), 3.0)
    lam = lambda x: np.full(np.asarray(x).shape[:-1], 2.0)
    M = vq.assemble_galerkin_reaction(disk4, big, lam).toarray()
    # every element is interior, so this is 2x the exact P1 mass matrix
    meas = vq.element_geometry_arrays(disk4)[0]
    want = np.zeros((disk4.n_nodes, disk4.n_nodes))
    base = (np.ones((3, 3)) + np.eye(3)) / 12.0
    for e, verts in enumerate(disk4.elements):
        want[np.ix_(verts, verts)] += 2.0 * meas[e] * base
    assert np.max(np.abs(M - want)) <= 1e-13
    assert np.max(np.abs(M - M.T)) <= 1e-15


def test_galerkin_reaction_interface_deterministic(disk4):
    ball = vq.ball_region(np.zeros(2), RSTAR)
    lam = lambda x: np.full(np.asarray(x).shape[:-1], 1.0)
    a = vq.assemble_galerkin_reaction(disk4, ball, lam, samples_per_h2=50, seed=3)
    b = vq.assemble_galerkin_reaction(disk4, ball, lam, samples_per_h2=50, seed=3)
    c = vq.assemble_galerkin_reaction(disk4, ball, lam, samples_per_h2=50, seed=4)
    assert abs(a - b).max() == 0.0
    assert abs(a - c).max() > 0.0
    with pytest.raises(ValueError, match="requires ball"):
        vq.assemble_galerkin_reaction(disk4, vq.halfplane_region([1.0, 0.0], 0.0), lam)


def test_assemble_load(disk4, disk4_dual):
    f = vq.assemble_load(disk4_dual)
    assert np.array_equal(f, disk4_dual.voxel_measure)
    f[0] = -99.0  # returned array is a copy
    assert disk4_dual.voxel_measure[0] != -99.0
    g = vq.assemble_load(disk4_dual, lambda x: x[:, 0] + 2.0)
    assert np.allclose(g, (disk4.nodes[:, 0] + 2.0) * disk4_dual.voxel_measure)
    vals = np.arange(disk4.n_nodes, dtype=float)
    assert np.allclose(vq.assemble_load(disk4_dual, vals), vals * disk4_dual.voxel_measure)
    with pytest.raises(ValueError, match="length mismatch"):
        vq.assemble_load(disk4_dual, np.ones(3))


def test_eliminate_dirichlet_interval_laplace():
    # -u'' = 0 with u(0) = 0, u(1) = 1 has the P1 solution u = x exactly
    mesh = vq.generate_interval_mesh(9, 0.0, 1.0, pinned=[0.3])
    S = vq.assemble_p1_stiffness(mesh)
    n = mesh.n_nodes
    system = vq.LinearSystem(S.tocsr(), np.zeros(n), np.arange(n))
    nodes = np.array([0, n - 1])
    reduced = vq.eliminate_dirichlet(system, nodes, np.array([0.0, 1.0]), mesh=mesh)
    assert len(reduced.rhs) == n - 2
    u_free, _ = vq.solve(reduced)
    assert np.max(np.abs(u_free - mesh.nodes[reduced.free_nodes, 0])) <= 1e-12

    with pytest.raises(ValueError, match="node not on boundary"):
        vq.eliminate_dirichlet(system, np.array([1]), 0.0, mesh=mesh)
    assert vq.eliminate_dirichlet(system, np.array([], dtype=int)) is system


def test_linear_system_validation():
    A = sp.eye(3).tocsr()
    with pytest.raises(ValueError, match="rhs length mismatch"):
        vq.LinearSystem(A, np.zeros(2), np.arange(3))
    with pytest.raises(ValueError, match="matrix must be square"):
        vq.LinearSystem(sp.csr_matrix(np.ones((2, 3))), np.zeros(2), np.arange(2))


def test_kronecker_three_factors_match_dense_formula():
    meshes = [vq.generate_interval_mesh(k, 0.0, 1.0) for k in (2, 3, 2)]
    tm = vq.tensor_product_mesh(meshes)
    As = [vq.assemble_p1_stiffness(m).toarray() + np.eye(m.n_nodes) for m in meshes]
    ms = [vq.barycentric_dual(m).voxel_measure for m in meshes]
    got = vq.kronecker_assemble(tm, [sp.csr_matrix(A) for A in As], ms).toarray()
    D = [np.diag(m) for m in ms]
    want = (np.kron(np.kron(As[0], D[1]), D[2])
            + np.kron(np.kron(D[0], As[1]), D[2])
            + np.kron(np.kron(D[0], D[1]), As[2]))
    assert np.max(np.abs(got - want)) <= 1e-13


def test_kronecker_single_factor_passthrough():
    m = vq.generate_interval_mesh(4, 0.0, 1.0)
    tm = vq.tensor_product_mesh([m])
    A = vq.assemble_p1_stiffness(m)
    got = vq.kronecker_assemble(tm, [A], [vq.barycentric_dual(m).voxel_measure])
    assert abs(got - A).max() == 0.0


def test_kronecker_validation():
    mx = vq.generate_interval_mesh(2, 0.0, 1.0)
    my = vq.generate_interval_mesh(3, 0.0, 1.0)
    tm = vq.tensor_product_mesh([mx, my])
    Ax = vq.assemble_p1_stiffness(mx)
    Ay = vq.assemble_p1_stiffness(my)
    wx = vq.barycentric_dual(mx).voxel_measure
    wy = vq.barycentric_dual(my).voxel_measure
    with pytest.raises(ValueError, match="dimension mismatch"):
        vq.kronecker_assemble(tm, [Ax], [wx, wy])
    with pytest.raises(ValueError, match="dimension mismatch"):
        vq.kronecker_assemble(tm, [Ay, Ay], [wx, wy])
    with pytest.raises(ValueError, match="dimension mismatch"):
        vq.kronecker_assemble(tm, [Ax, Ay], [wx, wy[:-1]])


def test_check_m_matrix_fields():
    A = sp.csr_matrix(np.array([[2.0, -1.0], [-1.0, 2.0]]))
    rep = vq.check_m_matrix(A)
    assert rep.max_positive_offdiag == -1.0
    assert rep.worst_offdiag_location in ((0, 1), (1, 0))
    assert rep.min_diagonal == 2.0
    assert rep.min_column_dominance == 1.0
    assert rep.inverse_min_entry == pytest.approx(1.0 / 3.0, rel=1e-14)

    B = sp.csr_matrix(np.array([[1.0, 0.5], [0.0, 1.0]]))
    repb = vq.check_m_matrix(B)
    assert repb.max_positive_offdiag == 0.5
    assert repb.worst_offdiag_location == (0, 1)

    big = sp.eye(10).tocsr()
    assert vq.check_m_matrix(big, dense_threshold=5).inverse_min_entry is None
    assert vq.check_m_matrix(big).worst_offdiag_location is None


def test_dump_matrix_format_and_determinism(tmp_path):
    A = sp.csr_matrix(np.array([[1.5, 0.0], [-0.25, 3.0]]))
    p1 = tmp_path / "a.txt"
    p2 = tmp_path / "b.txt"
    vq.dump_matrix(A, p1)
    vq.dump_matrix(A, p2)
    text = p1.read_text()
    assert text == p2.read_text()
    assert text.splitlines() == ["0 0 1.5", "1 0 -0.25", "1 1 3"]
