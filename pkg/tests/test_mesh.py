import numpy as np
import pytest

import voxquad as vq


def test_disk_mesh_counts():
    for rings in (1, 2, 3, 4, 8):
        m = vq.generate_disk_mesh(rings)
        assert m.n_nodes == 1 + 3 * rings * (rings + 1)
        assert m.n_elements == 6 * rings**2
        assert len(m.boundary) == 6 * rings


def test_disk_mesh_geometry(disk4):
    radii = np.linalg.norm(disk4.nodes, axis=1)
    assert np.allclose(sorted(set(np.round(radii, 12))), [0, 0.25, 0.5, 0.75, 1.0])
    assert np.allclose(radii[disk4.boundary], 1.0)
    meas, grads, diams, inradii = vq.element_geometry_arrays(disk4)
    assert np.all(meas > 0)
    # triangulation tiles the polygonal disk: area is that of the inscribed polygon
    rings = 4
    n_bd = 6 * rings
    poly_area = 0.5 * n_bd * np.sin(2 * np.pi / n_bd)
    assert abs(meas.sum() - poly_area) < 1e-12


def test_disk_mesh_nondegenerate_under_refinement():
    ratios = [vq.nondegeneracy_ratio(vq.generate_disk_mesh(r)) for r in (2, 4, 8, 16)]
    assert max(ratios) < 6.0
    assert max(ratios) / min(ratios) < 1.2


def test_disk_mesh_rejects_bad_rings():
    with pytest.raises(ValueError):
        vq.generate_disk_mesh(0)


def test_p1_gradients_reproduce_linears(disk4):
    meas, grads, _, _ = vq.element_geometry_arrays(disk4)
    coef = np.array([0.7, -1.3])
    vals = disk4.nodes @ coef
    # nabla(sum_i v_i phi_i) must equal coef on every element
    g = np.einsum("evd,ev->ed", grads, vals[disk4.elements])
    assert np.max(np.abs(g - coef)) < 1e-12


def test_mesh_size_is_max_diameter(disk4):
    _, _, diams, _ = vq.element_geometry_arrays(disk4)
    assert vq.mesh_size(disk4) == pytest.approx(diams.max(), rel=0, abs=0)


def test_interval_mesh_pins_nodes():
    m = vq.generate_interval_mesh(10, 0.0, 1.0, pinned=[np.pi / 5])
    assert m.dim == 1
    assert m.n_elements == 10
    x = m.nodes[:, 0]
    assert x[0] == 0.0 and x[-1] == 1.0
    assert np.any(x == np.pi / 5)
    assert np.all(np.diff(x) > 0)
    assert set(m.boundary) == {0, m.n_nodes - 1}


def test_interval_mesh_handles_tight_counts():
    m = vq.generate_interval_mesh(2, 0.0, 1.0, pinned=[0.3])
    x = m.nodes[:, 0]
    assert m.n_elements == 2
    assert np.any(x == 0.3)


def test_interval_mesh_validates():
    with pytest.raises(ValueError):
        vq.generate_interval_mesh(0, 0.0, 1.0)
    with pytest.raises(ValueError):
        vq.generate_interval_mesh(4, 1.0, 0.0)
    with pytest.raises(ValueError):
        vq.generate_interval_mesh(4, 0.0, 1.0, pinned=[1.5])


def test_tensor_product_lexicographic_order():
    mx = vq.generate_interval_mesh(2, 0.0, 1.0)
    my = vq.generate_interval_mesh(3, 0.0, 3.0)
    tm = vq.tensor_product_mesh([mx, my])
    assert tm.shape == (3, 4)
    assert tm.n_nodes == 12
    assert tm.n_elements == 6
    assert tm.vertices_per_element == 4
    # first component varies slowest, matching the Kronecker convention
    want = np.array([[x, y] for x in mx.nodes[:, 0] for y in my.nodes[:, 0]])
    assert np.array_equal(tm.nodes, want)


def test_simplicial_mesh_validation():
    nodes = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    with pytest.raises(ValueError):
        vq.SimplicialMesh(2, nodes, np.array([[0, 1, 3]]), np.empty(0, dtype=np.int64))
    with pytest.raises(ValueError):
        # clockwise (negative measure) element
        vq.SimplicialMesh(2, nodes, np.array([[0, 2, 1]]), np.empty(0, dtype=np.int64))
    with pytest.raises(ValueError):
        vq.SimplicialMesh(2, np.array([[0.0, np.nan], [1, 0], [0, 1]]),
                          np.array([[0, 1, 2]]), np.empty(0, dtype=np.int64))


def test_mesh_arrays_read_only(disk4):
    with pytest.raises(ValueError):
        disk4.nodes[0, 0] = 7.0


def test_save_load_roundtrip(tmp_path, disk4, interval7):
    for mesh in (disk4, interval7):
        p = tmp_path / "m.txt"
        vq.save_mesh(mesh, p)
        back = vq.load_mesh(p)
        assert back.dim == mesh.dim
        assert np.array_equal(back.nodes, mesh.nodes)
        assert np.array_equal(back.elements, mesh.elements)
        assert np.array_equal(back.boundary, mesh.boundary)


def test_load_mesh_errors(tmp_path):
    bad_header = tmp_path / "a.txt"
    bad_header.write_text("dimension 2\n")
    with pytest.raises(ValueError, match="malformed header"):
        vq.load_mesh(bad_header)

    bad_index = tmp_path / "b.txt"
    bad_index.write_text("dim 2\nnodes 3\n0 0\n1 0\n0 1\nelements 1\n0 1 9\n")
    with pytest.raises(ValueError, match="index out of range"):
        vq.load_mesh(bad_index)

    bad_coord = tmp_path / "c.txt"
    bad_coord.write_text("dim 2\nnodes 3\n0 0\n1 nan\n0 1\nelements 1\n0 1 2\n")
    with pytest.raises(ValueError, match="non-finite coordinate"):
        vq.load_mesh(bad_coord)
