import io

import numpy as np
import pytest

import voxquad as vq
import voxquad.assembly
import voxquad.solver
from voxquad import cli


def test_estimate_rate_recovers_exact_slopes():
    hs = np.array([1.0, 0.5, 0.25, 0.125])
    for p in (0.0, 1.5, 2.0):
        assert vq.estimate_rate(hs, 3.7 * hs**p) == pytest.approx(p, abs=1e-12)


def test_estimate_rate_validation():
    with pytest.raises(ValueError, match="at least 2"):
        vq.estimate_rate([1.0], [1.0])
    with pytest.raises(ValueError, match="nonpositive"):
        vq.estimate_rate([1.0, 0.5], [1.0, 0.0])
    with pytest.raises(ValueError, match="nonpositive"):
        vq.estimate_rate([1.0, -0.5], [1.0, 1.0])


def test_study_config_validation():
    with pytest.raises(ValueError, match="strictly increasing"):
        vq.StudyConfig(rings=(4, 2))
    with pytest.raises(ValueError, match="strictly increasing"):
        vq.StudyConfig(rings=(0, 2))
    with pytest.raises(ValueError, match="method"):
        vq.StudyConfig(method="exact")
    with pytest.raises(ValueError, match="out of range"):
        vq.StudyConfig(lambda_bar=-1.0)
    with pytest.raises(ValueError, match="out of range"):
        vq.StudyConfig(tol=0.0)
    with pytest.raises(ValueError, match="out of range"):
        vq.StudyConfig(samples_per_h2=0)


def test_run_convergence_small_schedule():
    config = vq.StudyConfig(rings=(2, 4, 8), method="lump", kappa_bar=1.0)
    report = vq.run_convergence(config)
    assert report.columns == ("h", "lump")
    assert report.rows.shape == (3, 2)
    assert np.all(np.diff(report.rows[:, 0]) < 0)  # h decreases
    assert np.all(report.rows[:, 1] > 0)
    assert np.all(np.diff(report.rows[:, 1]) < 0)  # error decreases
    assert report.rates_all["lump"] > 1.0
    assert np.isfinite(report.rates_finest_half["lump"])
    assert report.wall_time > 0


def test_run_convergence_constant_solution_exact():
    # reaction region covering the domain and no drift: u = 1/lambda exactly,
    # for both coefficient splittings, at every h
    config = vq.StudyConfig(rings=(2, 4), method="both", kappa_bar=0.0, rstar=2.0)
    report = vq.run_convergence(config)
    assert report.columns == ("h", "lump", "integrate")
    assert np.all(report.rows[:, 1:] <= 1e-9)


def test_supercloseness_null_for_identical_reaction_matrices(disk4, disk4_dual):
    # replacing the diagonal rule by the consistent mass on both sides leaves
    # two copies of the same system, so the distances collapse to solver noise
    big = vq.ball_region(np.zeros(2), 3.0)
    lam = lambda x: np.full(np.asarray(x).shape[:-1], 5.0)
    S = vq.assemble_p1_stiffness(disk4)
    Rg = vq.assemble_galerkin_reaction(disk4, big, lam)
    f = vq.assemble_load(disk4_dual)
    n = disk4.n_nodes
    u1, _ = vq.solve(vq.LinearSystem((S + Rg).tocsr(), f, np.arange(n)))
    u2, _ = vq.solve(vq.LinearSystem((S + Rg).tocsr(), f, np.arange(n)))
    assert vq.discrete_l2_norm(disk4_dual, u1 - u2) <= 1e-10
    assert vq.h1_seminorm_diff(S, u1, u2) <= 1e-10


def test_write_csv_deterministic_and_buffer(tmp_path):
    config = vq.StudyConfig(rings=(2, 4), method="lump")
    r1 = vq.run_convergence(config)
    r2 = vq.run_convergence(config)
    pa, pb = tmp_path / "a.csv", tmp_path / "b.csv"
    vq.write_csv(r1, pa)
    vq.write_csv(r2, pb)
    assert pa.read_bytes() == pb.read_bytes()
    buf = io.StringIO()
    vq.write_csv(r1, buf)
    assert buf.getvalue() == pa.read_text()
    lines = pa.read_text().splitlines()
    assert lines[0] == "h,lump"
    assert len(lines) == 3


def test_supercloseness_reproducible_across_runs(tmp_path):
    config = vq.StudyConfig(study="supercloseness", rings=(1, 2), samples_per_h2=200, mc_seed=5)
    r1 = vq.run_supercloseness(config)
    r2 = vq.run_supercloseness(config)
    assert np.array_equal(r1.rows, r2.rows)
    assert r1.columns == ("h", "L2", "H1")
    assert r1.extra["seed"] == 5
    other = vq.run_supercloseness(
        vq.StudyConfig(study="supercloseness", rings=(1, 2), samples_per_h2=200, mc_seed=6))
    assert not np.array_equal(r1.rows, other.rows)
    assert np.all(r1.rows[:, 1:] > 0)


def test_run_local_orders_reports_interface_counts():
    config = vq.StudyConfig(study="local-orders", rstar=cli.GENERIC_RSTAR,
                            rings=(2, 4), tol=1e-8)
    report = vq.run_local_orders(config)
    assert report.columns == ("h", "interior", "interface")
    counts = report.extra["interface_counts"]
    assert len(counts) == 2 and counts[1] > counts[0] > 0
    assert np.all(report.rows[:, 1:] > 0)
    assert np.isfinite(report.extra["count_slope"])


def test_run_verify_all_green():
    status, checks = vq.run_verify()
    assert status == 0
    assert len(checks) == 10
    assert all(ok for _, ok, _ in checks)
    assert all(detail for _, _, detail in checks)


def test_run_verify_flags_broken_invariant(monkeypatch):
    # a wrong Bernoulli function must fail its identity check without crashing
    monkeypatch.setattr(vq.assembly, "bernoulli",
                        lambda t: np.ones_like(np.asarray(t, dtype=float)))
    status, checks = vq.run_verify()
    assert status == 1
    failed = {name for name, ok, _ in checks if not ok}
    assert "Bernoulli reflection identity" in failed


def test_run_verify_flags_sign_flipped_edge_weights(monkeypatch):
    real = vq.assembly.bernoulli
    monkeypatch.setattr(vq.assembly, "bernoulli", lambda t: -real(t))
    status, checks = vq.run_verify()
    assert status == 1
    failed = {name for name, ok, _ in checks if not ok}
    assert "transport reduces to stiffness at psi=0" in failed


def test_run_verify_flags_corrupted_voxel_measures(monkeypatch):
    real = vq.dual.barycentric_dual

    def corrupted(mesh):
        d = real(mesh)
        return vq.DualMesh(d.mesh, d.piece_node, d.piece_element, d.piece_polys,
                           d.piece_measure, d.voxel_measure * 1.01)

    monkeypatch.setattr(vq.dual, "barycentric_dual", corrupted)
    status, checks = vq.run_verify()
    assert status == 1
    failed = {name for name, ok, _ in checks if not ok}
    assert "dual-mesh measure identities" in failed


def test_cli_verify(capsys):
    assert cli.main(["verify"]) == 0
    out = capsys.readouterr().out
    assert out.count("PASS") == 10 and "FAIL" not in out


def test_cli_convergence_writes_csv_and_figure(tmp_path, capsys):
    out = tmp_path / "conv.csv"
    rc = cli.main(["convergence", "--rings", "1,2", "--method", "lump",
                   "--out", str(out)])
    assert rc == 0
    stdout = capsys.readouterr().out
    assert "rate[lump]" in stdout and f"wrote {out}" in stdout
    assert out.exists()
    png = tmp_path / "conv.png"
    assert png.exists() and png.stat().st_size > 0

    out2 = tmp_path / "nofig.csv"
    rc = cli.main(["convergence", "--rings", "1,2", "--method", "lump",
                   "--out", str(out2), "--no-figure"])
    assert rc == 0
    capsys.readouterr()
    assert not (tmp_path / "nofig.png").exists()


def test_cli_dump_matrix(tmp_path, capsys):
    out = tmp_path / "c.csv"
    dump = tmp_path / "mat.txt"
    rc = cli.main(["convergence", "--rings", "1,2", "--method", "lump",
                   "--out", str(out), "--dump-matrix", str(dump), "--no-figure"])
    assert rc == 0
    capsys.readouterr()
    lines = dump.read_text().splitlines()
    assert len(lines) > 0
    row, col, val = lines[0].split()
    int(row), int(col), float(val)


def test_cli_bad_configuration_exits_2(tmp_path, capsys):
    assert cli.main(["convergence", "--rings", "2,1", "--out", str(tmp_path / "x.csv")]) == 2
    assert "error:" in capsys.readouterr().err
    assert cli.main(["convergence", "--rings", "abc", "--out", str(tmp_path / "y.csv")]) == 2
    assert "bad ring list" in capsys.readouterr().err


def test_cli_solver_failure_exits_3(tmp_path, capsys, monkeypatch):
    def broken(system, tol=1e-10, max_iter=None):
        raise RuntimeError("solver failed to converge: best relative residual 1.0e+00")

    monkeypatch.setattr(vq.solver, "solve", broken)
    rc = cli.main(["convergence", "--rings", "1,2", "--method", "lump",
                   "--out", str(tmp_path / "z.csv"), "--no-figure"])
    assert rc == 3
    err = capsys.readouterr().err
    # the failure names the offending resolution
    assert "solver failed to converge" in err and "rings=1" in err


def test_cli_reference_and_solve(tmp_path, capsys):
    ref = tmp_path / "ref.csv"
    assert cli.main(["reference", "--out", str(ref), "--n-elements", "50"]) == 0
    lines = ref.read_text().splitlines()
    assert lines[0] == "r,u"
    assert len(lines) >= 52  # 50 elements plus the pinned interface node

    solp = tmp_path / "sol.csv"
    assert cli.main(["solve", "--rings", "2", "--out", str(solp), "--no-figure"]) == 0
    stdout = capsys.readouterr().out
    assert "19 nodes" in stdout
    rows = solp.read_text().splitlines()
    assert rows[0] == "x,y,u"
    assert len(rows) == 20
    # the reaction depresses the solution below 1/lambda somewhere inside K
    u = np.array([float(r.split(",")[2]) for r in rows[1:]])
    assert np.all(u > 0)


def test_cli_default_radii():
    p = cli.build_parser()
    assert p.parse_args(["convergence"]).rstar == pytest.approx(np.pi / 5)
    assert p.parse_args(["local-orders"]).rstar == pytest.approx(1.0 / np.sqrt(3.0))
