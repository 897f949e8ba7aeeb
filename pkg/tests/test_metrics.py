"""Error functionals and observed convergence orders."""

import math

import numpy as np
import pytest

from lodwave import assembly, grid, metrics
from lodwave.dynamics import Snapshot, TimeGrid, WaveTrajectory

import oracles


def test_prolong_oracle():
    ok, detail = oracles.check_prolong_column_sum()
    assert ok, detail


def test_linf_h1_oracle():
    ok, detail = oracles.check_linf_h1_hand_case()
    assert ok, detail


def test_dt_l2_oracle():
    ok, detail = oracles.check_dt_l2_hand_case()
    assert ok, detail


def _snaps(mesh, vectors, dt=0.1, as_trajectory=False):
    snaps = [Snapshot(step=i + 1, t=(i + 1) * dt, u=u, u_prev=up)
             for i, (u, up) in enumerate(vectors)]
    if as_trajectory:
        return WaveTrajectory(grid=TimeGrid(t_final=dt * 8, n_steps=8),
                              partner_offset=1, snapshots=snaps)
    return snaps


def test_identical_trajectories_zero_error():
    mesh = grid.build_level(3)
    ns = assembly.norms(mesh)
    rng = np.random.default_rng(90)
    vecs = [(rng.standard_normal(mesh.n_interior),
             rng.standard_normal(mesh.n_interior)) for _ in range(3)]
    import scipy.sparse as sp
    I = sp.identity(mesh.n_interior, format="csr")
    snaps = _snaps(mesh, vecs)
    pro = metrics.prolong(I, _snaps(mesh, vecs, as_trajectory=True))
    ref = [(s.step, s.t, s.u, s.u_prev) for s in snaps]
    assert metrics.linf_h1_error(ref, pro, ns) == 0.0
    assert metrics.dt_l2_error(ref, pro, I, ns, dt=0.1) == 0.0


def test_scaled_trajectory_relative_one():
    # u = 2 u_ref makes the relative trajectory error exactly 1
    mesh = grid.build_level(3)
    ns = assembly.norms(mesh)
    rng = np.random.default_rng(91)
    import scipy.sparse as sp
    I = sp.identity(mesh.n_interior, format="csr")
    vecs = [(rng.standard_normal(mesh.n_interior), np.zeros(mesh.n_interior))
            for _ in range(3)]
    ref = [(i + 1, (i + 1) * 0.1, u, up) for i, (u, up) in enumerate(vecs)]
    pro = [(i + 1, (i + 1) * 0.1, 2.0 * u, 2.0 * up)
           for i, (u, up) in enumerate(vecs)]
    err = metrics.linf_h1_error(ref, pro, ns)
    assert abs(err - 1.0) <= 1e-13


def test_constant_difference_kills_derivative_error():
    mesh = grid.build_level(3)
    ns = assembly.norms(mesh)
    rng = np.random.default_rng(92)
    import scipy.sparse as sp
    I = sp.identity(mesh.n_interior, format="csr")
    shift = rng.standard_normal(mesh.n_interior)
    vecs = [(rng.standard_normal(mesh.n_interior),) * 2 for _ in range(3)]
    ref = [(i + 1, (i + 1) * 0.1, u, up) for i, (u, up) in enumerate(vecs)]
    pro = [(i + 1, (i + 1) * 0.1, u + shift, up + shift)
           for i, (u, up) in enumerate(vecs)]
    assert metrics.dt_l2_error(ref, pro, I, ns, dt=0.1) <= 1e-14


def test_zero_reference_rejected():
    mesh = grid.build_level(2)
    ns = assembly.norms(mesh)
    z = np.zeros(mesh.n_interior)
    ref = [(1, 0.1, z, z)]
    with pytest.raises(ValueError, match="identically zero"):
        metrics.linf_h1_error(ref, ref, ns)


def test_misaligned_snapshots_rejected():
    mesh = grid.build_level(2)
    ns = assembly.norms(mesh)
    v = np.ones(mesh.n_interior)
    a = [(1, 0.1, v, v), (2, 0.2, v, v)]
    with pytest.raises(ValueError, match="count"):
        metrics.linf_h1_error(a, a[:1], ns)
    b = [(1, 0.1, v, v), (2, 0.3, v, v)]
    with pytest.raises(ValueError, match="times"):
        metrics.linf_h1_error(a, b, ns)


def test_eoc_values():
    assert metrics.eoc(0.04, 0.01) == 2.0
    assert round(metrics.eoc(0.135855516467263, 0.0343928535767906), 2) == 1.98
    assert round(metrics.eoc(0.00448530080021982, 0.00122096084832821), 2) == 1.88
    assert metrics.eoc(0.5, 0.5) == 0.0


def test_eoc_rejects_nonpositive():
    with pytest.raises(ValueError):
        metrics.eoc(0.0, 0.1)
    with pytest.raises(ValueError):
        metrics.eoc(0.1, -0.1)


def test_error_record_h():
    rec = metrics.ErrorRecord(example="custom", variant="fem", ell=None,
                              h_exponent=3, rel_err_h1=0.1, err_dt_l2=0.1)
    assert rec.H == 0.125


def test_attach_eoc_along_curves():
    recs = []
    for k, e in [(1, 0.4), (2, 0.1), (3, 0.025)]:
        recs.append(metrics.ErrorRecord(example="x", variant="a", ell=4,
                                        h_exponent=k, rel_err_h1=e, err_dt_l2=e))
    # second curve with a gap in exponents: no EOC across the gap
    for k, e in [(1, 0.4), (3, 0.1)]:
        recs.append(metrics.ErrorRecord(example="x", variant="b", ell=None,
                                        h_exponent=k, rel_err_h1=e, err_dt_l2=e))
    metrics.attach_eoc(recs)
    a = [r for r in recs if r.variant == "a"]
    assert a[0].eoc is None
    assert abs(a[1].eoc - 2.0) <= 1e-12
    assert abs(a[2].eoc - 2.0) <= 1e-12
    b = [r for r in recs if r.variant == "b"]
    assert b[0].eoc is None and b[1].eoc is None


def test_norm_symmetry_of_error():
    # swapping which trajectory is "computed" only changes the denominator
    mesh = grid.build_level(3)
    ns = assembly.norms(mesh)
    rng = np.random.default_rng(93)
    u = [(1, 0.1, rng.standard_normal(mesh.n_interior), np.zeros(mesh.n_interior))]
    w = [(1, 0.1, rng.standard_normal(mesh.n_interior), np.zeros(mesh.n_interior))]
    e_uw = metrics.linf_h1_error(u, w, ns)
    e_wu = metrics.linf_h1_error(w, u, ns)
    num = ns.h1(u[0][2] - w[0][2])
    assert abs(e_uw * ns.h1(u[0][2]) - num) <= 1e-12 * num
    assert abs(e_wu * ns.h1(w[0][2]) - num) <= 1e-12 * num
