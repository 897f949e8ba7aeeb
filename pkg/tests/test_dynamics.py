"""Leapfrog time stepping: stability bounds, snapshots, energy, purity."""

import numpy as np
import pytest
from scipy import sparse

from lodwave import assembly, coeff, dynamics, grid, sparsela

import oracles


def test_cfl_dense_oracle():
    ok, detail = oracles.check_cfl_dense_eigen()
    assert ok, detail


def test_scalar_recurrence_oracle():
    ok, detail = oracles.check_scalar_recurrence()
    assert ok, detail


def test_consistent_dense_oracle():
    ok, detail = oracles.check_consistent_dense_steps()
    assert ok, detail


def test_energy_conservation_oracle():
    ok, detail = oracles.check_energy_conservation()
    assert ok, detail


def test_instability_oracle():
    ok, detail = oracles.check_instability_detection()
    assert ok, detail


def _small_system(k=3, seed=80):
    mesh = grid.build_level(k)
    alpha = coeff.random_field(min(k, 3), 1.0, 2.5, seed=seed)
    beta = coeff.random_field(min(k, 3), 0.5, 4.0, seed=seed + 1)
    K = assembly.assemble_stiffness(mesh, mesh, alpha)
    m = assembly.assemble_lumped_mass(mesh, mesh, beta)
    M = assembly.assemble_mass(mesh, mesh, beta)
    return mesh, K, m, M


def test_time_grid_validation():
    with pytest.raises(ValueError):
        dynamics.TimeGrid(t_final=1.0, n_steps=1)
    with pytest.raises(ValueError):
        dynamics.TimeGrid(t_final=0.0, n_steps=4)
    g = dynamics.TimeGrid(t_final=2.0, n_steps=8)
    assert g.dt == 0.25


def test_cfl_dt_scalar_case():
    # lambda = 4, delta = 0 gives dt_max = 1; one unit of time still takes 2 steps
    K = sparse.csr_matrix(np.array([[4.0]]))
    g = dynamics.cfl_dt(K, np.array([1.0]), delta=0.0, t_final=1.0)
    assert g.n_steps == 2


def test_cfl_dt_respects_bound():
    _, K, m, _ = _small_system()
    g = dynamics.cfl_dt(K, m, delta=0.1, t_final=1.0)
    lam = sparsela.lambda_max(K, 1.0 / m, tol=1e-10)
    assert g.dt ** 2 * lam <= 4.0 * (1.0 - 0.1) * (1.0 + 1e-9)
    # one step fewer would break the bound (when not pinned at the 2-step floor)
    if g.n_steps > 2:
        assert (g.t_final / (g.n_steps - 1)) ** 2 * lam > 4.0 * (1.0 - 0.1)


def test_cfl_dt_coefficient_doubling():
    # doubling the stiffness scales dt_max by 1/sqrt(2)
    _, K, m, _ = _small_system()
    g1 = dynamics.cfl_dt(K, m, delta=0.05, t_final=1000.0)
    g2 = dynamics.cfl_dt(sparse.csr_matrix(2.0 * K), m, delta=0.05, t_final=1000.0)
    ratio = g2.n_steps / g1.n_steps
    assert abs(ratio - np.sqrt(2.0)) <= 2e-3


def test_cfl_dt_validation():
    _, K, m, _ = _small_system()
    with pytest.raises(ValueError):
        dynamics.cfl_dt(K, m, delta=1.0, t_final=1.0)
    with pytest.raises(ValueError):
        dynamics.cfl_dt(K, m, delta=-0.1, t_final=1.0)


def test_zero_forcing_stays_zero():
    _, K, m, M = _small_system()
    g = dynamics.cfl_dt(K, m, delta=0.1, t_final=0.5)
    for traj in (dynamics.leapfrog_lumped(K, m, None, g),
                 dynamics.leapfrog_consistent(M, K, None, g)):
        assert len(traj.snapshots) == 1
        assert np.all(traj.snapshots[-1].u == 0.0)


def test_lumped_mass_validation():
    _, K, m, _ = _small_system()
    g = dynamics.TimeGrid(t_final=1.0, n_steps=100)
    bad = m.copy()
    bad[0] = 0.0
    with pytest.raises(ValueError):
        dynamics.leapfrog_lumped(K, bad, None, g)


def test_lumped_path_never_solves(monkeypatch):
    # the explicit scheme must not be able to reach a linear solver
    mesh, K, m, M = _small_system()
    g = dynamics.cfl_dt(K, m, delta=0.1, t_final=0.5)
    forcing = dynamics.SeparableForcing(
        vec=np.ones(K.shape[0]), time_fn=lambda t: np.cos(t))

    def boom(*a, **kw):
        raise AssertionError("cg_solve reached from the lumped path")

    monkeypatch.setattr(dynamics, "cg_solve", boom)
    traj = dynamics.leapfrog_lumped(K, m, forcing, g)
    assert traj.cg_iterations == 0
    with pytest.raises(AssertionError):
        dynamics.leapfrog_consistent(M, K, forcing, g)


def test_consistent_counts_iterations():
    _, K, m, M = _small_system()
    g = dynamics.cfl_dt(K, m, delta=0.1, t_final=0.5)
    forcing = dynamics.SeparableForcing(
        vec=np.ones(K.shape[0]), time_fn=lambda t: np.sin(3 * t))
    traj = dynamics.leapfrog_consistent(M, K, forcing, g)
    assert traj.cg_iterations > 0


def test_diagonal_mass_consistent_matches_lumped():
    # the lumped path takes acceleration forcing, the consistent path takes the
    # mass-integrated rhs: with M = diag(m) they integrate the same equation
    _, K, m, _ = _small_system()
    g = dynamics.cfl_dt(K, m, delta=0.1, t_final=0.5)
    vec = np.linspace(0.5, 1.0, K.shape[0])
    fn = lambda t: np.cos(2 * t)
    a = dynamics.leapfrog_lumped(
        K, m, dynamics.SeparableForcing(vec=vec, time_fn=fn), g)
    b = dynamics.leapfrog_consistent(
        sparse.diags(m).tocsr(), K,
        dynamics.SeparableForcing(vec=m * vec, time_fn=fn), g, tol=1e-12)
    ua, ub = a.snapshots[-1].u, b.snapshots[-1].u
    assert np.abs(ua - ub).max() <= 1e-8 * max(np.abs(ua).max(), 1e-30)


def test_snapshot_plan_and_partner_offset():
    _, K, m, _ = _small_system()
    g = dynamics.cfl_dt(K, m, delta=0.1, t_final=0.5)
    n = g.n_steps
    forcing = dynamics.SeparableForcing(
        vec=np.ones(K.shape[0]), time_fn=lambda t: np.sin(t))
    full = dynamics.leapfrog_lumped(K, m, forcing, g,
                                    snapshot_steps=range(1, n + 1))
    states = {s.step: s.u for s in full.snapshots}
    states[0] = np.zeros(K.shape[0])
    off = 3
    steps = sorted({off, max(off + 1, n // 2), n})
    some = dynamics.leapfrog_lumped(K, m, forcing, g,
                                    snapshot_steps=steps,
                                    partner_offset=off)
    for snap in some.snapshots:
        np.testing.assert_array_equal(snap.u, states[snap.step])
        np.testing.assert_array_equal(snap.u_prev, states[snap.step - off])
        assert snap.t == snap.step * g.dt


def test_snapshot_plan_validation():
    _, K, m, _ = _small_system()
    g = dynamics.TimeGrid(t_final=1.0, n_steps=50)
    for bad in ([0], [51], [1]):
        with pytest.raises(ValueError):
            dynamics.leapfrog_lumped(K, m, None, g, snapshot_steps=bad,
                                     partner_offset=2, check_cfl=False)


def test_observer_sees_stored_snapshots():
    _, K, m, _ = _small_system()
    g = dynamics.cfl_dt(K, m, delta=0.1, t_final=0.5)
    forcing = dynamics.SeparableForcing(
        vec=np.ones(K.shape[0]), time_fn=lambda t: np.sin(t))
    seen = []
    steps = sorted({2, g.n_steps // 2, g.n_steps})
    traj = dynamics.leapfrog_lumped(K, m, forcing, g, snapshot_steps=steps,
                                    observer=lambda s, t, u: seen.append((s, t, u.copy())))
    assert [s for s, _, _ in seen] == steps
    for (s, t, u), snap in zip(seen, traj.snapshots):
        assert s == snap.step and t == snap.t
        np.testing.assert_array_equal(u, snap.u)


def test_time_reversal_symmetry():
    # running the recursion backwards from the end returns to the start
    _, K, m, _ = _small_system()
    g = dynamics.cfl_dt(K, m, delta=0.1, t_final=0.5)
    n, dt = g.n_steps, g.dt
    rng = np.random.default_rng(81)
    v = rng.standard_normal(K.shape[0])
    traj = dynamics.leapfrog_lumped(K, m, None, g, start_state=v,
                                    snapshot_steps=[n - 1, n])
    u, u_prev = traj.snapshots[0].u.copy(), traj.snapshots[1].u.copy()
    for _ in range(n - 2):  # backwards to step 1
        u, u_prev = 2.0 * u - u_prev - dt * dt * ((K @ u) / m), u
    assert np.abs(u - v).max() <= 1e-10 * np.abs(v).max()
    u, u_prev = 2.0 * u - u_prev - dt * dt * ((K @ u) / m), u
    assert np.abs(u).max() <= 1e-10 * np.abs(v).max()


def test_energy_log_conserved_and_nonnegative():
    _, K, m, _ = _small_system()
    lam = sparsela.lambda_max(K, 1.0 / m, tol=1e-10)
    # right at the usable edge of the stability interval
    dt = 0.999 * 2.0 / np.sqrt(lam)
    n = max(2, int(np.ceil(0.5 / dt)))
    g = dynamics.TimeGrid(t_final=n * dt, n_steps=n)
    v = np.random.default_rng(82).standard_normal(K.shape[0])
    traj = dynamics.leapfrog_lumped(K, m, None, g, start_state=v,
                                    track_energy=True)
    e = traj.energies
    assert e.shape == (n,)
    assert e.min() >= 0.0
    assert np.abs(e - e[0]).max() <= 1e-11 * abs(e[0])


def test_discrete_energy_function_matches_log():
    _, K, m, _ = _small_system()
    g = dynamics.cfl_dt(K, m, delta=0.1, t_final=0.5)
    v = np.random.default_rng(83).standard_normal(K.shape[0])
    traj = dynamics.leapfrog_lumped(K, m, None, g, start_state=v,
                                    track_energy=True,
                                    snapshot_steps=[g.n_steps])
    snap = traj.snapshots[-1]
    e = dynamics.discrete_energy(snap.u_prev, snap.u, g.dt, K, m)
    assert abs(e - traj.energies[-1]) <= 1e-12 * abs(e)
    z = np.zeros(K.shape[0])
    assert dynamics.discrete_energy(z, z, g.dt, K, m) == 0.0


def test_cfl_violation_raises():
    _, K, m, _ = _small_system()
    lam = sparsela.lambda_max(K, 1.0 / m, tol=1e-10)
    dt = 1.05 * 2.0 / np.sqrt(lam)
    n = max(2, int(np.ceil(0.5 / dt)))
    g = dynamics.TimeGrid(t_final=n * dt, n_steps=n)
    with pytest.raises(dynamics.CFLViolationError):
        dynamics.leapfrog_lumped(K, m, None, g)


def test_instability_detected_past_bound():
    _, K, m, _ = _small_system()
    lam = sparsela.lambda_max(K, 1.0 / m, tol=1e-10)
    dt = 1.05 * 2.0 / np.sqrt(lam)
    g = dynamics.TimeGrid(t_final=400 * dt, n_steps=400)
    v = np.random.default_rng(84).standard_normal(K.shape[0])
    with pytest.warns(RuntimeWarning):
        with pytest.raises(dynamics.InstabilityError) as err:
            dynamics.leapfrog_lumped(K, m, None, g, start_state=v,
                                     allow_unstable=True)
    assert err.value.step > 1
    # skipping the pre-check entirely still trips the runtime detector
    with pytest.raises(dynamics.InstabilityError):
        dynamics.leapfrog_lumped(K, m, None, g, start_state=v, check_cfl=False)


def test_separable_forcing():
    f = dynamics.SeparableForcing(vec=np.array([1.0, 2.0]),
                                  time_fn=lambda t: 3.0 * t)
    np.testing.assert_allclose(f(2.0), [6.0, 12.0])
