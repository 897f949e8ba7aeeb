"""Explicit leapfrog time stepping for the second-order wave system.

Lumped path: u_next = -u_prev + 2 u + dt^2 (F(t_n) - m^-1 K u). One sparse
matvec, one diagonal scaling and vector updates per step -- no linear solver
is reachable from it. Consistent path: the mass matrix is inverted each step
by CG. Both start from homogeneous data u^0 = u^1 = 0 unless a start state is
injected (used by stability probes).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .sparsela import cg_solve, gershgorin_upper, lambda_max

BLOWUP_FACTOR = 1e12


class InstabilityError(RuntimeError):
    """Raised when the solution magnitude explodes past the forcing scale."""

    def __init__(self, step, magnitude, scale):
        super().__init__(
            f"instability detected at step {step}: |u| = {magnitude:.3e} "
            f"exceeds {BLOWUP_FACTOR:.0e} x data scale {scale:.3e}")
        self.step = step


class CFLViolationError(RuntimeError):
    pass


@dataclass(frozen=True)
class TimeGrid:
    t_final: float
    n_steps: int

    def __post_init__(self):
        if self.n_steps < 2:
            raise ValueError(f"need at least 2 steps, got {self.n_steps}")
        if self.t_final <= 0.0:
            raise ValueError(f"final time must be positive, got {self.t_final}")

    @property
    def dt(self) -> float:
        return self.t_final / self.n_steps


@dataclass(frozen=True)
class Snapshot:
    step: int
    t: float
    u: np.ndarray = field(repr=False)
    u_prev: np.ndarray = field(repr=False)   # state partner_offset steps earlier


@dataclass
class WaveTrajectory:
    grid: TimeGrid
    partner_offset: int
    snapshots: list
    tag: str = ""
    energies: np.ndarray | None = None
    cg_iterations: int = 0


@dataclass(frozen=True)
class SeparableForcing:
    """F(t) = vec * time_fn(t); keeps per-step forcing cost at O(n)."""

    vec: np.ndarray
    time_fn: object

    def __call__(self, t):
        return self.vec * self.time_fn(t)


def cfl_dt(K, m, delta: float, t_final: float) -> TimeGrid:
    """Largest uniform grid with dt <= 2 sqrt(1-delta) / sqrt(lambda_max(m^-1 K)).

    At least two steps are always taken.
    """
    if not (0.0 <= delta < 1.0):
        raise ValueError(f"stability margin delta must be in [0, 1), got {delta}")
    lam = lambda_max(K, 1.0 / np.asarray(m, dtype=np.float64))
    if lam <= 0.0:
        raise ValueError("operator has non-positive spectrum; cannot set a step")
    dt_max = 2.0 * math.sqrt(1.0 - delta) / math.sqrt(lam)
    n = max(2, math.ceil(t_final / dt_max - 1e-12))
    while t_final / n > dt_max * (1.0 + 1e-12):
        n += 1
    return TimeGrid(t_final=t_final, n_steps=n)


def _check_cfl(K, m, dt, allow_unstable):
    minv = 1.0 / np.asarray(m, dtype=np.float64)
    bound = gershgorin_upper(K, minv)
    if dt * dt * bound <= 4.0:
        return
    lam = lambda_max(K, minv)
    if dt * dt * lam <= 4.0 * (1.0 + 1e-9):
        return
    msg = (f"time step {dt:.6e} violates the stability bound "
           f"(dt^2 lambda = {dt * dt * lam:.4f} > 4)")
    if allow_unstable:
        warnings.warn(msg + "; proceeding as requested", RuntimeWarning)
    else:
        raise CFLViolationError(msg)


def _snapshot_plan(snapshot_steps, n_steps, partner_offset):
    if snapshot_steps is None:
        plan = {n_steps}
    else:
        plan = {int(s) for s in snapshot_steps}
    for s in plan:
        if s < partner_offset or s > n_steps:
            raise ValueError(f"snapshot step {s} outside [{partner_offset}, {n_steps}]")
    return plan


def _run_leapfrog(apply_accel, n, grid, forcing, snapshot_steps, partner_offset,
                  start_state, track_energy, energy_fn, observer=None):
    """Shared recursion: apply_accel(u, t) -> (acceleration, K u or None)."""
    dt = grid.dt
    nt = grid.n_steps
    plan = _snapshot_plan(snapshot_steps, nt, partner_offset)

    u_prev = np.zeros(n)
    u = np.zeros(n) if start_state is None else np.array(start_state, dtype=np.float64)
    scale = float(np.abs(u).max())

    history = {0: u_prev, 1: u} if partner_offset > 1 else {}
    snaps = []
    if 1 in plan and partner_offset == 1:
        snaps.append(Snapshot(step=1, t=dt, u=u, u_prev=u_prev))
        if observer is not None:
            observer(1, dt, u)
    energies = [] if track_energy else None

    for step in range(1, nt):
        t = step * dt
        f = forcing(t) if forcing is not None else None
        if f is not None:
            fmax = float(np.abs(f).max())
            if fmax > scale:
                scale = fmax
        acc, Ku = apply_accel(u, f)
        if track_energy:
            energies.append(energy_fn(u_prev, u, Ku))
        u_next = 2.0 * u - u_prev + (dt * dt) * acc
        u_prev, u = u, u_next

        mag = float(np.abs(u).max())
        if scale > 0.0 and mag > BLOWUP_FACTOR * scale:
            raise InstabilityError(step + 1, mag, scale)

        now = step + 1
        if partner_offset > 1:
            history[now] = u
            history.pop(now - partner_offset - 1, None)
        if now in plan:
            partner = history[now - partner_offset] if partner_offset > 1 else u_prev
            snaps.append(Snapshot(step=now, t=now * dt, u=u, u_prev=partner))
            if observer is not None:
                observer(now, now * dt, u)

    if track_energy:
        acc, Ku = apply_accel(u, None)
        energies.append(energy_fn(u_prev, u, Ku))
        energies = np.array(energies)

    snaps.sort(key=lambda s: s.step)
    return snaps, energies


def leapfrog_lumped(K, m, forcing, grid: TimeGrid, snapshot_steps=None,
                    partner_offset: int = 1, start_state=None,
                    track_energy: bool = False, allow_unstable: bool = False,
                    check_cfl: bool = True, observer=None,
                    tag: str = "") -> WaveTrajectory:
    """Fully explicit leapfrog with the lumped (diagonal) mass.

    ``forcing(t)`` must return the already-projected right-hand side vector
    (interpolation of f at the coarse level, nodal values at the fine level).
    Snapshots store (u at step s, u at step s - partner_offset).
    """
    m = np.asarray(m, dtype=np.float64)
    if np.any(m <= 0.0):
        raise ValueError("lumped mass entries must be strictly positive")
    if check_cfl:
        _check_cfl(K, m, grid.dt, allow_unstable)
    minv = 1.0 / m

    def accel(u, f):
        Ku = K @ u
        a = -(minv * Ku)
        if f is not None:
            a += f
        return a, Ku

    def energy(u_prev, u, Ku):
        du = (u - u_prev) / grid.dt
        return 0.5 * (m @ (du * du)) + 0.5 * (u_prev @ Ku)

    snaps, energies = _run_leapfrog(accel, K.shape[0], grid, forcing,
                                    snapshot_steps, partner_offset, start_state,
                                    track_energy, energy, observer)
    return WaveTrajectory(grid=grid, partner_offset=partner_offset,
                          snapshots=snaps, tag=tag, energies=energies,
                          cg_iterations=0)


def leapfrog_consistent(M, K, forcing, grid: TimeGrid, tol: float = 1e-8,
                        diag_precond: bool = False,
                        snapshot_steps=None, partner_offset: int = 1,
                        start_state=None, track_energy: bool = False,
                        m_energy=None, observer=None,
                        tag: str = "") -> WaveTrajectory:
    """Leapfrog with the consistent mass; every step solves M a = F - K u by CG.

    The trajectory records the cumulative CG iteration count. ``forcing(t)``
    must return the L2-projected right-hand side (integral of f against the
    trial basis). Plain CG by default; ``diag_precond`` enables Jacobi
    scaling, worthwhile when the mass diagonal is strongly heterogeneous.
    """
    n = K.shape[0]
    total_iters = 0

    def accel(u, f):
        Ku = K @ u
        rhs = -Ku if f is None else f - Ku
        nonlocal total_iters
        a, it = cg_solve(M, rhs, tol=tol, diag_precond=diag_precond)
        total_iters += it
        return a, Ku

    me = np.asarray(m_energy, dtype=np.float64) if m_energy is not None else None

    def energy(u_prev, u, Ku):
        du = (u - u_prev) / grid.dt
        kinetic = me @ (du * du) if me is not None else du @ (M @ du)
        return 0.5 * kinetic + 0.5 * (u_prev @ Ku)

    snaps, energies = _run_leapfrog(accel, n, grid, forcing, snapshot_steps,
                                    partner_offset, start_state, track_energy,
                                    energy, observer)
    return WaveTrajectory(grid=grid, partner_offset=partner_offset,
                          snapshots=snaps, tag=tag, energies=energies,
                          cg_iterations=total_iters)


def discrete_energy(u_prev, u, dt, K, m) -> float:
    """1/2 ||D u||_m^2 + 1/2 u_prev' K u; non-negative under the CFL bound."""
    du = (u - u_prev) / dt
    m = np.asarray(m, dtype=np.float64)
    return float(0.5 * (m @ (du * du)) + 0.5 * (u_prev @ (K @ u)))
