"""Experiment harness: convergence sweeps, ablations, timing and reports.

Three built-in experiments share one engine:

* example1 -- i.i.d. uniform coefficients (alpha in [1, 2.5], beta in
  [0.5, 4]), forcing sin(pi x) sin(pi y) cos(pi t / 2), dt = 0.25 h.
* example2 -- structured high-contrast fields in [1, 18], forcing
  sin(3 pi x) y (1 - y) t^2, dt = 0.15 H.
* example3 -- the example1 fields rescaled to [0.01, 100], dt = 0.01 H.

Every run compares coarse solvers against a fine reference trajectory on the
same snapshot times and reports max-in-time relative H1 errors, discrete
time-derivative L2 errors, observed orders, and wall-clock splits.
"""

from __future__ import annotations

import concurrent.futures
import csv
import gc
import io
import math
import os
import sys
import time
from dataclasses import dataclass, field, fields, replace

import numpy as np

from . import assembly, coeff, dynamics, grid, interp, lod, metrics
from .sparsela import lambda_max

KNOWN_VARIANTS = ("mllod_weighted", "lod_weighted", "mllod_naive",
                  "lod_naive", "fem")
EXAMPLES = ("example1", "example2", "example3", "custom")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    example: str = "custom"
    hmin: int = 1                      # coarsest level exponent (H = 2^-hmin)
    hmax: int = 6                      # finest level exponent
    ell: tuple = (2, 3, 4)
    naive_ell: int = 4
    fine: int = 7
    eps: int = 6
    seed: int = 2201
    variants: tuple = KNOWN_VARIANTS
    alpha_file: str = ""
    beta_file: str = ""
    out: str = ""
    deterministic: bool = True
    threads: int = 1
    snapshot_stride: int = 0           # 0 = auto (~128 evaluation times)
    t_final: float = 1.0
    dt_factor: float = 0.25
    dt_base: str = "h"                 # "h": fine step rule, "H": coarse rule
    forcing: str = "ex1"
    reference_mass: str = "lumped"
    reference_delta: float = 0.1
    alpha_lo: float = 1.0
    alpha_hi: float = 2.5
    beta_lo: float = 0.5
    beta_hi: float = 4.0
    rescale_lo: float = 0.0            # > 0: rescale both fields to this range
    rescale_hi: float = 0.0
    timing_exponents: tuple = (4, 5, 6)
    timing_ell: int = 4
    with_timing: bool = False
    stability_probe: bool = False


def validate_config(cfg: ExperimentConfig) -> ExperimentConfig:
    if cfg.example not in EXAMPLES:
        raise ConfigError(f"unknown example {cfg.example!r}")
    if not (1 <= cfg.hmin <= cfg.hmax <= cfg.fine <= grid.MAX_EXPONENT):
        raise ConfigError(
            f"need 1 <= hmin <= hmax <= fine <= {grid.MAX_EXPONENT}, got "
            f"hmin={cfg.hmin} hmax={cfg.hmax} fine={cfg.fine}")
    if cfg.eps > cfg.fine:
        raise ConfigError(f"fine level {cfg.fine} does not resolve eps={cfg.eps}")
    if not cfg.ell or any(l < 1 for l in cfg.ell):
        raise ConfigError(f"localization radii must be >= 1, got {cfg.ell}")
    if cfg.naive_ell < 1 or cfg.timing_ell < 1:
        raise ConfigError("naive_ell and timing_ell must be >= 1")
    if cfg.with_timing and any(not (1 <= k <= cfg.fine)
                               for k in cfg.timing_exponents):
        raise ConfigError(
            f"timing study levels {cfg.timing_exponents} must lie within "
            f"[1, fine={cfg.fine}]; lower them or disable the timing study")
    if not cfg.variants:
        raise ConfigError("at least one variant is required")
    bad = [v for v in cfg.variants if v not in KNOWN_VARIANTS]
    if bad:
        raise ConfigError(f"unknown variants {bad}; known: {list(KNOWN_VARIANTS)}")
    if cfg.dt_base not in ("h", "H"):
        raise ConfigError(f"dt_base must be 'h' or 'H', got {cfg.dt_base!r}")
    if cfg.dt_factor <= 0.0 or cfg.t_final <= 0.0:
        raise ConfigError("dt_factor and t_final must be positive")
    if cfg.forcing not in ("ex1", "ex2"):
        raise ConfigError(f"unknown forcing {cfg.forcing!r}")
    if cfg.reference_mass not in ("lumped", "consistent"):
        raise ConfigError(f"reference_mass must be lumped|consistent")
    if not (0.0 <= cfg.reference_delta < 1.0):
        raise ConfigError(f"reference_delta must be in [0, 1), got {cfg.reference_delta}")
    if not (0.0 < cfg.alpha_lo <= cfg.alpha_hi) or not (0.0 < cfg.beta_lo <= cfg.beta_hi):
        raise ConfigError("coefficient ranges must satisfy 0 < lo <= hi")
    if cfg.rescale_lo < 0.0 or (cfg.rescale_lo > 0.0 and cfg.rescale_hi < cfg.rescale_lo):
        raise ConfigError("rescale range must satisfy 0 < lo <= hi (or lo = 0 to disable)")
    if cfg.threads < 1:
        raise ConfigError("threads must be >= 1")
    if cfg.snapshot_stride < 0:
        raise ConfigError("snapshot_stride must be >= 0")
    return cfg


def example1_config(**over) -> ExperimentConfig:
    base = dict(example="example1", dt_factor=0.25, dt_base="h", forcing="ex1",
                alpha_lo=1.0, alpha_hi=2.5, beta_lo=0.5, beta_hi=4.0,
                with_timing=True)
    base.update(over)
    return validate_config(ExperimentConfig(**base))


def example2_config(**over) -> ExperimentConfig:
    base = dict(example="example2", dt_factor=0.15, dt_base="H", forcing="ex2",
                alpha_lo=1.0, alpha_hi=18.0, beta_lo=1.0, beta_hi=18.0,
                variants=("mllod_weighted", "fem"))
    base.update(over)
    return validate_config(ExperimentConfig(**base))


def example3_config(**over) -> ExperimentConfig:
    # At contrast 1e4 the nodally lumped fine reference is itself polluted
    # (the lumped and consistent fine trajectories differ by ~0.25 in relative
    # H1 at this resolution), so the preset compares against the consistent-mass
    # reference by default.
    base = dict(example="example3", dt_factor=0.01, dt_base="H", forcing="ex1",
                alpha_lo=1.0, alpha_hi=2.5, beta_lo=0.5, beta_hi=4.0,
                rescale_lo=0.01, rescale_hi=100.0, reference_mass="consistent")
    base.update(over)
    return validate_config(ExperimentConfig(**base))


def _example_fields(cfg: ExperimentConfig):
    if cfg.alpha_file:
        alpha = coeff.load_field(cfg.alpha_file)
    elif cfg.example == "example2":
        alpha = coeff.structured_field(cfg.eps, "checkerboard", lo=cfg.alpha_lo,
                                       hi=cfg.alpha_hi, block=8)
    else:
        alpha = coeff.random_field(cfg.eps, cfg.alpha_lo, cfg.alpha_hi, cfg.seed)
    if cfg.beta_file:
        beta = coeff.load_field(cfg.beta_file)
    elif cfg.example == "example2":
        beta = coeff.structured_field(cfg.eps, "stripes", lo=cfg.beta_lo,
                                      hi=cfg.beta_hi, width=4)
    else:
        beta = coeff.random_field(cfg.eps, cfg.beta_lo, cfg.beta_hi, cfg.seed + 1)
    if cfg.rescale_lo > 0.0:
        alpha = coeff.rescale_field(alpha, cfg.rescale_lo, cfg.rescale_hi)
        beta = coeff.rescale_field(beta, cfg.rescale_lo, cfg.rescale_hi)
    return alpha, beta


def _forcing_parts(cfg: ExperimentConfig):
    if cfg.forcing == "ex1":
        g = lambda x, y, t=0.0: np.sin(np.pi * x) * np.sin(np.pi * y)
        s = lambda t: math.cos(0.5 * math.pi * t)
    else:  # ex2
        g = lambda x, y, t=0.0: np.sin(3 * np.pi * x) * y * (1.0 - y)
        s = lambda t: t * t
    return g, s


@dataclass
class TimingRow:
    h_exponent: int
    offline_s: float
    online_lumped_s: float
    online_consistent_s: float
    speedup: float
    lumped_iterations: int
    consistent_iterations: int


@dataclass
class ExperimentReport:
    example: str
    config: ExperimentConfig
    records: list
    timing_rows: list = field(default_factory=list)
    row_failures: list = field(default_factory=list)
    alpha_digest: str = ""
    beta_digest: str = ""
    environment: str = ""
    artifacts: dict = field(default_factory=dict)


def _environment_note() -> str:
    import scipy
    return (f"python {sys.version.split()[0]}, numpy {np.__version__}, "
            f"scipy {scipy.__version__}")


class _Engine:
    """Shared fine-level state for one report."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.fine = grid.build_level(cfg.fine)
        self.alpha, self.beta = _example_fields(cfg)
        self.A_fine = assembly.assemble_stiffness(self.fine, self.fine, self.alpha)
        self.m_fine = assembly.assemble_lumped_mass(self.fine, self.fine, self.beta)
        self.needs_consistent = (cfg.reference_mass == "consistent"
                                 or any(v.startswith("lod_") for v in cfg.variants)
                                 or cfg.with_timing)
        self.M_fine = (assembly.assemble_mass(self.fine, self.fine, self.beta)
                       if self.needs_consistent else None)
        self.fine_norms = assembly.norms(self.fine)
        g, self.time_fn = _forcing_parts(cfg)
        self.g_fn = g
        self.g_fine = assembly.nodal_function(self.fine, g)
        self.lam_fine = lambda_max(self.A_fine, 1.0 / self.m_fine)
        if cfg.reference_mass == "consistent":
            # certified lumping-equivalence bound: m <= 9 M in quadratic form
            self.lam_ref = 9.0 * self.lam_fine
        else:
            self.lam_ref = self.lam_fine
        self.dt_ref_stable = (2.0 * math.sqrt(1.0 - cfg.reference_delta)
                              / math.sqrt(self.lam_ref))
        self._references = {}
        self.probes = {}

    def steps_for(self, k: int) -> int:
        base = self.cfg.fine if self.cfg.dt_base == "h" else k
        dt_target = self.cfg.dt_factor * 2.0 ** (-base)
        return max(2, math.ceil(self.cfg.t_final / dt_target - 1e-12))

    def eval_steps(self, n_steps: int):
        stride = self.cfg.snapshot_stride or max(1, n_steps // 128)
        evals = set(range(stride, n_steps + 1, stride))
        evals.add(n_steps)
        return tuple(sorted(evals))

    def reference(self, n_steps: int, evals):
        dt_c = self.cfg.t_final / n_steps
        m_sub = max(1, math.ceil(dt_c / self.dt_ref_stable - 1e-12))
        key = (n_steps, m_sub, evals)
        if key in self._references:
            return self._references[key]
        ref_grid = dynamics.TimeGrid(self.cfg.t_final, n_steps * m_sub)
        snap_steps = tuple(s * m_sub for s in evals)
        if self.cfg.reference_mass == "lumped":
            forcing = dynamics.SeparableForcing(self.g_fine, self.time_fn)
            traj = dynamics.leapfrog_lumped(
                self.A_fine, self.m_fine, forcing, ref_grid,
                snapshot_steps=snap_steps, partner_offset=m_sub, tag="reference")
        else:
            forcing = dynamics.SeparableForcing(self.M_fine @ self.g_fine,
                                                self.time_fn)
            # Jacobi scaling: the fine beta diagonal spans the full contrast
            traj = dynamics.leapfrog_consistent(
                self.M_fine, self.A_fine, forcing, ref_grid, diag_precond=True,
                snapshot_steps=snap_steps, partner_offset=m_sub, tag="reference")
        snaps = [(s.step, s.t, s.u, s.u_prev) for s in traj.snapshots]
        self._references[key] = (snaps, ref_grid, m_sub)
        probe_key = ("reference", m_sub, n_steps)
        if self.cfg.stability_probe and probe_key not in self.probes:
            if self.cfg.reference_mass == "lumped":
                probe = _probe_energy(self.A_fine, self.m_fine, ref_grid)
            else:
                probe = _probe_energy(self.A_fine, self.M_fine, ref_grid,
                                      lumped=False)
            self.probes[probe_key] = probe
        return self._references[key]


def _probe_energy(K, m_or_M, run_grid, lumped=True, m_energy=None):
    rng = np.random.default_rng(77)
    n = K.shape[0]
    start = rng.standard_normal(n)
    if lumped:
        traj = dynamics.leapfrog_lumped(K, m_or_M, None, run_grid,
                                        start_state=start, track_energy=True,
                                        tag="probe")
    else:
        traj = dynamics.leapfrog_consistent(m_or_M, K, None, run_grid,
                                            diag_precond=True,
                                            start_state=start, track_energy=True,
                                            m_energy=m_energy, tag="probe")
    e = traj.energies
    return dict(n_steps=run_grid.n_steps, min_energy=float(e.min()),
                rel_drift=float(np.abs(e - e[0]).max() / max(abs(e[0]), 1e-300)))


def run_report(cfg: ExperimentConfig, progress=None) -> ExperimentReport:
    cfg = validate_config(cfg)
    say = progress if progress is not None else (lambda msg: None)
    eng = _Engine(cfg)
    records = []
    failures = []
    probes = {}

    # (mode, ell) pairs needed by the requested variants
    basis_keys = []
    if any(v in ("mllod_weighted", "lod_weighted") for v in cfg.variants):
        basis_keys += [("weighted", l) for l in cfg.ell]
    if any(v in ("mllod_naive", "lod_naive") for v in cfg.variants):
        basis_keys += [("naive", cfg.naive_ell)]

    for k in range(cfg.hmin, cfg.hmax + 1):
        coarse = grid.build_level(k)
        n_steps = eng.steps_for(k)
        run_grid = dynamics.TimeGrid(cfg.t_final, n_steps)
        evals = eng.eval_steps(n_steps)
        say(f"[{cfg.example}] H=2^-{k}: {n_steps} steps, "
            f"{len(evals)} snapshot times")
        ref_snaps, _, m_sub = eng.reference(n_steps, evals)

        op_w = interp.build_interpolator(coarse, eng.fine, eng.beta, "weighted")
        op_n = (interp.build_interpolator(coarse, eng.fine, eng.beta, "naive")
                if any(v.endswith("naive") for v in cfg.variants) else None)
        coarse_norms = assembly.norms(coarse)

        def finish_row(variant, ell, B, traj, offline_s, online_s):
            pro = [(s.step, s.t, B @ s.u, B @ s.u_prev) for s in traj.snapshots]
            rec = metrics.ErrorRecord(
                example=cfg.example, variant=variant, ell=ell, h_exponent=k,
                rel_err_h1=metrics.linf_h1_error(ref_snaps, pro, eng.fine_norms),
                err_dt_l2=metrics.dt_l2_error(ref_snaps, pro, op_w.P,
                                              coarse_norms, run_grid.dt),
                offline_s=offline_s, online_s=online_s)
            records.append(rec)
            say(f"  {variant:>14s} ell={str(ell):>4s}: rel H1 "
                f"{rec.rel_err_h1:.6e} (online {online_s:.3f}s)")

        def run_rows_for_basis(mode, ell, basis):
            lumped_name = f"mllod_{mode}"
            consistent_name = f"lod_{mode}"
            if lumped_name in cfg.variants:
                forcing = dynamics.SeparableForcing(
                    (op_w if mode == "weighted" else op_n).P @ eng.g_fine,
                    eng.time_fn)
                t0 = time.perf_counter()
                traj = dynamics.leapfrog_lumped(
                    basis.K, basis.m, forcing, run_grid, snapshot_steps=evals,
                    tag=lumped_name)
                finish_row(lumped_name, ell, basis.B, traj,
                           basis.offline_seconds, time.perf_counter() - t0)
                if cfg.stability_probe:
                    probes[(lumped_name, ell, k)] = _probe_energy(
                        basis.K, basis.m, run_grid, lumped=True)
            if consistent_name in cfg.variants:
                forcing = dynamics.SeparableForcing(
                    basis.B.T @ (eng.M_fine @ eng.g_fine), eng.time_fn)
                t0 = time.perf_counter()
                traj = dynamics.leapfrog_consistent(
                    basis.M_ms, basis.K, forcing, run_grid, diag_precond=True,
                    snapshot_steps=evals, tag=consistent_name)
                finish_row(consistent_name, ell, basis.B, traj,
                           basis.offline_seconds, time.perf_counter() - t0)
                if cfg.stability_probe:
                    probes[(consistent_name, ell, k)] = _probe_energy(
                        basis.K, basis.M_ms, run_grid, lumped=False)

        def build_one(mode_ell):
            mode, ell = mode_ell
            op = op_w if mode == "weighted" else op_n
            return lod.build_basis(coarse, eng.fine, eng.alpha, eng.beta,
                                   ell=ell, mode=mode, op=op)

        if cfg.threads > 1 and len(basis_keys) > 1:
            with concurrent.futures.ThreadPoolExecutor(cfg.threads) as pool:
                built = list(pool.map(build_one, basis_keys))
        else:
            built = [build_one(key) for key in basis_keys]

        for (mode, ell), basis in zip(basis_keys, built):
            try:
                run_rows_for_basis(mode, ell, basis)
            except Exception as exc:  # keep other rows alive
                failures.append(f"{cfg.example} H=2^-{k} {mode} ell={ell}: {exc}")
                say(f"  ROW FAILED: {failures[-1]}")
        del built

        if "fem" in cfg.variants:
            try:
                t0 = time.perf_counter()
                ops = assembly.build_fem_ops(coarse, eng.fine, eng.alpha, eng.beta)
                offline = time.perf_counter() - t0
                g_coarse = assembly.nodal_function(coarse, eng.g_fn)
                forcing = dynamics.SeparableForcing(g_coarse, eng.time_fn)
                t0 = time.perf_counter()
                traj = dynamics.leapfrog_lumped(ops.A, ops.m, forcing, run_grid,
                                                snapshot_steps=evals, tag="fem")
                finish_row("fem", None, op_w.E, traj, offline,
                           time.perf_counter() - t0)
                if cfg.stability_probe:
                    probes[("fem", None, k)] = _probe_energy(ops.A, ops.m,
                                                             run_grid, lumped=True)
            except Exception as exc:
                failures.append(f"{cfg.example} H=2^-{k} fem: {exc}")
                say(f"  ROW FAILED: {failures[-1]}")

    metrics.attach_eoc(records)
    records.sort(key=lambda r: (r.variant, r.ell if r.ell is not None else -1,
                                r.h_exponent))

    report = ExperimentReport(
        example=cfg.example, config=cfg, records=records,
        row_failures=failures, alpha_digest=eng.alpha.digest(),
        beta_digest=eng.beta.digest(), environment=_environment_note())
    report.artifacts["lambda_fine"] = eng.lam_fine
    report.artifacts["probes"] = probes
    report.artifacts["probes"].update(eng.probes)

    if cfg.with_timing:
        report.timing_rows = timing_study(cfg, engine=eng, progress=say)
    return report


def timing_study(cfg: ExperimentConfig, engine=None, progress=None):
    """Online wall-clock comparison, lumped vs consistent mass, shared basis.

    Serial by construction; the garbage collector is paused around the timed
    loops and a short warm-up run of each path is excluded from the clock.
    """
    cfg = validate_config(replace(cfg, with_timing=True))
    say = progress if progress is not None else (lambda msg: None)
    eng = engine if engine is not None else _Engine(
        replace(cfg, variants=("mllod_weighted", "lod_weighted")))
    if eng.M_fine is None:
        raise ConfigError("timing study needs the consistent fine mass")
    rows = []
    for k in cfg.timing_exponents:
        coarse = grid.build_level(k)
        op = interp.build_interpolator(coarse, eng.fine, eng.beta, "weighted")
        basis = lod.build_basis(coarse, eng.fine, eng.alpha, eng.beta,
                                ell=cfg.timing_ell, mode="weighted", op=op)
        n_steps = eng.steps_for(k)
        run_grid = dynamics.TimeGrid(cfg.t_final, n_steps)
        f_lumped = dynamics.SeparableForcing(op.P @ eng.g_fine, eng.time_fn)
        f_cons = dynamics.SeparableForcing(basis.B.T @ (eng.M_fine @ eng.g_fine),
                                           eng.time_fn)
        warm = dynamics.TimeGrid(run_grid.dt * 8, 8)
        dynamics.leapfrog_lumped(basis.K, basis.m, f_lumped, warm)
        dynamics.leapfrog_consistent(basis.M_ms, basis.K, f_cons, warm)

        gc_was_enabled = gc.isenabled()
        gc.disable()
        try:
            t0 = time.perf_counter()
            traj_l = dynamics.leapfrog_lumped(basis.K, basis.m, f_lumped,
                                              run_grid, check_cfl=False)
            t1 = time.perf_counter()
            traj_c = dynamics.leapfrog_consistent(basis.M_ms, basis.K, f_cons,
                                                  run_grid)
            t2 = time.perf_counter()
        finally:
            if gc_was_enabled:
                gc.enable()
        lumped_s = t1 - t0
        cons_s = t2 - t1
        rows.append(TimingRow(
            h_exponent=k, offline_s=basis.offline_seconds,
            online_lumped_s=lumped_s, online_consistent_s=cons_s,
            speedup=cons_s / lumped_s,
            lumped_iterations=traj_l.cg_iterations,
            consistent_iterations=traj_c.cg_iterations))
        say(f"[timing] H=2^-{k}: lumped {lumped_s:.3f}s, consistent "
            f"{cons_s:.3f}s, speed-up {rows[-1].speedup:.1f}x")
    return rows


def run_example1(config: ExperimentConfig | None = None, progress=None,
                 **over) -> ExperimentReport:
    cfg = replace(config, **over) if config is not None else example1_config(**over)
    return run_report(validate_config(cfg), progress=progress)


def run_example2(config: ExperimentConfig | None = None, progress=None,
                 **over) -> ExperimentReport:
    cfg = replace(config, **over) if config is not None else example2_config(**over)
    return run_report(validate_config(cfg), progress=progress)


def run_example3(config: ExperimentConfig | None = None, progress=None,
                 **over) -> ExperimentReport:
    cfg = replace(config, **over) if config is not None else example3_config(**over)
    return run_report(validate_config(cfg), progress=progress)


# ----------------------------------------------------------------- reports --

_FLOAT_FIELDS = ("t_final", "dt_factor", "reference_delta", "alpha_lo",
                 "alpha_hi", "beta_lo", "beta_hi", "rescale_lo", "rescale_hi")
_INT_FIELDS = ("hmin", "hmax", "naive_ell", "fine", "eps", "seed", "threads",
               "snapshot_stride", "timing_ell")
_BOOL_FIELDS = ("deterministic", "with_timing", "stability_probe")
_TUPLE_FIELDS = ("ell", "variants", "timing_exponents")


def config_echo(cfg: ExperimentConfig) -> dict:
    """Flat key = value mapping that reproduces the config."""
    out = {}
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        if f.name in _TUPLE_FIELDS:
            out[f.name] = ",".join(str(x) for x in v)
        elif isinstance(v, bool):
            out[f.name] = "true" if v else "false"
        elif isinstance(v, float):
            out[f.name] = f"{v:.17g}"
        else:
            out[f.name] = str(v)
    return out


def config_from_items(items: dict, base: ExperimentConfig | None = None
                      ) -> ExperimentConfig:
    """Build a config from flat string key/value pairs (file or CLI layers)."""
    kw = {}
    for key, raw in items.items():
        if key in _TUPLE_FIELDS:
            parts = [p for p in str(raw).split(",") if p.strip() != ""]
            if key == "variants":
                kw[key] = tuple(p.strip() for p in parts)
            else:
                try:
                    kw[key] = tuple(int(p) for p in parts)
                except ValueError:
                    raise ConfigError(f"config key {key}: expected integers, "
                                      f"got {raw!r}") from None
        elif key in _BOOL_FIELDS:
            s = str(raw).strip().lower()
            if s not in ("true", "false", "1", "0", "yes", "no"):
                raise ConfigError(f"config key {key}: expected a boolean, got {raw!r}")
            kw[key] = s in ("true", "1", "yes")
        elif key in _INT_FIELDS:
            try:
                kw[key] = int(str(raw).strip())
            except ValueError:
                raise ConfigError(f"config key {key}: expected an integer, "
                                  f"got {raw!r}") from None
        elif key in _FLOAT_FIELDS:
            try:
                kw[key] = float(str(raw).strip())
            except ValueError:
                raise ConfigError(f"config key {key}: expected a number, "
                                  f"got {raw!r}") from None
        elif key in ("example", "alpha_file", "beta_file", "out", "dt_base",
                     "forcing", "reference_mass"):
            kw[key] = str(raw).strip()
        else:
            raise ConfigError(f"unknown config key {key!r}")
    merged = replace(base, **kw) if base is not None else ExperimentConfig(**kw)
    return validate_config(merged)


def parse_config_file(path) -> dict:
    items = {}
    with open(path) as fh:
        for ln, raw in enumerate(fh, start=1):
            s = raw.strip()
            if not s or s.startswith("#"):
                continue
            if "=" not in s:
                raise ConfigError(f"{path}: line {ln}: expected 'key = value', "
                                  f"got {raw.rstrip()!r}")
            key, val = s.split("=", 1)
            items[key.strip()] = val.strip()
    return items


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return f"{x:.17g}"
    return str(x)


def emit_report(report: ExperimentReport, out_dir) -> list:
    """Write errors.csv, timing.csv, config.echo.txt and per-curve plot data.

    Returns the list of written paths. Re-running with identical inputs in
    deterministic mode reproduces every file byte for byte.
    """
    os.makedirs(out_dir, exist_ok=True)
    written = []

    path = os.path.join(out_dir, "errors.csv")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["example", "variant", "ell", "H", "rel_err_H1", "err_dt_L2",
                "eoc", "offline_s", "online_s"])
    # wall-clock columns are zeroed in deterministic mode so that identical
    # calls reproduce errors.csv byte for byte; timing.csv keeps real clocks
    det = report.config.deterministic
    for r in report.records:
        w.writerow([r.example, r.variant, _fmt(r.ell), _fmt(r.H),
                    _fmt(r.rel_err_h1), _fmt(r.err_dt_l2), _fmt(r.eoc),
                    _fmt(0.0 if det else r.offline_s),
                    _fmt(0.0 if det else r.online_s)])
    with open(path, "w") as fh:
        fh.write(buf.getvalue())
    written.append(path)

    path = os.path.join(out_dir, "timing.csv")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["H", "offline_s", "online_lumped_s", "online_consistent_s",
                "speedup", "lumped_iterations", "consistent_iterations"])
    for t in report.timing_rows:
        w.writerow([_fmt(2.0 ** (-t.h_exponent)), _fmt(t.offline_s),
                    _fmt(t.online_lumped_s), _fmt(t.online_consistent_s),
                    _fmt(t.speedup), t.lumped_iterations,
                    t.consistent_iterations])
    with open(path, "w") as fh:
        fh.write(buf.getvalue())
    written.append(path)

    path = os.path.join(out_dir, "config.echo.txt")
    with open(path, "w") as fh:
        for key, val in sorted(config_echo(report.config).items()):
            fh.write(f"{key} = {val}\n")
        fh.write(f"# environment: {report.environment}\n")
        fh.write(f"# alpha_digest: {report.alpha_digest}\n")
        fh.write(f"# beta_digest: {report.beta_digest}\n")
        for failure in report.row_failures:
            fh.write(f"# row_failure: {failure}\n")
    written.append(path)

    curves = {}
    for r in report.records:
        curves.setdefault((r.variant, r.ell), []).append(r)
    for (variant, ell), recs in sorted(curves.items(),
                                       key=lambda kv: (kv[0][0], kv[0][1] or -1)):
        name = f"curve_{report.example}_{variant}"
        if ell is not None:
            name += f"_ell{ell}"
        path = os.path.join(out_dir, name + ".dat")
        recs.sort(key=lambda r: -r.H)
        with open(path, "w") as fh:
            for r in recs:
                fh.write(f"{r.H:.17g} {r.rel_err_h1:.17g}\n")
        written.append(path)
    return written
