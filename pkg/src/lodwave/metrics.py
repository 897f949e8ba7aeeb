"""Error functionals between a fine reference trajectory and coarse runs.

Both trajectories carry snapshots at the same physical times (coarse step
times), each with the state one coarse step earlier, so the discrete time
derivative D u = (u^n - u^{n-1}) / dt is formed with the coarse step on both
sides. Relative errors divide by the max-over-time reference H1 norm.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .assembly import NormSet


@dataclass
class ErrorRecord:
    example: str
    variant: str
    ell: int | None
    h_exponent: int
    rel_err_h1: float
    err_dt_l2: float
    eoc: float | None = None
    offline_s: float = 0.0
    online_s: float = 0.0

    @property
    def H(self) -> float:
        return 2.0 ** (-self.h_exponent)


def prolong(B, trajectory):
    """Map coarse snapshots to fine nodal vectors through the basis columns.

    ``trajectory`` may be a WaveTrajectory or a bare snapshot list.
    """
    out = []
    for s in getattr(trajectory, "snapshots", trajectory):
        out.append((s.step, s.t, B @ s.u, B @ s.u_prev))
    return out


def _check_aligned(ref_snaps, snaps):
    if len(ref_snaps) != len(snaps):
        raise ValueError(f"snapshot count mismatch: {len(ref_snaps)} != {len(snaps)}")
    for r, s in zip(ref_snaps, snaps):
        if not math.isclose(r[1], s[1], rel_tol=1e-9, abs_tol=1e-12):
            raise ValueError(f"snapshot times differ: {r[1]} vs {s[1]}")


def linf_h1_error(ref_snaps, prolonged, fine_norms: NormSet) -> float:
    """max_n ||u_ref - u||_H1 / max_n ||u_ref||_H1 over the common snapshots."""
    _check_aligned(ref_snaps, prolonged)
    num = 0.0
    den = 0.0
    for (_, _, ur, _), (_, _, up, _) in zip(ref_snaps, prolonged):
        num = max(num, fine_norms.h1(ur - up))
        den = max(den, fine_norms.h1(ur))
    if den == 0.0:
        raise ValueError("reference trajectory is identically zero; "
                         "relative error undefined")
    return num / den


def dt_l2_error(ref_snaps, prolonged, P, coarse_norms: NormSet, dt: float) -> float:
    """max_n of the coarse-interpolated L2 norm of D(u_ref - u) at step times."""
    _check_aligned(ref_snaps, prolonged)
    worst = 0.0
    for (_, _, ur, urp), (_, _, up, upp) in zip(ref_snaps, prolonged):
        d = ((ur - urp) - (up - upp)) / dt
        worst = max(worst, coarse_norms.l2(P @ d))
    return worst


def eoc(err_coarse: float, err_fine: float) -> float:
    """Observed order log2(e_H / e_{H/2}) for one mesh halving."""
    if err_coarse <= 0.0 or err_fine <= 0.0:
        raise ValueError("EOC needs strictly positive errors")
    return math.log2(err_coarse / err_fine)


def attach_eoc(records):
    """Fill the eoc field along each (variant, ell) curve, in place."""
    curves = {}
    for rec in records:
        curves.setdefault((rec.variant, rec.ell), []).append(rec)
    for curve in curves.values():
        curve.sort(key=lambda r: r.h_exponent)
        for prev, cur in zip(curve, curve[1:]):
            if cur.h_exponent == prev.h_exponent + 1 \
                    and prev.rel_err_h1 > 0.0 and cur.rel_err_h1 > 0.0:
                cur.eoc = eoc(prev.rel_err_h1, cur.rel_err_h1)
    return records
