"""Localized corrector problems and the corrected multiscale basis.

For every coarse cell e and every interior coarse vertex j of e, the cell
corrector q solves, on the fine space of the patch N^ell(e) restricted to the
kernel of the interpolation operator,

    a(q, w) = integral over e of alpha grad(hat_j) . grad(w)   for all w,

imposed as a saddle-point system with constraint rows taken from P. The
corrected basis is  B = E - Q  (embedding minus accumulated correctors); the
corrected stiffness K = B' A_fine B is what the time steppers consume.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sparse

from .assembly import (STIFF_REF, assemble_lumped_mass, assemble_mass,
                       assemble_stiffness, embedding_interior,
                       fine_stiffness_full, norms)
from .coeff import CoefficientField, values_on_fine
from .grid import MeshLevel, element_patch, interior_index_map, refine_map
from .interp import InterpOperator, _cell_fine_nodes, _local_layout, build_interpolator
from .sparsela import SaddleFactorization, canonical, symmetrize


@dataclass(frozen=True)
class MultiscaleBasis:
    coarse: MeshLevel
    fine: MeshLevel
    ell: int | None                      # None = global (whole-domain) patches
    mode: str
    B: sparse.csr_matrix = field(repr=False)    # fine interior x coarse interior
    K: sparse.csr_matrix = field(repr=False)    # corrected stiffness
    m: np.ndarray = field(repr=False)           # lumped beta-mass diagonal
    M_ms: sparse.csr_matrix = field(repr=False)  # consistent corrected mass
    alpha_digest: str = ""
    beta_digest: str = ""
    offline_seconds: float = 0.0


class _CorrectorContext:
    """Shared immutable data for all cell corrector solves of one basis build."""

    def __init__(self, coarse, fine, alpha, op):
        self.coarse = coarse
        self.fine = fine
        self.op = op
        self.afine = values_on_fine(alpha, fine)
        self.rm = refine_map(coarse, fine)
        self.r, self.nl, self.conn_loc, self.shp = _local_layout(coarse, fine)
        self.fidx = interior_index_map(fine)        # global node -> interior dof
        self.cidx = interior_index_map(coarse)
        self.P_csc = sparse.csc_matrix(op.P)
        self._factor_cache = {}

    def cell_rhs(self, cell):
        """Stiffness action restricted to the cell, for all 4 corner shapes.

        Returns (global fine node ids of the cell, n_local x 4 dense block)
        with column a holding integral over the cell of
        alpha grad(shape_a) . grad(hat_k) for every local fine hat.
        """
        acell = self.afine[self.rm[cell]]
        data = acell[:, None, None] * STIFF_REF[None, :, :]
        rows = np.repeat(self.conn_loc, 4, axis=1).ravel()
        cols = np.tile(self.conn_loc, (1, 4)).ravel()
        A_loc = sparse.csr_matrix((data.ravel(), (rows, cols)),
                                  shape=(self.nl ** 2, self.nl ** 2))
        return _cell_fine_nodes(self.coarse, self.fine, cell, self.r), A_loc @ self.shp

    def patch_dofs(self, cell, ell):
        """Interior fine dofs strictly inside the patch rectangle."""
        patch = element_patch(self.coarse, cell, ell)
        r = self.r
        x0, x1 = patch.x_range
        y0, y1 = patch.y_range
        gx = np.arange(x0 * r + 1, (x1 + 1) * r)
        gy = np.arange(y0 * r + 1, (y1 + 1) * r)
        nodes = (gy[:, None] * (self.fine.n + 1) + gx[None, :]).ravel()
        free = self.fidx[nodes]
        return patch, free[free >= 0]

    def factorization(self, patch, free):
        """Factor the patch saddle system, cached by patch rectangle."""
        key = (patch.x_range, patch.y_range)
        hit = self._factor_cache.get(key)
        if hit is not None:
            return hit
        A_int = self.A_int   # set by build_basis
        App = A_int[free][:, free]
        C = self.P_csc[:, free]
        keep = np.where(np.diff(sparse.csr_matrix(C).indptr) > 0)[0]
        C = sparse.csr_matrix(C)[keep]
        fac = SaddleFactorization(App, C, direct_limit=50_000)
        entry = (fac, free, dict(zip(free.tolist(), range(free.size))))
        self._factor_cache[key] = entry
        return entry


def element_corrector(coarse: MeshLevel, fine: MeshLevel, alpha: CoefficientField,
                      op: InterpOperator, ell: int | None, cell: int,
                      A_int: sparse.csr_matrix | None = None):
    """Corrector columns of one coarse cell.

    Returns a dict {interior coarse dof -> corrector vector over fine interior
    dofs}. Intended for tests and diagnostics; build_basis runs the same code
    path with shared caches.
    """
    ctx = _CorrectorContext(coarse, fine, alpha, op)
    ctx.A_int = A_int if A_int is not None else canonical(
        fine_stiffness_full(fine, ctx.afine)[fine.interior][:, fine.interior])
    return _solve_cell(ctx, cell, ell if ell is not None else coarse.n)


def _solve_cell(ctx, cell, ell):
    patch, free = ctx.patch_dofs(cell, ell)
    fac, _, free_pos = ctx.factorization(patch, free)
    gnodes, rhs_block = ctx.cell_rhs(cell)
    gdofs = ctx.fidx[gnodes]

    out = {}
    nn = ctx.coarse.n + 1
    cx, cy = cell % ctx.coarse.n, cell // ctx.coarse.n
    corners = (cy * nn + cx, cy * nn + cx + 1,
               (cy + 1) * nn + cx, (cy + 1) * nn + cx + 1)
    for a, node in enumerate(corners):
        j = ctx.cidx[node]
        if j < 0:
            continue
        rhs = np.zeros(free.size)
        for loc, dof in enumerate(gdofs):
            if dof >= 0:
                pos = free_pos.get(int(dof))
                if pos is not None:
                    rhs[pos] = rhs_block[loc, a]
        q, _ = fac.solve(rhs)
        out[j] = (free, q)
    return out


def build_basis(coarse: MeshLevel, fine: MeshLevel, alpha: CoefficientField,
                beta: CoefficientField, ell: int | None = 4,
                mode: str = "weighted",
                op: InterpOperator | None = None) -> MultiscaleBasis:
    """Assemble the corrected basis and its coarse operators.

    ell = None requests whole-domain (unlocalized) patches. When the coarse
    and fine levels coincide the kernel of P is trivial, all correctors vanish
    identically, and the basis degenerates to the identity embedding.
    """
    t0 = time.perf_counter()
    if op is None:
        op = build_interpolator(coarse, fine, beta, mode=mode)
    if op.mode != mode:
        raise ValueError(f"interpolator mode {op.mode!r} does not match {mode!r}")

    m = assemble_lumped_mass(coarse, fine, beta)

    if fine.exponent == coarse.exponent:
        n = coarse.n_interior
        B = sparse.identity(n, format="csr")
        K = assemble_stiffness(coarse, fine, alpha)
        M_ms = assemble_mass(coarse, fine, beta)
        return MultiscaleBasis(coarse=coarse, fine=fine, ell=ell, mode=mode,
                               B=B, K=K, m=m, M_ms=M_ms,
                               alpha_digest=alpha.digest(),
                               beta_digest=beta.digest(),
                               offline_seconds=time.perf_counter() - t0)

    ctx = _CorrectorContext(coarse, fine, alpha, op)
    A_full = fine_stiffness_full(fine, ctx.afine)
    ctx.A_int = canonical(A_full[fine.interior][:, fine.interior])
    ell_eff = ell if ell is not None else coarse.n

    # Sweep cells grouped by clipped patch rectangle: each group shares one
    # KKT factorization, released before the next group starts. Keeping every
    # factorization alive for the whole build would hold hundreds of LU
    # factors at fine resolutions and exhaust memory.
    groups: dict[tuple, list[int]] = {}
    for cell in range(coarse.n_cells):
        patch = element_patch(coarse, cell, ell_eff)
        groups.setdefault((patch.x_range, patch.y_range), []).append(cell)

    rows, cols, vals = [], [], []
    for key in sorted(groups):
        for cell in groups[key]:
            for j, (free, q) in _solve_cell(ctx, cell, ell_eff).items():
                rows.append(free)
                cols.append(np.full(free.size, j))
                vals.append(q)
        ctx._factor_cache.clear()
    Q = sparse.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(fine.n_interior, coarse.n_interior))
    B = canonical(op.E - Q)

    M_int = assemble_mass(fine, fine, beta)
    K = symmetrize(B.T @ (ctx.A_int @ B))
    M_ms = symmetrize(B.T @ (M_int @ B))
    return MultiscaleBasis(coarse=coarse, fine=fine, ell=ell, mode=mode,
                           B=B, K=K, m=m, M_ms=M_ms,
                           alpha_digest=alpha.digest(), beta_digest=beta.digest(),
                           offline_seconds=time.perf_counter() - t0)


def lumped_apply(basis: MultiscaleBasis, u: np.ndarray) -> np.ndarray:
    """One application of the lumped coarse operator: m^-1 (K u). No solves."""
    return (basis.K @ u) / basis.m


def decay_study(coarse: MeshLevel, fine: MeshLevel, alpha: CoefficientField,
                beta: CoefficientField, v: np.ndarray, ells,
                mode: str = "weighted", bases: dict | None = None):
    """H1-seminorm gaps |S v - S^ell v| against the unlocalized operator.

    Returns (gaps array aligned with ells, fitted exponential decay rate).
    A ``bases`` dict may be supplied to share basis builds across calls; it is
    keyed by ell (None = global).
    """
    if bases is None:
        bases = {}

    def get(ell):
        if ell not in bases:
            op = bases.get("_op")
            if op is None:
                op = build_interpolator(coarse, fine, beta, mode=mode)
                bases["_op"] = op
            bases[ell] = build_basis(coarse, fine, alpha, beta, ell=ell,
                                     mode=mode, op=op)
        return bases[ell]

    ref = get(None)
    A0 = norms(fine).A0
    gaps = []
    for ell in ells:
        d = (ref.B - get(ell).B) @ v
        gaps.append(float(np.sqrt(max(d @ (A0 @ d), 0.0))))
    gaps = np.array(gaps)

    pos = gaps > 1e-14 * max(gaps.max(), 1e-300)
    if pos.sum() >= 2:
        ls = np.asarray(ells, dtype=float)[pos]
        slope = np.polyfit(ls, np.log(gaps[pos]), 1)[0]
        rate = -slope
    else:
        rate = np.inf
    return gaps, rate


BASIS_CACHE_FORMAT = "lodwave-basis-v1"


def save_basis(basis: MultiscaleBasis, path) -> None:
    """Binary cache: documented JSON header + row-compressed arrays (npz)."""
    header = dict(format=BASIS_CACHE_FORMAT,
                  coarse=basis.coarse.exponent, fine=basis.fine.exponent,
                  ell=-1 if basis.ell is None else basis.ell, mode=basis.mode,
                  alpha_digest=basis.alpha_digest, beta_digest=basis.beta_digest)
    B = canonical(basis.B)
    K = canonical(basis.K)
    M = canonical(basis.M_ms)
    np.savez(path, header=np.frombuffer(json.dumps(header).encode(), dtype=np.uint8),
             B_indptr=B.indptr, B_indices=B.indices, B_data=B.data,
             K_indptr=K.indptr, K_indices=K.indices, K_data=K.data,
             M_indptr=M.indptr, M_indices=M.indices, M_data=M.data,
             m=basis.m, offline_seconds=np.array([basis.offline_seconds]))


def load_basis(path, coarse: MeshLevel, fine: MeshLevel,
               alpha: CoefficientField, beta: CoefficientField) -> MultiscaleBasis:
    """Load a cached basis; digests and shape metadata are verified."""
    with np.load(path) as z:
        header = json.loads(bytes(z["header"]).decode())
        if header.get("format") != BASIS_CACHE_FORMAT:
            raise ValueError(f"{path}: not a basis cache (format {header.get('format')!r})")
        for key, want in (("coarse", coarse.exponent), ("fine", fine.exponent),
                          ("alpha_digest", alpha.digest()),
                          ("beta_digest", beta.digest())):
            if header[key] != want:
                raise ValueError(f"{path}: cache mismatch on {key}: "
                                 f"{header[key]!r} != {want!r}")
        nB = (fine.n_interior, coarse.n_interior)
        nK = (coarse.n_interior, coarse.n_interior)
        B = sparse.csr_matrix((z["B_data"], z["B_indices"], z["B_indptr"]), shape=nB)
        K = sparse.csr_matrix((z["K_data"], z["K_indices"], z["K_indptr"]), shape=nK)
        M = sparse.csr_matrix((z["M_data"], z["M_indices"], z["M_indptr"]), shape=nK)
        ell = None if header["ell"] < 0 else header["ell"]
        return MultiscaleBasis(coarse=coarse, fine=fine, ell=ell,
                               mode=header["mode"], B=B, K=K, m=z["m"], M_ms=M,
                               alpha_digest=header["alpha_digest"],
                               beta_digest=header["beta_digest"],
                               offline_seconds=float(z["offline_seconds"][0]))
