"""Coefficient-adapted nodal quasi-interpolation onto the coarse Q1 space.

The operator is the composition of two stages:

1. a cell-local beta-weighted L2 projection onto the (discontinuous)
   bilinear space of each coarse cell, and
2. nodal averaging of the per-cell vertex values, with each adjacent cell
   weighted by its share integral(beta * hat_i over cell) / integral(beta * hat_i)
   ("weighted" mode) or equally ("naive" mode, the classical choice).

Composed with the nested embedding E the operator is a projection: P E = I.
Functions entering P are fine-mesh FE functions given by their interior nodal
values (zero on the boundary); the output lives on interior coarse nodes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sparse

from .assembly import (MASS_REF, assemble_lumped_mass, embedding_interior,
                       fine_stiffness_full, fine_mass_full, norms)
from .coeff import CoefficientField, values_on_fine
from .grid import MeshLevel, interior_index_map, refine_map
from .sparsela import canonical


@dataclass(frozen=True)
class InterpOperator:
    coarse: MeshLevel
    fine: MeshLevel
    mode: str
    P: sparse.csr_matrix = field(repr=False)   # coarse interior x fine interior
    E: sparse.csr_matrix = field(repr=False)   # fine interior x coarse interior
    m_coarse: np.ndarray = field(repr=False)   # interior lumped beta-mass
    beta_digest: str = ""


def _local_layout(coarse: MeshLevel, fine: MeshLevel):
    """Cell-local fine grid: connectivity and coarse shape values (shared by all cells)."""
    r = 1 << (fine.exponent - coarse.exponent)
    nl = r + 1
    ox, oy = np.meshgrid(np.arange(r), np.arange(r))
    sw = (oy * nl + ox).ravel()
    conn_loc = np.column_stack([sw, sw + 1, sw + nl, sw + nl + 1])
    gx, gy = np.meshgrid(np.arange(nl), np.arange(nl))
    tx = (gx / r).ravel()
    ty = (gy / r).ravel()
    shp = np.column_stack([(1 - tx) * (1 - ty), tx * (1 - ty),
                           (1 - tx) * ty, tx * ty])
    return r, nl, conn_loc, shp


def _cell_fine_nodes(coarse: MeshLevel, fine: MeshLevel, cell: int, r: int):
    cx, cy = cell % coarse.n, cell // coarse.n
    gx = np.arange(cx * r, cx * r + r + 1)
    gy = np.arange(cy * r, cy * r + r + 1)
    return (gy[:, None] * (fine.n + 1) + gx[None, :]).ravel()


def _projection_block(beta_cells, conn_loc, shp, nl, h):
    """4 x n_local matrix of the beta-weighted L2 projection on one coarse cell."""
    data = beta_cells[:, None, None] * ((h * h) * MASS_REF)[None, :, :]
    rows = np.repeat(conn_loc, 4, axis=1).ravel()
    cols = np.tile(conn_loc, (1, 4)).ravel()
    M_loc = sparse.csr_matrix((data.ravel(), (rows, cols)),
                              shape=(nl * nl, nl * nl))
    ME = M_loc @ shp                      # n_local x 4
    G = shp.T @ ME                        # 4 x 4 Gram, SPD since beta > 0
    return np.linalg.solve(G, ME.T)


def local_projection(coarse: MeshLevel, fine: MeshLevel, beta: CoefficientField,
                     cell: int):
    """Projection block of one coarse cell and the global fine node ids it acts on."""
    r, nl, conn_loc, shp = _local_layout(coarse, fine)
    rm = refine_map(coarse, fine)
    bfine = values_on_fine(beta, fine)
    block = _projection_block(bfine[rm[cell]], conn_loc, shp, nl, fine.h)
    return block, _cell_fine_nodes(coarse, fine, cell, r)


def averaging_weights(coarse: MeshLevel, fine: MeshLevel, beta: CoefficientField,
                      mode: str = "weighted"):
    """Per interior coarse node: the 4 adjacent cell ids and their averaging weights.

    Weighted mode uses integral(beta * hat_i over cell) / integral(beta * hat_i);
    naive mode uses 1 / #adjacent cells. Weights sum to one either way.
    """
    if mode not in ("weighted", "naive"):
        raise ValueError(f"unknown averaging mode {mode!r}")
    n = coarse.n
    nodes = coarse.interior
    ix, iy = nodes % (n + 1), nodes // (n + 1)
    cells = np.column_stack([(iy - 1 + dy) * n + (ix - 1 + dx)
                             for dy in (0, 1) for dx in (0, 1)])
    if mode == "naive":
        weights = np.full(cells.shape, 0.25)
        return cells, weights

    bfine = values_on_fine(beta, fine)
    rm = refine_map(coarse, fine)
    r, nl, conn_loc, shp = _local_layout(coarse, fine)
    # integral(beta * hat_i) restricted to one cell, for each of its 4 corners
    lump_scatter = np.zeros((coarse.n_cells, 4))
    w = bfine[rm] * (fine.h ** 2 / 4.0)           # (n_cells, r*r) fine lump weights
    for a in range(4):
        lump_scatter[:, a] = (w[:, :, None] * shp[conn_loc][None, :, :, a]
                              ).sum(axis=(1, 2))
    m_full = assemble_lumped_mass(coarse, fine, beta, interior_only=False)
    # node i sits at corner NE, NW, SE, SW of the cells in column order above
    corner_of_node = [3, 2, 1, 0]
    weights = np.empty(cells.shape)
    for col in range(4):
        weights[:, col] = lump_scatter[cells[:, col], corner_of_node[col]]
    weights /= m_full[nodes][:, None]
    return cells, weights


def build_interpolator(coarse: MeshLevel, fine: MeshLevel, beta: CoefficientField,
                       mode: str = "weighted") -> InterpOperator:
    """Assemble the interpolation matrix P (coarse interior x fine interior)."""
    if mode not in ("weighted", "naive"):
        raise ValueError(f"unknown averaging mode {mode!r}")
    if fine.exponent < coarse.exponent:
        raise ValueError("fine level must be at least as fine as the coarse level")

    r, nl, conn_loc, shp = _local_layout(coarse, fine)
    rm = refine_map(coarse, fine)
    bfine = values_on_fine(beta, fine)
    h = fine.h
    n = coarse.n
    nn = n + 1
    cidx = interior_index_map(coarse)
    m_full = assemble_lumped_mass(coarse, fine, beta, interior_only=False)

    rows, cols, vals = [], [], []
    lump_w = h * h / 4.0
    for cell in range(coarse.n_cells):
        beta_cells = bfine[rm[cell]]
        block = _projection_block(beta_cells, conn_loc, shp, nl, h)
        gnodes = _cell_fine_nodes(coarse, fine, cell, r)
        cx, cy = cell % n, cell // n
        corners = (cy * nn + cx, cy * nn + cx + 1,
                   (cy + 1) * nn + cx, (cy + 1) * nn + cx + 1)
        if mode == "weighted":
            lump_loc = np.bincount(conn_loc.ravel(),
                                   weights=np.repeat(beta_cells * lump_w, 4),
                                   minlength=nl * nl)
            corner_lump = shp.T @ lump_loc
        for a, node in enumerate(corners):
            i = cidx[node]
            if i < 0:
                continue
            w = corner_lump[a] / m_full[node] if mode == "weighted" else 0.25
            rows.append(np.full(gnodes.size, i))
            cols.append(gnodes)
            vals.append(w * block[a])

    P_full = sparse.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(coarse.n_interior, fine.n_nodes))
    P = canonical(P_full[:, fine.interior])
    if P.nnz:
        # drop pure round-off entries so row/column supports stay exact
        P.data[np.abs(P.data) < 1e-14 * np.abs(P.data).max()] = 0.0
        P.eliminate_zeros()
    E = embedding_interior(coarse, fine)
    return InterpOperator(coarse=coarse, fine=fine, mode=mode, P=P, E=E,
                          m_coarse=m_full[coarse.interior],
                          beta_digest=beta.digest())


def measure_interp_constants(op: InterpOperator, n_random: int = 20,
                             seed: int = 0):
    """Empirical (approximation, stability) constants of the operator.

    approximation: max ||v - E P v||_L2 / (H |v|_H1)
    stability:     max |E P v|_H1 / |v|_H1
    over seeded random vectors plus a few smooth interpolants. Reported, not
    asserted: these are diagnostics for the theory's mesh-independence claim.
    """
    fine = op.fine
    ns = norms(fine)
    H = op.coarse.h
    xy = fine.node_xy[fine.interior]
    x, y = xy[:, 0], xy[:, 1]
    probes = [np.sin(np.pi * x) * np.sin(np.pi * y),
              np.sin(2 * np.pi * x) * np.sin(np.pi * y),
              np.sin(np.pi * x) * np.sin(3 * np.pi * y),
              x * (1 - x) * y * (1 - y)]
    rng = np.random.default_rng(seed)
    probes += [rng.standard_normal(fine.n_interior) for _ in range(n_random)]

    c_approx = 0.0
    c_stab = 0.0
    for v in probes:
        sv = ns.h1_semi(v)
        if sv == 0.0:
            continue
        ev = op.E @ (op.P @ v)
        c_approx = max(c_approx, ns.l2(v - ev) / (H * sv))
        c_stab = max(c_stab, ns.h1_semi(ev) / sv)
    return c_approx, c_stab
