"""Exact bilinear (Q1) finite element assembly on nested square meshes.

Coefficients are constant per fine cell, so every integral here is exact:
the reference matrices below integrate the bilinear shape functions in closed
form, and coarse-level operators come from the nested embedding E (a coarse
Q1 function restricted to a fine cell is again bilinear), A_H = E' A_h E.

Local node order in a cell is SW, SE, NW, NE. For that order the unit-square
reference matrices are

    stiffness (h-independent):  1/6 * [[ 4,-1,-1,-2], ...]
    mass: h^2/36 * [[4,2,2,1], ...]   lumped: h^2/4 per corner
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sparse

from .coeff import CoefficientField, values_on_fine
from .grid import MeshLevel
from .sparsela import canonical

STIFF_REF = np.array([[4.0, -1.0, -1.0, -2.0],
                      [-1.0, 4.0, -2.0, -1.0],
                      [-1.0, -2.0, 4.0, -1.0],
                      [-2.0, -1.0, -1.0, 4.0]]) / 6.0

MASS_REF = np.array([[4.0, 2.0, 2.0, 1.0],
                     [2.0, 4.0, 1.0, 2.0],
                     [2.0, 1.0, 4.0, 2.0],
                     [1.0, 2.0, 2.0, 4.0]]) / 36.0


def _assemble_fine(mesh: MeshLevel, cell_coef: np.ndarray, ref: np.ndarray,
                   scale: float) -> sparse.csr_matrix:
    conn = mesh.conn
    data = cell_coef[:, None, None] * (scale * ref)[None, :, :]
    rows = np.repeat(conn, 4, axis=1).ravel()
    cols = np.tile(conn, (1, 4)).ravel()
    A = sparse.csr_matrix((data.ravel(), (rows, cols)),
                          shape=(mesh.n_nodes, mesh.n_nodes))
    A.sum_duplicates()
    A.sort_indices()
    return A


def fine_stiffness_full(mesh: MeshLevel, cell_alpha: np.ndarray) -> sparse.csr_matrix:
    return _assemble_fine(mesh, cell_alpha, STIFF_REF, 1.0)


def fine_mass_full(mesh: MeshLevel, cell_beta: np.ndarray) -> sparse.csr_matrix:
    return _assemble_fine(mesh, cell_beta, MASS_REF, mesh.h ** 2)


def fine_lumped_full(mesh: MeshLevel, cell_beta: np.ndarray) -> np.ndarray:
    """Vector of integral(beta * hat_i) over all nodes: h^2/4 per adjacent cell."""
    w = cell_beta * (mesh.h ** 2 / 4.0)
    return np.bincount(mesh.conn.ravel(), weights=np.repeat(w, 4),
                       minlength=mesh.n_nodes)


def _prolongation_1d(kc: int, kf: int) -> sparse.csr_matrix:
    nc, nf = 1 << kc, 1 << kf
    r = nf // nc
    g = np.arange(nf + 1)
    i0 = g // r
    t = (g - i0 * r) / r
    rows = np.concatenate([g, g[t > 0]])
    cols = np.concatenate([i0, i0[t > 0] + 1])
    vals = np.concatenate([1.0 - t, t[t > 0]])
    return sparse.csr_matrix((vals, (rows, cols)), shape=(nf + 1, nc + 1))


def embedding_full(coarse: MeshLevel, fine: MeshLevel) -> sparse.csr_matrix:
    """Nodal embedding of the coarse Q1 space into the fine one (all nodes)."""
    if fine.exponent < coarse.exponent:
        raise ValueError("fine level must be at least as fine as the coarse level")
    e1 = _prolongation_1d(coarse.exponent, fine.exponent)
    return canonical(sparse.kron(e1, e1, format="csr"))


def embedding_interior(coarse: MeshLevel, fine: MeshLevel) -> sparse.csr_matrix:
    E = embedding_full(coarse, fine)
    return canonical(E[fine.interior][:, coarse.interior])


def _interior(A: sparse.csr_matrix, mesh: MeshLevel) -> sparse.csr_matrix:
    return canonical(A[mesh.interior][:, mesh.interior])


def assemble_stiffness(mesh: MeshLevel, fine: MeshLevel, alpha: CoefficientField,
                       interior_only: bool = True) -> sparse.csr_matrix:
    """Stiffness of the mesh-level Q1 space, integrated exactly on the fine mesh."""
    a = values_on_fine(alpha, fine)
    Af = fine_stiffness_full(fine, a)
    if fine.exponent == mesh.exponent:
        A = Af
    else:
        E = embedding_full(mesh, fine)
        A = canonical(E.T @ (Af @ E))
    return _interior(A, mesh) if interior_only else A


def assemble_mass(mesh: MeshLevel, fine: MeshLevel, beta: CoefficientField,
                  interior_only: bool = True) -> sparse.csr_matrix:
    """Consistent beta-weighted mass of the mesh-level Q1 space (exact)."""
    b = values_on_fine(beta, fine)
    Mf = fine_mass_full(fine, b)
    if fine.exponent == mesh.exponent:
        M = Mf
    else:
        E = embedding_full(mesh, fine)
        M = canonical(E.T @ (Mf @ E))
    return _interior(M, mesh) if interior_only else M


def assemble_lumped_mass(mesh: MeshLevel, fine: MeshLevel, beta: CoefficientField,
                         interior_only: bool = True) -> np.ndarray:
    """Diagonal integral(beta * hat_i) at mesh level, via the nested embedding.

    This is the vertex-quadrature bilinear form on the mesh space, not a
    pointwise beta(x_i) scaling; the two differ because beta jumps at nodes.
    """
    b = values_on_fine(beta, fine)
    mf = fine_lumped_full(fine, b)
    if fine.exponent == mesh.exponent:
        m = mf
    else:
        E = embedding_full(mesh, fine)
        m = E.T @ mf
    return m[mesh.interior] if interior_only else m


def nodal_function(mesh: MeshLevel, g, t: float = 0.0) -> np.ndarray:
    """Values g(x, y, t) at the interior nodes (g must broadcast over arrays)."""
    xy = mesh.node_xy[mesh.interior]
    vals = g(xy[:, 0], xy[:, 1], t)
    return np.asarray(vals, dtype=np.float64)


@dataclass(frozen=True)
class NormSet:
    """Unit-coefficient L2/H1 Gram matrices over the interior dofs of a mesh."""

    mesh: MeshLevel
    M0: sparse.csr_matrix = field(repr=False)
    A0: sparse.csr_matrix = field(repr=False)

    def l2(self, v) -> float:
        return float(np.sqrt(max(v @ (self.M0 @ v), 0.0)))

    def h1_semi(self, v) -> float:
        return float(np.sqrt(max(v @ (self.A0 @ v), 0.0)))

    def h1(self, v) -> float:
        return float(np.sqrt(max(v @ (self.M0 @ v) + v @ (self.A0 @ v), 0.0)))


def norms(mesh: MeshLevel) -> NormSet:
    ones = np.ones(mesh.n_cells)
    M0 = _interior(fine_mass_full(mesh, ones), mesh)
    A0 = _interior(fine_stiffness_full(mesh, ones), mesh)
    return NormSet(mesh=mesh, M0=M0, A0=A0)


@dataclass(frozen=True)
class FemOperatorSet:
    """Stiffness, consistent mass and lumped diagonal of one mesh level."""

    mesh: MeshLevel
    fine: MeshLevel
    A: sparse.csr_matrix = field(repr=False)
    M: sparse.csr_matrix = field(repr=False)
    m: np.ndarray = field(repr=False)
    alpha_digest: str = ""
    beta_digest: str = ""


def build_fem_ops(mesh: MeshLevel, fine: MeshLevel, alpha: CoefficientField,
                  beta: CoefficientField) -> FemOperatorSet:
    return FemOperatorSet(
        mesh=mesh, fine=fine,
        A=assemble_stiffness(mesh, fine, alpha),
        M=assemble_mass(mesh, fine, beta),
        m=assemble_lumped_mass(mesh, fine, beta),
        alpha_digest=alpha.digest(), beta_digest=beta.digest())
