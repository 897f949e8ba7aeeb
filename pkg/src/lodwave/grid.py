"""Nested dyadic quad meshes on the unit square.

All meshes are uniform n-by-n grids of square cells with n = 2**k. Nodes and
cells are numbered row-major from the bottom-left corner, x running fastest:
node (ix, iy) has id iy*(n+1) + ix, cell (ex, ey) has id ey*n + ex.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

MAX_EXPONENT = 14


@dataclass(frozen=True)
class MeshLevel:
    """Uniform square mesh at refinement level ``exponent`` (h = 2**-exponent)."""

    exponent: int
    n: int
    conn: np.ndarray = field(repr=False)       # (n*n, 4) cell -> node ids, SW SE NW NE
    node_xy: np.ndarray = field(repr=False)    # (n_nodes, 2) coordinates
    interior: np.ndarray = field(repr=False)   # ids of nodes off the boundary

    @property
    def h(self) -> float:
        return 1.0 / self.n

    @property
    def n_nodes(self) -> int:
        return (self.n + 1) ** 2

    @property
    def n_cells(self) -> int:
        return self.n * self.n

    @property
    def n_interior(self) -> int:
        return (self.n - 1) ** 2

    def node_grid_index(self, node):
        """(ix, iy) integer grid coordinates of a node id."""
        return node % (self.n + 1), node // (self.n + 1)

    def cell_grid_index(self, cell):
        return cell % self.n, cell // self.n


@dataclass(frozen=True)
class PatchIndexSet:
    """Cells of an element neighborhood N^ell(e), plus optional fine node ids."""

    center: int
    ell: int
    cells: np.ndarray = field(repr=False)
    x_range: tuple = (0, 0)   # inclusive cell-index ranges of the patch rectangle
    y_range: tuple = (0, 0)
    fine_nodes: np.ndarray | None = field(default=None, repr=False)


def build_level(exponent: int) -> MeshLevel:
    """Build the uniform mesh with 2**exponent cells per direction."""
    if not isinstance(exponent, (int, np.integer)):
        raise TypeError(f"mesh exponent must be an integer, got {exponent!r}")
    if exponent < 0 or exponent > MAX_EXPONENT:
        raise ValueError(
            f"mesh exponent must be in [0, {MAX_EXPONENT}], got {exponent}")
    n = 1 << exponent
    nn = n + 1

    ii, jj = np.meshgrid(np.arange(nn), np.arange(nn))  # jj = iy rows, ii = ix
    node_xy = np.column_stack([(ii / n).ravel(), (jj / n).ravel()])

    ex, ey = np.meshgrid(np.arange(n), np.arange(n))
    ex = ex.ravel()
    ey = ey.ravel()
    sw = ey * nn + ex
    conn = np.column_stack([sw, sw + 1, sw + nn, sw + nn + 1])

    ix = np.arange(nn * nn) % nn
    iy = np.arange(nn * nn) // nn
    interior = np.where((ix > 0) & (ix < n) & (iy > 0) & (iy < n))[0]

    return MeshLevel(exponent=int(exponent), n=n, conn=conn,
                     node_xy=node_xy, interior=interior)


def element_patch(mesh: MeshLevel, cell: int, ell: int,
                  fine: MeshLevel | None = None) -> PatchIndexSet:
    """Cells within Chebyshev index distance ell of ``cell`` (clipped at the boundary).

    ell = 0 is the cell itself. When ``fine`` is given, the patch also carries
    the ids of all fine-mesh nodes lying in the closed patch rectangle.
    """
    if ell < 0:
        raise ValueError(f"patch radius must be >= 0, got {ell}")
    if cell < 0 or cell >= mesh.n_cells:
        raise ValueError(f"cell id {cell} out of range for level {mesh.exponent}")
    n = mesh.n
    cx, cy = cell % n, cell // n
    x0, x1 = max(0, cx - ell), min(n - 1, cx + ell)
    y0, y1 = max(0, cy - ell), min(n - 1, cy + ell)
    xs = np.arange(x0, x1 + 1)
    ys = np.arange(y0, y1 + 1)
    cells = (ys[:, None] * n + xs[None, :]).ravel()

    fine_nodes = None
    if fine is not None:
        if fine.exponent < mesh.exponent:
            raise ValueError("fine level must be at least as fine as the mesh")
        r = 1 << (fine.exponent - mesh.exponent)
        gx = np.arange(x0 * r, (x1 + 1) * r + 1)
        gy = np.arange(y0 * r, (y1 + 1) * r + 1)
        fine_nodes = (gy[:, None] * (fine.n + 1) + gx[None, :]).ravel()

    return PatchIndexSet(center=int(cell), ell=int(ell), cells=cells,
                         x_range=(int(x0), int(x1)), y_range=(int(y0), int(y1)),
                         fine_nodes=fine_nodes)


def refine_map(coarse: MeshLevel, fine: MeshLevel) -> np.ndarray:
    """(n_coarse_cells, 4**dk) array: fine cells covering each coarse cell.

    Rows are ordered row-major in the fine numbering, so nested refinements
    compose: refine_map(a, c) equals refine_map(b, c) gathered over
    refine_map(a, b) up to row-internal ordering.
    """
    dk = fine.exponent - coarse.exponent
    if dk < 0:
        raise ValueError("fine level must be at least as fine as the coarse level")
    r = 1 << dk
    nc, nf = coarse.n, fine.n
    ce = np.arange(coarse.n_cells)
    cx, cy = ce % nc, ce // nc
    ox, oy = np.meshgrid(np.arange(r), np.arange(r))
    ox = ox.ravel()
    oy = oy.ravel()
    rows = (cy[:, None] * r + oy[None, :]) * nf + (cx[:, None] * r + ox[None, :])
    return rows


def interior_index_map(mesh: MeshLevel) -> np.ndarray:
    """Array mapping global node id -> interior dof index (-1 on the boundary)."""
    idx = np.full(mesh.n_nodes, -1, dtype=np.int64)
    idx[mesh.interior] = np.arange(mesh.interior.size)
    return idx
