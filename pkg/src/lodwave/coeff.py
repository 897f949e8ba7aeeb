"""Piecewise-constant coefficient fields on the epsilon grid.

A field lives on a uniform 2**eps x 2**eps cell grid, one value per cell,
row-major from the bottom-left cell. Values are strictly positive.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .grid import MeshLevel


@dataclass(frozen=True)
class CoefficientField:
    eps_exponent: int
    values: np.ndarray = field(repr=False)  # flat, length 4**eps_exponent
    lo: float
    hi: float
    provenance: str = ""

    @property
    def n(self) -> int:
        return 1 << self.eps_exponent

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(f"eps={self.eps_exponent};".encode())
        h.update(np.ascontiguousarray(self.values, dtype=np.float64).tobytes())
        return h.hexdigest()


def _validate(eps_exponent, values, lo, hi):
    if eps_exponent < 0:
        raise ValueError(f"eps exponent must be >= 0, got {eps_exponent}")
    n = 1 << eps_exponent
    values = np.asarray(values, dtype=np.float64).ravel()
    if values.size != n * n:
        raise ValueError(f"expected {n * n} cell values, got {values.size}")
    if not np.all(np.isfinite(values)):
        raise ValueError("coefficient values must be finite")
    if values.min() <= 0.0:
        raise ValueError("coefficient values must be strictly positive")
    if not (0.0 < lo <= hi):
        raise ValueError(f"invalid declared range [{lo}, {hi}]")
    if values.min() < lo - 1e-12 or values.max() > hi + 1e-12:
        raise ValueError("values fall outside the declared [lo, hi] range")
    return values


def make_field(eps_exponent, values, lo, hi, provenance="") -> CoefficientField:
    values = _validate(eps_exponent, values, lo, hi)
    return CoefficientField(eps_exponent=int(eps_exponent), values=values,
                            lo=float(lo), hi=float(hi), provenance=provenance)


def constant_field(eps_exponent: int, value: float) -> CoefficientField:
    n = 1 << eps_exponent
    return make_field(eps_exponent, np.full(n * n, float(value)), value, value,
                      provenance=f"constant({value})")


def random_field(eps_exponent: int, lo: float, hi: float, seed: int) -> CoefficientField:
    """I.i.d. uniform[lo, hi] values per cell, from the seeded numpy PCG64 stream."""
    if not (0.0 < lo <= hi):
        raise ValueError(f"invalid range [{lo}, {hi}]")
    n = 1 << eps_exponent
    rng = np.random.default_rng(seed)
    vals = rng.uniform(lo, hi, size=n * n)
    return make_field(eps_exponent, vals, lo, hi,
                      provenance=f"random(numpy-pcg64, seed={seed}, range=[{lo},{hi}])")


def structured_field(eps_exponent: int, pattern: str, lo: float = 1.0,
                     hi: float = 18.0, block: int = 8, width: int = 4,
                     count: int = 9, size: int = 4) -> CoefficientField:
    """Deterministic structured fields: 'checkerboard', 'stripes', 'inclusions'.

    checkerboard: blocks of ``block`` cells alternating lo/hi.
    stripes: horizontal bands of ``width`` cells alternating lo/hi.
    inclusions: lo background with ``count`` square hi-valued inclusions of
        ``size`` cells placed on a regular staggered lattice.
    """
    if not (0.0 < lo <= hi):
        raise ValueError(f"invalid range [{lo}, {hi}]")
    n = 1 << eps_exponent
    cx, cy = np.meshgrid(np.arange(n), np.arange(n))
    if pattern == "checkerboard":
        if block < 1:
            raise ValueError("block must be >= 1")
        mask = ((cx // block) + (cy // block)) % 2 == 1
    elif pattern == "stripes":
        if width < 1:
            raise ValueError("width must be >= 1")
        mask = (cy // width) % 2 == 1
    elif pattern == "inclusions":
        if size < 1 or count < 0:
            raise ValueError("need size >= 1 and count >= 0")
        mask = np.zeros((n, n), dtype=bool)
        side = max(1, int(np.ceil(np.sqrt(max(count, 1)))))
        placed = 0
        for j in range(side):
            for i in range(side):
                if placed >= count:
                    break
                # staggered lattice, offsets keep inclusions off the boundary
                x0 = int((i + 0.5) * n / side - size / 2 + (j % 2) * size / 2)
                y0 = int((j + 0.5) * n / side - size / 2)
                x0 = min(max(x0, 0), max(n - size, 0))
                y0 = min(max(y0, 0), max(n - size, 0))
                mask[y0:y0 + size, x0:x0 + size] = True
                placed += 1
    else:
        raise ValueError(f"unknown pattern {pattern!r}")
    vals = np.where(mask, hi, lo).ravel()
    return make_field(eps_exponent, vals, lo, hi,
                      provenance=f"structured({pattern}, range=[{lo},{hi}])")


def rescale_field(fld: CoefficientField, new_lo: float, new_hi: float) -> CoefficientField:
    """Affine rescale anchored at the declared [lo, hi] bounds.

    Attained extrema map exactly onto the new bounds. A degenerate field
    (all values identical) maps to the constant new_lo by convention.
    """
    if not (0.0 < new_lo <= new_hi):
        raise ValueError(f"invalid target range [{new_lo}, {new_hi}]")
    vmin, vmax = fld.values.min(), fld.values.max()
    if vmin == vmax:
        vals = np.full_like(fld.values, new_lo)
    else:
        scale = (new_hi - new_lo) / (fld.hi - fld.lo)
        vals = new_lo + (fld.values - fld.lo) * scale
    return make_field(fld.eps_exponent, vals, new_lo, new_hi,
                      provenance=fld.provenance + f" |> rescale([{new_lo},{new_hi}])")


def values_on_fine(fld: CoefficientField, fine: MeshLevel) -> np.ndarray:
    """Per-fine-cell values (the fine level must resolve the epsilon grid)."""
    if fine.exponent < fld.eps_exponent:
        raise ValueError(
            f"fine level {fine.exponent} does not resolve eps level {fld.eps_exponent}")
    dk = fine.exponent - fld.eps_exponent
    nf = fine.n
    fe = np.arange(fine.n_cells)
    cx = (fe % nf) >> dk
    cy = (fe // nf) >> dk
    return fld.values[cy * fld.n + cx]


def save_field(fld: CoefficientField, path) -> None:
    """Write the raster format: 'nx ny' header line, then one value per line."""
    with open(path, "w") as fh:
        fh.write(f"{fld.n} {fld.n}\n")
        for v in fld.values:
            fh.write(f"{v:.17g}\n")


def load_field(path, lo: float | None = None, hi: float | None = None) -> CoefficientField:
    """Parse the raster format; errors name the offending line (1-based)."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ValueError(f"{path}: line 1: empty file, expected 'nx ny' header")
    head = lines[0].split()
    if len(head) != 2:
        raise ValueError(f"{path}: line 1: expected 'nx ny' header, got {lines[0]!r}")
    try:
        nx, ny = int(head[0]), int(head[1])
    except ValueError:
        raise ValueError(f"{path}: line 1: non-integer grid size in {lines[0]!r}") from None
    if nx != ny or nx < 1 or (nx & (nx - 1)) != 0:
        raise ValueError(f"{path}: line 1: grid must be square with a power-of-two "
                         f"side, got {nx} x {ny}")
    vals = np.empty(nx * ny)
    k = 0
    for ln, raw in enumerate(lines[1:], start=2):
        s = raw.strip()
        if not s or s.startswith("#"):
            continue
        for tok in s.split():
            if k >= vals.size:
                raise ValueError(f"{path}: line {ln}: more than {vals.size} values")
            try:
                v = float(tok)
            except ValueError:
                raise ValueError(f"{path}: line {ln}: not a number: {tok!r}") from None
            if not np.isfinite(v) or v <= 0.0:
                raise ValueError(f"{path}: line {ln}: values must be positive and "
                                 f"finite, got {tok}")
            vals[k] = v
            k += 1
    if k != vals.size:
        raise ValueError(f"{path}: line {len(lines)}: expected {vals.size} values, "
                         f"got {k}")
    eps_exponent = int(np.log2(nx))
    return make_field(eps_exponent, vals,
                      lo if lo is not None else vals.min(),
                      hi if hi is not None else vals.max(),
                      provenance=f"file({path})")
