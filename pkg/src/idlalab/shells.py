"""Concentric shell decomposition of Z^d with cells and tile covers.

The lattice is partitioned into shell 0 = ball(0, h0) and, for j >= 1,
shell j = {E_{j-1} <= |y| < E_j} where E_j = r_j + h_j, h_j = r_j^(1/(d+1))
and the sphere radii r_j solve the meshing recursion

    r_1 - h_1 = h0,      r_{j+1} - h_{j+1} = r_j + h_j.

Each r_j is found by monotone bisection of f(r) = r - r^(1/(d+1)) - E_{j-1},
which is strictly increasing for r >= 1.  Membership tests always go
through the single stored edge array E, so the shells partition the
lattice exactly even though the radii are floats.

A cell is the intersection of a shell with the cone through a ball around
a boundary site; the ray test used everywhere is

    p in cone(z, a)  iff  | (|z|/|p|) p - z | < a

with aperture a = h_j/2 for cells and h_j/5 for the thinner tile cells.
Shell 0 has the whole ball as the cell of its only entry site (the
origin), by convention.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import lattice


class CoverageError(Exception):
    """A site or walker fell outside the built shell table."""


@dataclass(frozen=True)
class ShellTable:
    d: int
    h0: float
    r: np.ndarray        # r[0] = 0.0; r[j] = radius of sphere Sigma_j
    h: np.ndarray        # h[0] = h0;  h[j] = r[j]**(1/(d+1))
    edges: np.ndarray = field(init=False)      # E[j] = outer edge of shell j
    edges_sq: np.ndarray = field(init=False)
    r_sq: np.ndarray = field(init=False)
    inv_hd: np.ndarray = field(init=False)     # 1 / h_j^d, the flash probability

    def __post_init__(self):
        e = self.r + self.h
        object.__setattr__(self, "edges", e)
        object.__setattr__(self, "edges_sq", e * e)
        object.__setattr__(self, "r_sq", self.r * self.r)
        object.__setattr__(self, "inv_hd", 1.0 / self.h ** self.d)

    @property
    def n_shells(self) -> int:
        return len(self.r)

    @property
    def coverage(self) -> float:
        return float(self.edges[-1])

    def inner_edge(self, j: int) -> float:
        """Inner radius of shell j (0 for shell 0)."""
        return 0.0 if j == 0 else float(self.edges[j - 1])

    def to_json(self) -> str:
        return json.dumps({
            "d": self.d,
            "h0": self.h0,
            "r": self.r.tolist(),
            "h": self.h.tolist(),
        })

    @classmethod
    def from_json(cls, text: str) -> "ShellTable":
        obj = json.loads(text)
        return cls(d=obj["d"], h0=obj["h0"],
                   r=np.array(obj["r"], dtype=np.float64),
                   h=np.array(obj["h"], dtype=np.float64))


def _bisect_radius(d: int, target_edge: float) -> float:
    """Root of r - r^(1/(d+1)) = target_edge, bisected to ~1e-12."""
    expo = 1.0 / (d + 1)
    lo = max(1.0, target_edge)
    hi = target_edge + 2.0 * (target_edge + 2.0) ** expo + 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid - mid ** expo < target_edge:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-13 * max(1.0, hi):
            break
    return 0.5 * (lo + hi)


def build_shells(d: int, h0: float, max_radius: float) -> ShellTable:
    """Shell table covering at least radius max_radius.

    h0 must be >= 4; smaller mesh scales break the cell geometry.
    """
    if d < 3:
        raise ValueError(f"dimension must be >= 3, got {d}")
    if h0 < 4:
        raise ValueError(f"h0 must be >= 4, got {h0}")
    r = [0.0]
    h = [float(h0)]
    edge = float(h0)
    while edge < max_radius:
        rj = _bisect_radius(d, edge)
        hj = rj ** (1.0 / (d + 1))
        r.append(rj)
        h.append(hj)
        edge = rj + hj
    return ShellTable(d=d, h0=float(h0), r=np.array(r), h=np.array(h))


def shell_index(p, table: ShellTable) -> int:
    """Index j of the shell containing p; CoverageError outside the table."""
    n2 = float(lattice.norm_sq(p))
    j = int(np.searchsorted(table.edges_sq, n2, side="right"))
    if j >= table.n_shells:
        raise CoverageError(f"site at norm {math.sqrt(n2):.3f} beyond coverage "
                            f"{table.coverage:.3f}")
    return j


def shell_index_of_norms(n2: np.ndarray, table: ShellTable) -> np.ndarray:
    """Vectorized shell_index on squared norms; -1 marks out-of-coverage."""
    j = np.searchsorted(table.edges_sq, n2, side="right")
    return np.where(j >= table.n_shells, -1, j)


def sigma_sites(j: int, table: ShellTable) -> np.ndarray:
    """Sigma_j: the origin for j = 0, else the exterior boundary of
    ball(0, r_j)."""
    if j == 0:
        return np.zeros((1, table.d), dtype=np.int64)
    return lattice.sphere_sites(float(table.r[j]), table.d)


@dataclass(frozen=True)
class CellSpec:
    """Cone-shell intersection around a boundary site.

    kind "cell" uses aperture h_j/2, "tile" uses h_j/5.
    """
    j: int
    center: tuple
    aperture: float


def make_cell(j: int, center, table: ShellTable, kind: str = "cell") -> CellSpec:
    div = {"cell": 2.0, "tile": 5.0}[kind]
    return CellSpec(j=j, center=tuple(int(c) for c in np.asarray(center)),
                    aperture=float(table.h[j]) / div)


def ray_dist_sq(center: np.ndarray, czz: float, p: np.ndarray, n2: float) -> float:
    """Squared distance from (|z|/|p|) p to z.  Frozen formula, mirrored in
    the compiled kernels: t = sqrt(czz / n2); 2 * (czz - t * <p, z>)."""
    t = math.sqrt(czz / n2)
    dot = float(np.dot(p, center))
    v = 2.0 * (czz - t * dot)
    return v if v > 0.0 else 0.0


def cell_contains(cell: CellSpec, p, table: ShellTable) -> bool:
    q = np.asarray(p, dtype=np.int64)
    n2 = float(int((q * q).sum()))
    if cell.j == 0:
        return n2 < table.edges_sq[0]
    if not (table.edges_sq[cell.j - 1] <= n2 < table.edges_sq[cell.j]):
        return False
    c = np.asarray(cell.center, dtype=np.int64)
    czz = float(int((c * c).sum()))
    return ray_dist_sq(c, czz, q, n2) < cell.aperture * cell.aperture


def cell_sites(cell: CellSpec, table: ShellTable) -> np.ndarray:
    """Enumerate the sites of a cell (practical for moderate h_j only:
    scans a bounding box around the cone segment)."""
    c = np.asarray(cell.center, dtype=np.float64)
    if cell.j == 0:
        return lattice.ball_sites(np.zeros(table.d, np.int64), float(table.edges[0]))
    cn = math.sqrt(float((c * c).sum()))
    lo_r, hi_r = table.inner_edge(cell.j), float(table.edges[cell.j])
    pad = cell.aperture * (hi_r / float(table.r[cell.j])) + 2.0
    lo = np.floor(np.minimum(c * (lo_r / cn), c * (hi_r / cn)) - pad).astype(np.int64)
    hi = np.ceil(np.maximum(c * (lo_r / cn), c * (hi_r / cn)) + pad).astype(np.int64)
    axes = [np.arange(a, b + 1, dtype=np.int64) for a, b in zip(lo, hi)]
    grids = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1)
    keep = [cell_contains(cell, row, table) for row in pts]
    return pts[np.array(keep, dtype=bool)]


@dataclass
class TileCover:
    j: int
    centers: np.ndarray          # (M, d), in greedy (lexicographic) order
    n_sigma: int
    spacing: float
    h: float

    @property
    def count_bound_ratio(self) -> float:
        """|centers| * h^(d-1) / |Sigma_j|, the packing-constant estimate."""
        d = self.centers.shape[1]
        return len(self.centers) * self.h ** (d - 1) / self.n_sigma


def tile_centers(j: int, table: ShellTable, spacing_divisor: float = 5.0) -> TileCover:
    """Greedy tile-center selection over Sigma_j.

    Sweeps Sigma_j in lexicographic order and keeps a site iff no kept
    center lies strictly within h_j / spacing_divisor of it.  Every
    boundary site then has a center within that spacing.
    """
    if j < 1:
        raise ValueError("tiles are defined for j >= 1")
    sig = sigma_sites(j, table)
    order = np.lexsort(sig.T[::-1])
    sig = sig[order]
    s = float(table.h[j]) / spacing_divisor
    s2 = s * s
    cs = max(s, 1.0)
    buckets: dict[tuple, list[int]] = {}
    centers: list[np.ndarray] = []
    d = table.d
    offs = np.stack([g.ravel() for g in np.meshgrid(*([np.arange(-1, 2)] * d),
                                                    indexing="ij")], axis=1)
    for row in sig:
        key0 = np.floor(row / cs).astype(np.int64)
        ok = True
        for o in offs:
            lst = buckets.get(tuple((key0 + o).tolist()))
            if not lst:
                continue
            for ci in lst:
                dd = row - centers[ci]
                if float((dd * dd).sum()) < s2:
                    ok = False
                    break
            if not ok:
                break
        if ok:
            buckets.setdefault(tuple(key0.tolist()), []).append(len(centers))
            centers.append(row.copy())
    arr = np.array(centers, dtype=np.int64) if centers else np.empty((0, d), np.int64)
    return TileCover(j=j, centers=arr, n_sigma=len(sig), spacing=s,
                     h=float(table.h[j]))


def tile_sites(cover: TileCover, ci: int, table: ShellTable) -> np.ndarray:
    """Sites of the tile at cover.centers[ci]: Sigma_j within the thin cone."""
    cell = make_cell(cover.j, cover.centers[ci], table, kind="tile")
    sig = sigma_sites(cover.j, table)
    keep = [cell_contains(cell, row, table) for row in sig]
    return sig[np.array(keep, dtype=bool)]


def covering_report(j: int, table: ShellTable,
                    spacing_divisor: float = 5.0) -> dict:
    """Exhaustive scan of shell j (python path; moderate radii only).

    Checks, for every site p of shell j:
      * covered: p lies in some thin cone around a chosen tile center;
      * shared:  some center z has p in the wide cone of EVERY site of
                 the tile at z.
    Returns counts plus the tile-center packing data.
    """
    cover = tile_centers(j, table, spacing_divisor)
    lo, hi = table.inner_edge(j), float(table.edges[j])
    shell = lattice.annulus_sites(lo, hi, table.d)
    tiles = {ci: None for ci in range(len(cover.centers))}
    uncovered = 0
    unshared = 0
    half = float(table.h[j]) / 2.0
    fifth = float(table.h[j]) / 5.0
    csq = (cover.centers.astype(np.float64) ** 2).sum(axis=1)
    for p in shell:
        n2 = float(int((p.astype(np.int64) ** 2).sum()))
        cov = False
        shr = False
        for ci in range(len(cover.centers)):
            c = cover.centers[ci]
            rd = ray_dist_sq(c, csq[ci], p, n2)
            if rd < fifth * fifth:
                cov = True
            if rd < half * half:
                if tiles[ci] is None:
                    tiles[ci] = [(y, float(int((y * y).sum())))
                                 for y in tile_sites(cover, ci, table)]
                if all(ray_dist_sq(y, yzz, p, n2) < half * half
                       for y, yzz in tiles[ci]):
                    shr = True
            if cov and shr:
                break
        uncovered += not cov
        unshared += not shr
    return {"j": j, "shell_sites": len(shell), "sigma_sites": cover.n_sigma,
            "centers": len(cover.centers), "uncovered": uncovered,
            "unshared": unshared, "spacing": cover.spacing}
