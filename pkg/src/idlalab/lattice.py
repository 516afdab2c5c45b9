"""Euclidean lattice geometry on Z^d, d >= 3.

Balls are open: ball(x, r) = {y : |y - x| < r}.  Membership tests compare
the integer squared norm against the squared real radius, so a site is
never classified differently by two code paths that use the same radius.
The exterior boundary of a site set L is the set of sites outside L with
at least one nearest neighbor inside L.
"""

from __future__ import annotations

import math
from typing import Iterable, Iterator

import numpy as np

# Refuse enumerations beyond this many sites (configurable per call).
DEFAULT_SITE_BUDGET = 80_000_000


class MemoryBudgetError(Exception):
    """Raised when an enumeration would exceed its site budget."""


def unit_vectors(d: int) -> np.ndarray:
    """The 2d signed unit vectors, ordered (+e1, -e1, +e2, -e2, ...)."""
    out = np.zeros((2 * d, d), dtype=np.int64)
    for a in range(d):
        out[2 * a, a] = 1
        out[2 * a + 1, a] = -1
    return out


def norm_sq(p) -> int:
    a = np.asarray(p, dtype=np.int64)
    return int((a * a).sum())


def norm(p) -> float:
    return math.sqrt(norm_sq(p))


def ball_volume_constant(d: int) -> float:
    """Lebesgue volume of the unit ball in R^d."""
    return math.pi ** (d / 2) / math.gamma(d / 2 + 1)


def _check_d(d: int) -> None:
    if d < 3:
        raise ValueError(f"dimension must be >= 3, got {d}")


def ball_sites(center, radius: float, d: int | None = None,
               budget: int = DEFAULT_SITE_BUDGET) -> np.ndarray:
    """All sites y with |y - center| < radius, as an (M, d) int64 array.

    Rows are in lexicographic order.  radius <= 0 gives an empty set.
    """
    c = np.asarray(center, dtype=np.int64)
    if d is None:
        d = c.size
    _check_d(d)
    if radius <= 0:
        return np.empty((0, d), dtype=np.int64)
    est = ball_volume_constant(d) * (radius + 1.0) ** d
    if est > budget:
        raise MemoryBudgetError(
            f"ball of radius {radius} in d={d} holds ~{est:.2e} sites, budget {budget}")
    k = math.ceil(radius)
    axes = [np.arange(-k, k + 1, dtype=np.int64)] * d
    grids = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1)
    keep = (pts * pts).sum(axis=1) < radius * radius
    return pts[keep] + c


def _count_z_axis(q: np.ndarray) -> np.ndarray:
    """Per entry, the number of integers z with z*z < q.  Exact: the float
    sqrt is only a starting guess, the boundary is settled by integer
    squaring (int64 compares to float64 exactly below 2**53)."""
    out = np.zeros(q.shape, dtype=np.int64)
    pos = q > 0
    zmax = np.floor(np.sqrt(np.maximum(q, 0.0))).astype(np.int64)
    zmax[zmax * zmax >= q] -= 1
    zmax[(zmax + 1) * (zmax + 1) < q] += 1
    out[pos] = 2 * zmax[pos] + 1
    return out


def _count_r2(d: int, r2: float) -> int:
    if r2 <= 0:
        return 0
    k = math.isqrt(int(r2)) + 1
    ax = np.arange(-k, k + 1, dtype=np.int64)
    if d == 1:
        return int(_count_z_axis(np.array([r2]))[0])
    if d == 2:
        return int(_count_z_axis(r2 - (ax * ax).astype(np.float64)).sum())
    total = 0
    for x0 in ax:
        total += _count_r2(d - 1, r2 - float(x0 * x0))
    return total


def ball_count(d: int, radius: float) -> int:
    """|{y in Z^d : |y| < radius}| without materializing the sites."""
    _check_d(d)
    if radius <= 0:
        return 0
    return _count_r2(d, radius * radius)


def iter_ball_chunks(d: int, radius: float,
                     chunk: int = 4_000_000) -> Iterator[np.ndarray]:
    """Yield the sites of ball(0, radius) in slabs along the first axis.

    Lets callers scan balls too large for one allocation.
    """
    _check_d(d)
    k = math.ceil(radius)
    r2 = radius * radius
    ax = [np.arange(-k, k + 1, dtype=np.int64)] * (d - 1)
    grids = np.meshgrid(*ax, indexing="ij")
    rest = np.stack([g.ravel() for g in grids], axis=1)
    rest_sq = (rest * rest).sum(axis=1)
    buf = []
    n_buf = 0
    for x0 in range(-k, k + 1):
        keep = rest_sq < r2 - x0 * x0
        m = int(keep.sum())
        if m == 0:
            continue
        block = np.empty((m, d), dtype=np.int64)
        block[:, 0] = x0
        block[:, 1:] = rest[keep]
        buf.append(block)
        n_buf += m
        if n_buf >= chunk:
            yield np.concatenate(buf, axis=0)
            buf, n_buf = [], 0
    if buf:
        yield np.concatenate(buf, axis=0)


def _as_site_set(sites) -> set[tuple]:
    if isinstance(sites, np.ndarray):
        return set(map(tuple, sites.tolist()))
    return set(map(tuple, sites))


def boundary(sites, d: int | None = None) -> np.ndarray:
    """Exterior boundary: sites not in L adjacent to a site of L.

    Returns an (M, d) array in lexicographic order; empty input gives an
    empty boundary.
    """
    arr = np.asarray(sites, dtype=np.int64)
    if arr.size == 0:
        if d is None:
            raise ValueError("need d for an empty site set")
        return np.empty((0, d), dtype=np.int64)
    if arr.ndim == 1:
        arr = arr[None, :]
    d = arr.shape[1]
    inside = _as_site_set(arr)
    out = set()
    for v in unit_vectors(d):
        for row in (arr + v).tolist():
            t = tuple(row)
            if t not in inside:
                out.add(t)
    if not out:
        return np.empty((0, d), dtype=np.int64)
    res = np.array(sorted(out), dtype=np.int64)
    return res


def sphere_sites(radius: float, d: int) -> np.ndarray:
    """Exterior boundary of ball(0, radius) without enumerating the ball.

    A site belongs iff |z| >= radius and some neighbor has |.| < radius;
    such sites satisfy radius <= |z| < radius + 1.
    """
    _check_d(d)
    if radius <= 0:
        return np.zeros((1, d), dtype=np.int64) if radius == 0 else np.empty((0, d), np.int64)
    r2 = radius * radius
    shell = annulus_sites(radius, radius + 1.0, d)
    n2 = (shell * shell).sum(axis=1)
    best = np.full(len(shell), np.iinfo(np.int64).max)
    for a in range(d):
        for s in (1, -1):
            nb = n2 - 2 * s * shell[:, a] + 1
            best = np.minimum(best, nb)
    return shell[best < r2]


def annulus_sites(r: float, R: float, d: int,
                  budget: int = DEFAULT_SITE_BUDGET) -> np.ndarray:
    """Sites with r <= |y| < R, lexicographic order."""
    _check_d(d)
    if R <= 0 or R <= r:
        return np.empty((0, d), dtype=np.int64)
    est = ball_volume_constant(d) * ((R + 1.0) ** d - max(r - 1.0, 0.0) ** d)
    if est > budget:
        raise MemoryBudgetError(f"annulus ({r},{R}) in d={d} ~{est:.2e} sites over budget")
    k = math.ceil(R)
    axes = [np.arange(-k, k + 1, dtype=np.int64)] * d
    grids = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1)
    q = (pts * pts).sum(axis=1).astype(np.float64)
    keep = (q >= r * r) & (q < R * R)
    return pts[keep]


def inward_neighbor(z) -> np.ndarray:
    """The neighbor obtained by moving one maximal coordinate toward 0.

    Among coordinates of maximal absolute value the lowest index is used.
    The returned site w satisfies |w| <= |z| - 1/(2 sqrt d); z must be
    nonzero.
    """
    a = np.asarray(z, dtype=np.int64).copy()
    if not a.any():
        raise ValueError("origin has no inward neighbor")
    i = int(np.argmax(np.abs(a)))
    a[i] -= 1 if a[i] > 0 else -1
    return a


def inward_neighbors(zs: np.ndarray) -> np.ndarray:
    """Vectorized inward_neighbor over an (M, d) array of nonzero sites."""
    a = np.asarray(zs, dtype=np.int64).copy()
    idx = np.argmax(np.abs(a), axis=1)
    rows = np.arange(len(a))
    vals = a[rows, idx]
    a[rows, idx] = vals - np.sign(vals)
    return a
