"""Seeded simple-random-walk engine and the per-shell flashing draws.

Hot paths (bulk walks, flash endpoint sampling) run through the
compiled kernels; the python helpers here are the readable reference
used by small tests and by callers that need custom stop predicates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels, rng, shells

STEP_CAP = 10 ** 10


class StepCapError(RuntimeError):
    """A walk exceeded the configured step cap: caller bug, not chance."""


@dataclass
class Trajectory:
    start: np.ndarray
    points: list = field(default_factory=list)  # positions after each step
    consumed: int = 0

    def __len__(self) -> int:
        return len(self.points)

    def end(self) -> np.ndarray:
        return self.points[-1] if self.points else self.start

    def check(self) -> None:
        prev = self.start
        for p in self.points:
            if int(np.abs(np.asarray(p) - prev).sum()) != 1:
                raise ValueError("non nearest-neighbor step in trajectory")
            prev = p
        if not 0 <= self.consumed <= len(self.points):
            raise ValueError("consumed prefix out of range")


def walk_until(stream: rng.Stream, start, stop, record: bool = False,
               step_cap: int = STEP_CAP):
    """Walk from start until stop(site) is true.

    Returns (end, steps) or (end, trajectory, steps) when recording.
    stop is evaluated at the start too (zero-step walks are legal).
    """
    p = np.array(start, dtype=np.int64)
    traj = Trajectory(start=p.copy()) if record else None
    steps = 0
    while not stop(p):
        axis, sign = stream.step(p.size)
        p[axis] += sign
        steps += 1
        if record:
            traj.points.append(p.copy())
        if steps > step_cap:
            raise StepCapError(f"walk exceeded {step_cap} steps")
    if record:
        return p, traj, steps
    return p, steps


@dataclass(frozen=True)
class FlashDraw:
    """One shell's flashing randomness: the flash bit X, the
    ball-vs-annulus bit Y, and the stopping radius R."""
    x: bool
    y: bool
    radius: float


def draw_flash(stream: rng.Stream, j: int, table: shells.ShellTable) -> FlashDraw:
    """Consume the three flash uniforms for shell j, kernel order."""
    u1 = stream.uniform()
    u2 = stream.uniform()
    u3 = stream.uniform()
    x = u1 < float(table.inv_hd[j])
    y = True if j == 0 else u2 < 0.5
    radius = float(table.h[j]) * u3 ** (1.0 / table.d)
    return FlashDraw(x=x, y=y, radius=radius)


def flash_stop(stream: rng.Stream, z_j, draw: FlashDraw, j: int,
               table: shells.ShellTable, step_cap: int = STEP_CAP):
    """Walk from z_j to the flash position S(sigma_j).

    Ball radii in (0, 1] stop on the first step (the start is strictly
    inside the ball, so the exit is one uniform neighbor).  A start
    already outside the annulus, or a zero radius, stops immediately at
    z_j.  Returns (site, steps, flashed_in_cell in the sense of the h/2
    cone test).
    """
    z = np.array(z_j, dtype=np.int64)
    p = z.copy()
    steps = 0
    zn2 = float(int((z * z).sum()))
    if draw.x:
        pass
    elif draw.y:
        rho = min(draw.radius, float(table.edges[j]) - math.sqrt(zn2))
        # start is strictly inside B(z, rho) whenever rho > 0, so the
        # exit is well defined; rho <= 1 stops on the first step
        if rho > 0.0:
            rho2 = rho * rho
            rel2 = 0
            while rel2 < rho2:
                axis, sign = stream.step(table.d)
                rel2 -= int((p[axis] - z[axis]) ** 2)
                p[axis] += sign
                rel2 += int((p[axis] - z[axis]) ** 2)
                steps += 1
                if steps > step_cap:
                    raise StepCapError("flash ball walk exceeded cap")
    else:
        a = float(table.r[j]) - draw.radius
        b = float(table.r[j]) + draw.radius
        b2 = b * b
        if zn2 < b2:
            a2 = a * a
            n2 = int(zn2)
            while a2 <= n2 < b2:
                axis, sign = stream.step(table.d)
                n2 -= int(p[axis] ** 2)
                p[axis] += sign
                n2 += int(p[axis] ** 2)
                steps += 1
                if steps > step_cap:
                    raise StepCapError("flash annulus walk exceeded cap")
    cell = shells.make_cell(j, z, table, "cell")
    return p, steps, shells.cell_contains(cell, p, table)


def run_region_walks(seed: int, d: int, samples: int, start,
                     r_out: float, r_in: float | None = None,
                     occ_window: tuple[float, float] | None = None,
                     step_cap: int = STEP_CAP):
    """Batch of walks stopped at |p| >= r_out (or |p| < r_in if given).

    Returns (ends, steps, occ_counts); occ_counts[s] is the time walk s
    spent with occ_window[0] <= |p|^2 < occ_window[1] before stopping,
    counting t=0.
    """
    ends = np.zeros((samples, d), dtype=np.int64)
    steps = np.zeros(samples, dtype=np.int64)
    occt = np.zeros(samples, dtype=np.int64)
    lo, hi = occ_window if occ_window else (0.0, 0.0)
    r2_in = -1.0 if r_in is None else float(r_in) ** 2
    status = kernels.region_walks(seed, d, samples,
                                  np.asarray(start, dtype=np.int64),
                                  float(r_out) ** 2, r2_in,
                                  float(lo), float(hi),
                                  step_cap, ends, steps, occt)
    if status == 2:
        raise StepCapError("region walk exceeded step cap")
    return ends, steps, occt


def _row_keys(rows: np.ndarray) -> np.ndarray:
    """One hashable key per site row (raw bytes; injective for any d)."""
    a = np.ascontiguousarray(rows, dtype=np.int64)
    return a.view(np.dtype((np.bytes_, a.shape[1] * 8))).ravel()


@dataclass
class HittingProfile:
    j: int
    h: float
    z_j: np.ndarray
    sites: np.ndarray       # the cell C(z_j), (M, d)
    scaled: np.ndarray      # h_j^d * empirical hit probability, per site
    samples: int
    in_cell_fraction: float

    @property
    def smin(self) -> float:
        return float(self.scaled.min())

    @property
    def smax(self) -> float:
        return float(self.scaled.max())

    @property
    def ratio(self) -> float:
        return self.smax / self.smin if self.smin > 0 else math.inf


def axis_sigma_site(j: int, table: shells.ShellTable) -> np.ndarray:
    """The positive-x-axis site of Sigma_j (deterministic test anchor)."""
    z = np.zeros(table.d, dtype=np.int64)
    m = int(math.floor(float(table.r[j]))) + 1
    z[0] = m
    if not (m >= float(table.r[j]) and (m - 1) < float(table.r[j])):
        raise ValueError(f"axis site not on the entry sphere of shell {j}")
    return z


def uniform_hitting_profile(seed: int, j: int, table: shells.ShellTable,
                            samples: int = 10 ** 6, z_j=None,
                            step_cap: int = STEP_CAP) -> HittingProfile:
    """Monte Carlo of h_j^d * P(flash position = z*) over the cell C(z_j).

    Sites of the cell never hit get scaled probability 0; the lower
    bound check is simply smin > 0.
    """
    if z_j is None:
        z_j = axis_sigma_site(j, table)
    z = np.asarray(z_j, dtype=np.int64)
    d = table.d
    sites = np.zeros((samples, d), dtype=np.int64)
    incell = np.zeros(samples, dtype=np.uint8)
    in_edge = table.inner_edge(j)
    status = kernels.flash_profile(
        seed, d, samples, z, j, float(table.r[j]), float(table.edges[j]),
        float(table.edges_sq[j]), in_edge * in_edge, float(table.h[j]),
        float(table.inv_hd[j]), (float(table.h[j]) * 0.5) ** 2, 1.0 / d,
        step_cap, sites, incell)
    if status == 2:
        raise StepCapError("flash profile walk exceeded step cap")
    hit = sites[incell == 1]
    cell = shells.make_cell(j, z, table, "cell")
    cell_rows = shells.cell_sites(cell, table)
    # count hits per cell row on a dense grid over the cell bounding box
    lo = cell_rows.min(axis=0)
    dims = tuple(int(v) for v in cell_rows.max(axis=0) - lo + 1)
    rows_flat = np.ravel_multi_index(tuple((cell_rows - lo).T), dims)
    rel = hit - lo
    if np.any(rel < 0) or np.any(rel >= np.asarray(dims)):
        raise AssertionError("flash endpoint marked in-cell but outside C(z_j)")
    hit_flat = np.ravel_multi_index(tuple(rel.T), dims)
    member = np.zeros(int(np.prod(dims)), dtype=bool)
    member[rows_flat] = True
    if not member[hit_flat].all():
        raise AssertionError("flash endpoint marked in-cell but outside C(z_j)")
    counts = np.bincount(hit_flat, minlength=member.size)[rows_flat]
    hd = float(table.h[j]) ** d
    return HittingProfile(j=j, h=float(table.h[j]), z_j=z, sites=cell_rows,
                          scaled=hd * counts / samples, samples=samples,
                          in_cell_fraction=float(incell.mean()))
