"""Exact discrete potential theory on finite domains.

Everything funnels through one red-black SOR relaxation on a masked
box grid: restricted Green columns, exit distributions via the
last-step identity, harmonic extensions with prescribed boundary
values, the mean-value discrepancy, the annulus occupation-time
expansion, and free-Green asymptotics on a corrected box.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import lattice
from .walks import STEP_CAP, run_region_walks

SITE_CAP = 2_000_000


class SolverError(RuntimeError):
    def __init__(self, message: str, residual: float = math.nan):
        super().__init__(message)
        self.residual = residual


def _neighbor_sum(u: np.ndarray) -> np.ndarray:
    s = np.zeros_like(u)
    for ax in range(u.ndim):
        pre = (slice(None),) * ax
        s[pre + (slice(1, None),)] += u[pre + (slice(None, -1),)]
        s[pre + (slice(None, -1),)] += u[pre + (slice(1, None),)]
    return s


def _parity(shape) -> np.ndarray:
    acc = np.zeros(shape, dtype=np.int8)
    for ax, m in enumerate(shape):
        idx = np.arange(m, dtype=np.int8).reshape(
            (1,) * ax + (m,) + (1,) * (len(shape) - ax - 1))
        acc = acc + idx
    return (acc & 1).astype(bool)


def relax(u: np.ndarray, mask: np.ndarray, b: np.ndarray,
          tol: float = 1e-12, omega: float | None = None,
          max_sweeps: int | None = None, check_every: int = 16):
    """Red-black SOR on (I - P)u = b over mask; entries outside mask
    (prescribed boundary values) are never written.

    The update keeps the neighbor average as an exact division so a
    constant state with matching boundary is an exact fixed point.
    """
    two_d = 2.0 * u.ndim
    m = max(u.shape) - 2
    if omega is None:
        omega = 1.0 if m <= 1 else 2.0 / (1.0 + math.sin(math.pi / (m + 1)))
    if max_sweeps is None:
        max_sweeps = 30 * max(m, 1) + 500
    even = _parity(u.shape)
    red = mask & even
    blk = mask & ~even
    sweeps = 0
    while True:
        s = _neighbor_sum(u)
        res = float(np.abs((b + s / two_d - u))[mask].max(initial=0.0))
        if res <= tol:
            return res, sweeps
        if sweeps >= max_sweeps:
            raise SolverError(
                f"relaxation stalled at residual {res:.3e} after "
                f"{sweeps} sweeps (target {tol:.1e})", residual=res)
        for _ in range(check_every):
            for color in (red, blk):
                s = _neighbor_sum(u)
                np.copyto(u, (1.0 - omega) * u + omega * (b + s / two_d),
                          where=color)
            sweeps += 1


@dataclass
class GridSolve:
    lo: np.ndarray
    u: np.ndarray
    mask: np.ndarray
    residual: float
    sweeps: int

    def values(self, pts) -> np.ndarray:
        idx = np.asarray(pts, dtype=np.int64) - self.lo
        return self.u[tuple(idx.T)]

    def value(self, p) -> float:
        return float(self.values(np.asarray(p, dtype=np.int64)[None])[0])


def _grid_frame(sites: np.ndarray, pad: int = 1):
    sites = np.asarray(sites, dtype=np.int64)
    lo = sites.min(axis=0) - pad
    shape = tuple((sites.max(axis=0) - lo + pad + 1).tolist())
    mask = np.zeros(shape, dtype=bool)
    mask[tuple((sites - lo).T)] = True
    return lo, shape, mask


def _check_cap(n_sites: int, cap: int) -> None:
    if n_sites > cap:
        raise SolverError(f"domain of {n_sites} sites exceeds the "
                          f"{cap}-site cap")


def _norm_sq_grid(lo: np.ndarray, shape) -> np.ndarray:
    acc = np.zeros(shape, dtype=np.float64)
    for ax, m in enumerate(shape):
        c = (np.arange(m, dtype=np.float64) + float(lo[ax])) ** 2
        acc = acc + c.reshape((1,) * ax + (m,) + (1,) * (len(shape) - ax - 1))
    return acc


# ------------------------------------------------------------ Green columns

@dataclass
class GreenColumn:
    sites: np.ndarray
    y: np.ndarray
    values: np.ndarray
    residual: float
    sweeps: int
    grid: GridSolve

    def value(self, x) -> float:
        return self.grid.value(x)


def solve_green(sites: np.ndarray, y, cap: int = SITE_CAP,
                tol: float = 1e-12) -> GreenColumn:
    """Column G_Lambda(., y): expected visits to y before leaving the
    site set, one value per input row."""
    sites = np.asarray(sites, dtype=np.int64)
    _check_cap(len(sites), cap)
    y = np.asarray(y, dtype=np.int64)
    lo, shape, mask = _grid_frame(sites)
    idx = y - lo
    if np.any(idx < 0) or np.any(idx >= shape) or not mask[tuple(idx)]:
        raise ValueError("source y must belong to the domain")
    u = np.zeros(shape, dtype=np.float64)
    b = np.zeros(shape, dtype=np.float64)
    b[tuple(y - lo)] = 1.0
    res, sweeps = relax(u, mask, b, tol=tol)
    grid = GridSolve(lo=lo, u=u, mask=mask, residual=res, sweeps=sweeps)
    return GreenColumn(sites=sites, y=y, values=grid.values(sites),
                       residual=res, sweeps=sweeps, grid=grid)


def expected_exit_time(sites: np.ndarray, cap: int = SITE_CAP,
                       tol: float = 1e-12) -> GridSolve:
    """E_x[exit time] for every x: solves (I - P)w = 1 on the domain."""
    sites = np.asarray(sites, dtype=np.int64)
    _check_cap(len(sites), cap)
    lo, shape, mask = _grid_frame(sites)
    u = np.zeros(shape, dtype=np.float64)
    b = np.where(mask, 1.0, 0.0)
    res, sweeps = relax(u, mask, b, tol=tol)
    return GridSolve(lo=lo, u=u, mask=mask, residual=res, sweeps=sweeps)


# --------------------------------------------------------- exit distribution

@dataclass
class ExitDistribution:
    start: np.ndarray
    boundary: np.ndarray
    probs: np.ndarray
    mass: float
    residual: float

    def prob(self, z) -> float:
        z = np.asarray(z, dtype=np.int64)
        hit = np.all(self.boundary == z, axis=1)
        return float(self.probs[hit][0]) if hit.any() else 0.0


def exit_distribution(sites: np.ndarray, start, cap: int = SITE_CAP,
                      tol: float = 1e-12,
                      mass_tol: float = 1e-10) -> ExitDistribution:
    """Hitting law on the exterior boundary from the last-step identity
    P(exit at z) = (1/2d) * sum of G(start, y) over in-domain neighbors
    y of z."""
    sites = np.asarray(sites, dtype=np.int64)
    col = solve_green(sites, start, cap=cap, tol=tol)
    bnd = lattice.boundary(sites, sites.shape[1])
    d = sites.shape[1]
    res = col.residual
    for attempt in range(3):
        probs = np.zeros(len(bnd), dtype=np.float64)
        g = col.grid
        shp = np.asarray(g.u.shape, dtype=np.int64)
        for ax in range(d):
            for sgn in (-1, 1):
                nb = bnd.copy()
                nb[:, ax] += sgn
                idx = nb - g.lo
                ok = np.all((idx >= 0) & (idx < shp), axis=1)
                vals = np.zeros(len(bnd))
                vals[ok] = g.u[tuple(idx[ok].T)]
                probs += vals
        probs /= 2.0 * d
        mass = float(probs.sum())
        if abs(mass - 1.0) <= mass_tol:
            break
        res, extra = relax(g.u, g.mask, _unit_source(g, col.y),
                           tol=tol / 10.0 ** (attempt + 1))
    else:
        raise SolverError(f"exit mass {mass!r} off unity past tolerance",
                          residual=res)
    return ExitDistribution(start=np.asarray(start, dtype=np.int64),
                            boundary=bnd, probs=probs, mass=mass,
                            residual=res)


def _unit_source(grid: GridSolve, y: np.ndarray) -> np.ndarray:
    b = np.zeros_like(grid.u)
    b[tuple(np.asarray(y, dtype=np.int64) - grid.lo)] = 1.0
    return b


# -------------------------------------------------------- harmonic extension

def harmonic_extension(sites: np.ndarray, ring: np.ndarray,
                       ring_values: np.ndarray, cap: int = SITE_CAP,
                       tol: float = 1e-12) -> GridSolve:
    """Solves the Dirichlet problem: harmonic inside the site set,
    prescribed values on its exterior boundary."""
    sites = np.asarray(sites, dtype=np.int64)
    _check_cap(len(sites), cap)
    ring = np.asarray(ring, dtype=np.int64)
    ring_values = np.asarray(ring_values, dtype=np.float64)
    lo, shape, mask = _grid_frame(sites)
    init = float(ring_values.mean()) if len(ring_values) else 0.0
    u = np.full(shape, init, dtype=np.float64)
    u[~mask] = 0.0
    u[tuple((ring - lo).T)] = ring_values
    b = np.zeros(shape, dtype=np.float64)
    res, sweeps = relax(u, mask, b, tol=tol)
    return GridSolve(lo=lo, u=u, mask=mask, residual=res, sweeps=sweeps)


# ------------------------------------------------------ mean-value identity

@dataclass
class MeanValueReport:
    d: int
    n: float
    delta_n: float
    r_n: float
    lam_size: int
    inner_count: int
    p0: float
    inner_sum: float
    lhs: float
    ratio: float
    residual: float
    sweeps: int


def _check_delta(n: float, delta_n: float, k_cap: float) -> None:
    if not 0.0 < delta_n <= k_cap * n ** (1.0 / 3.0):
        raise ValueError(f"delta_n={delta_n} outside (0, {k_cap}*n^(1/3)]")


def mean_value_discrepancy(n: float, delta_n: float, lam, d: int = 3,
                           k_cap: float = 2.0, cap: int = SITE_CAP,
                           tol: float = 1e-12) -> MeanValueReport:
    """| |B_{r_n}| * P_0(exit in lam) - sum over y in B_{r_n} of
    P_y(exit in lam) |, both terms from one Dirichlet solve.

    lam is a subset of the exterior boundary of B(0,n), or the string
    "full" for the entire boundary (where the identity is exact).
    """
    _check_delta(n, delta_n, k_cap)
    ball = lattice.ball_sites(0, n, d)
    _check_cap(len(ball), cap)
    ring = lattice.boundary(ball, d)
    if isinstance(lam, str):
        if lam != "full":
            raise ValueError("lam must be a site array or 'full'")
        lam_arr = ring
    else:
        lam_arr = np.asarray(lam, dtype=np.int64).reshape(-1, d)
    ring_set = {tuple(r) for r in ring.tolist()}
    if any(tuple(r) not in ring_set for r in lam_arr.tolist()):
        raise ValueError("lam must lie on the exterior boundary of B(0,n)")
    lam_set = {tuple(r) for r in lam_arr.tolist()}
    vals = np.array([1.0 if tuple(r) in lam_set else 0.0
                     for r in ring.tolist()])
    sol = harmonic_extension(ball, ring, vals, cap=cap, tol=tol)
    r_n = float(n) - float(delta_n)
    inner = lattice.ball_sites(0, r_n, d)
    p0 = sol.value(np.zeros(d, dtype=np.int64))
    inner_sum = float(sol.values(inner).sum())
    lhs = abs(len(inner) * p0 - inner_sum)
    return MeanValueReport(d=d, n=float(n), delta_n=float(delta_n), r_n=r_n,
                           lam_size=len(lam_arr), inner_count=len(inner),
                           p0=p0, inner_sum=inner_sum, lhs=lhs,
                           ratio=lhs / len(lam_arr), residual=sol.residual,
                           sweeps=sol.sweeps)


# ------------------------------------------------------ annulus occupation

@dataclass
class AnnulusTimeReport:
    d: int
    n: float
    delta_n: float
    r_n: float
    z: np.ndarray
    norm_z: float
    lhs: float
    alpha0: float
    p_out: float
    rhs: float
    residual: float
    scale: float
    ratio: float
    method: str
    samples: int = 0
    solver_residual: float = 0.0


def annulus_time_profile(n: float, delta_n: float, z, d: int = 3,
                         method: str = "exact", samples: int = 10_000_000,
                         seed: int = 0, k_cap: float = 2.0,
                         cap: int = SITE_CAP, tol: float = 1e-12,
                         step_cap: int = STEP_CAP) -> AnnulusTimeReport:
    """Expected time in the annulus A(r_n, n) against its second-order
    expansion 2d*delta_n*alpha0(z) - 2d*(n-|z|)^2.

    alpha0(z) is the mean radial overshoot at the outer exit among
    walks that leave B(0,n) before touching B(0,r_n).  method "exact"
    solves three absorbing systems; "mc" estimates the same two
    quantities from independent walk batches.
    """
    z = np.asarray(z, dtype=np.int64)
    _check_delta(n, delta_n, k_cap)
    r_n = float(n) - float(delta_n)
    nz2 = int(lattice.norm_sq(z))
    norm_z = math.sqrt(nz2)
    if not (r_n * r_n <= nz2 < n * n):
        raise ValueError(f"z at norm {norm_z:.3f} outside A({r_n:.3f}, {n})")
    if method == "exact":
        ball = lattice.ball_sites(0, n, d)
        _check_cap(len(ball), cap)
        lo, shape, mask = _grid_frame(ball)
        n2g = _norm_sq_grid(lo, shape)
        u = np.zeros(shape, dtype=np.float64)
        b = np.where(mask & (n2g >= r_n * r_n), 1.0, 0.0)
        res_v, _ = relax(u, mask, b, tol=tol)
        lhs = float(u[tuple(z - lo)])
        ann = lattice.annulus_sites(r_n, n, d)
        ring = lattice.boundary(ann, d)
        outer = (ring * ring).sum(axis=1) >= n * n
        p_sol = harmonic_extension(ann, ring, outer.astype(np.float64),
                                   cap=cap, tol=tol)
        e_sol = harmonic_extension(
            ann, ring,
            np.where(outer, np.sqrt((ring * ring).sum(axis=1)), 0.0),
            cap=cap, tol=tol)
        p_out = p_sol.value(z)
        alpha0 = e_sol.value(z) / p_out - norm_z
        solver_res = max(res_v, p_sol.residual, e_sol.residual)
        n_samp = 0
    elif method == "mc":
        _, _, occt = run_region_walks(seed, d, samples, z, r_out=n,
                                      occ_window=(r_n * r_n, n * n),
                                      step_cap=step_cap)
        lhs = float(occt.mean())
        ends, _, _ = run_region_walks(seed + 1, d, samples, z, r_out=n,
                                      r_in=r_n, step_cap=step_cap)
        e2 = (ends * ends).sum(axis=1)
        out = e2 >= n * n
        p_out = float(out.mean())
        if p_out == 0.0:
            raise SolverError("no walk exited outward; cannot condition")
        alpha0 = float(np.sqrt(e2[out].astype(np.float64)).mean()) - norm_z
        solver_res = 0.0
        n_samp = samples
    else:
        raise ValueError("method must be 'exact' or 'mc'")
    rhs = 2.0 * d * delta_n * alpha0 - 2.0 * d * (n - norm_z) ** 2
    scale = max(n - norm_z, 1.0)
    resid = abs(lhs - rhs)
    return AnnulusTimeReport(d=d, n=float(n), delta_n=float(delta_n),
                             r_n=r_n, z=z, norm_z=norm_z, lhs=lhs,
                             alpha0=alpha0, p_out=p_out, rhs=rhs,
                             residual=resid, scale=scale,
                             ratio=resid / scale, method=method,
                             samples=n_samp, solver_residual=solver_res)


# --------------------------------------------------- free-Green asymptotics

def green_constant(d: int) -> float:
    """C_d = 2 / (v_d (d-2)), the constant in G(0,z) ~ C_d |z|^(2-d)."""
    if d < 3:
        raise ValueError("free-Green constant needs d >= 3")
    return 2.0 / (lattice.ball_volume_constant(d) * (d - 2))


@dataclass
class GreenAsymptotics:
    d: int
    c_d: float
    box_half: int
    z: np.ndarray
    norms: np.ndarray
    g: np.ndarray
    scaled_err: np.ndarray
    max_scaled_err: float
    residual: float
    grid: GridSolve = field(repr=False)


def green_free_asymptotics(z_sites, d: int = 3, box_half: int | None = None,
                           tol: float = 1e-12,
                           cap: int = 8_000_000) -> GreenAsymptotics:
    """G(0,z) from one box solve with the analytic tail C_d |.|^(2-d)
    prescribed on the box surface; tabulates |z|^d |G - C_d |z|^(2-d)|."""
    z_sites = np.asarray(z_sites, dtype=np.int64).reshape(-1, d)
    norms = np.sqrt((z_sites * z_sites).sum(axis=1).astype(np.float64))
    c_d = green_constant(d)
    if box_half is None:
        box_half = int(math.ceil(6.0 * norms.max()))
    if norms.max() > box_half - 2:
        raise ValueError("z range too close to the box surface")
    side = 2 * box_half + 1
    if side ** d > cap:
        raise SolverError(f"box of {side ** d} cells exceeds the cap")
    shape = (side,) * d
    lo = np.full(d, -box_half, dtype=np.int64)
    n2g = _norm_sq_grid(lo, shape)
    surface = np.zeros(shape, dtype=bool)
    for ax in range(d):
        pre = (slice(None),) * ax
        surface[pre + (0,)] = True
        surface[pre + (-1,)] = True
    mask = ~surface
    u = np.zeros(shape, dtype=np.float64)
    u[surface] = c_d * n2g[surface] ** ((2.0 - d) / 2.0)
    b = np.zeros(shape, dtype=np.float64)
    b[tuple(-lo)] = 1.0
    res, sweeps = relax(u, mask, b, tol=tol)
    grid = GridSolve(lo=lo, u=u, mask=mask, residual=res, sweeps=sweeps)
    g = grid.values(z_sites)
    err = norms ** d * np.abs(g - c_d / norms ** (d - 2))
    return GreenAsymptotics(d=d, c_d=c_d, box_half=box_half, z=z_sites,
                            norms=norms, g=g, scaled_err=err,
                            max_scaled_err=float(err.max()), residual=res,
                            grid=grid)


# ----------------------------------------------------------- tails, ledger

def bernoulli_tail_bound(x: float, mean: float | None = None,
                         variance: float | None = None) -> float:
    """exp(-min(x^2 / (4 scale), x/2)) with scale = variance, falling
    back to the mean when no variance is supplied."""
    if x < 0.0:
        raise ValueError("tail bound needs x >= 0")
    scale = variance if variance is not None else mean
    if scale is None:
        raise ValueError("supply a mean or a variance")
    if scale < 0.0:
        raise ValueError("scale must be nonnegative")
    if x == 0.0:
        return 1.0
    if scale == 0.0:
        return math.exp(-x / 2.0)
    return math.exp(-min(x * x / (4.0 * scale), x / 2.0))


def martingale_report(sites: np.ndarray, z, cap: int = SITE_CAP,
                      tol: float = 1e-12) -> dict:
    """E_z[exit time] against E_z[|S(exit)|^2] - |z|^2, both exact."""
    sites = np.asarray(sites, dtype=np.int64)
    z = np.asarray(z, dtype=np.int64)
    w = expected_exit_time(sites, cap=cap, tol=tol)
    ex = exit_distribution(sites, z, cap=cap, tol=tol)
    second = float((ex.probs * (ex.boundary * ex.boundary).sum(axis=1)).sum())
    lhs = w.value(z)
    rhs = second - float(lattice.norm_sq(z))
    return {"expected_time": lhs, "moment_difference": rhs,
            "gap": abs(lhs - rhs), "mass": ex.mass}


def constants_entry(name: str, d: int, scales) -> dict:
    """Ledger row for a measured constant: scales = [(n, value), ...]."""
    rows = [{"n": float(n), "value": float(v)} for n, v in scales]
    vals = [r["value"] for r in rows]
    ratio = max(vals) / min(vals) if min(vals) > 0 else math.inf
    return {"name": name, "d": d, "scales": rows, "stability_ratio": ratio}


def write_constants(path: str, entries) -> None:
    with open(path, "w") as fh:
        json.dump(list(entries), fh, indent=2)


def read_constants(path: str) -> list:
    with open(path) as fh:
        return json.load(fh)
