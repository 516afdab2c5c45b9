"""Coupled construction: internal DLA trajectories driven by recorded
flashing trajectories, with the blue/red bookkeeping and its checks.

Explorer i+1's walk follows its own flashing trajectory; while it
moves inside the occupied cluster past the recorded end, it continues
along the unconsumed suffix of the red explorer that settled the site
it stands on, turning that site blue and iterating until it steps onto
an unoccupied site.  The marginal law of the resulting cluster is that
of plain internal DLA, which marginal_law_check verifies statistically.
"""

from __future__ import annotations

import json
import math
import os
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import fluct, growth, kernels, shells
from .walks import STEP_CAP

_INVARIANT_NAMES = {
    1: "exhausted trajectory ended on an unlabeled site",
    2: "driver chain revisited a blue site",
    3: "resumed driver had no unconsumed suffix",
    4: "driver chain exceeded the explorer count",
    5: "settled-site labels are not a bijection",
    6: "blue site is not a fixed point of the coupling map",
    7: "red site consumed its driver's full trajectory",
    8: "internal-DLA orbit left the flashing orbits",
    9: "coupling map moved a site to a smaller shell",
}


class CouplingError(RuntimeError):
    def __init__(self, message: str, bundle_path: str | None = None):
        super().__init__(message + (f" (repro bundle: {bundle_path})"
                                    if bundle_path else ""))
        self.bundle_path = bundle_path


@dataclass
class CouplingResult:
    cluster: growth.ClusterState        # internal DLA law
    flash_cluster: growth.ClusterState
    labels: np.ndarray                  # f: label of row m's settled site
    blue: np.ndarray                    # bool per row of cluster.sites
    tcons: np.ndarray                   # consumed prefix length t_{i,N}
    tau: np.ndarray                     # full flashing trajectory lengths
    chain_max: int
    table: shells.ShellTable
    record: growth.RecordedRun | None = None
    checks: dict = field(default_factory=dict)

    def psi(self) -> np.ndarray:
        """Coupling map image psi(z) = g*(f(z)) per cluster site row."""
        return self.flash_cluster.sites[self.labels]


def _write_bundle(out_dir: str | None, payload: dict) -> str | None:
    root = out_dir or os.environ.get("IDLALAB_OUT") or "."
    try:
        os.makedirs(root, exist_ok=True)
        path = os.path.join(
            root, f"coupling_repro_{payload['seed']}_{int(time.time())}.json")
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2)
        return path
    except OSError:
        return None


def _fail(inv: int, seed, N, d, h0, explorer=-1, step=-1, out_dir=None):
    bundle = _write_bundle(out_dir, {
        "seed": int(seed), "N": int(N), "d": int(d), "h0": float(h0),
        "invariant": int(inv), "invariant_name": _INVARIANT_NAMES[inv],
        "explorer": int(explorer), "step": int(step)})
    raise CouplingError(
        f"coupling invariant {inv} violated ({_INVARIANT_NAMES[inv]}) "
        f"at explorer {explorer}", bundle)


def coupled_grow(N: int, seed: int, d: int = 3, h0: float = 8.0,
                 table: shells.ShellTable | None = None,
                 verify: bool = True, keep_record: bool = False,
                 out_dir: str | None = None,
                 step_cap: int = STEP_CAP) -> CouplingResult:
    """Grow the coupled pair (A(N), A*(N)) from one seed.

    verify=True runs every per-run invariant (label bijection, blue
    fixed points, red strict prefixes, orbit inclusion, shell
    monotonicity of the coupling map); any violation aborts with a
    serialized repro bundle.
    """
    flash, rec = growth.flashing_grow_direct(
        N, seed, d=d, h0=h0, table=table, record=True, step_cap=step_cap)
    table = shells.build_shells(d, h0, flash.meta["coverage"]) \
        if table is None else table
    box_half = growth._box_half(d, N)
    side = 2 * box_half + 1
    occ = np.zeros(side ** d, dtype=np.uint8)
    lab = np.zeros(side ** d, dtype=np.int32)
    blu = np.zeros(side ** d, dtype=np.uint8)
    vis = np.zeros(side ** d, dtype=np.uint8)
    (siteA, lab_final, blue_final, tcons, chain_max, vis_spill, status,
     err) = kernels.coupled_run(d, rec.codes, rec.offsets, occ, lab, blu,
                                vis, box_half, N)
    if status == 4:
        _fail(int(err[0]), seed, N, d, h0, explorer=int(err[1]),
              step=int(err[2]), out_dir=out_dir)
    elif status != 0:
        raise RuntimeError(f"coupled kernel status {status}")
    tau = rec.lengths()
    cluster = growth.ClusterState(
        d=d, seed=int(seed), process="coupled", sites=siteA,
        steps_total=int(tau.sum()), meta={"impl": kernels.IMPL, "h0": h0})
    result = CouplingResult(
        cluster=cluster, flash_cluster=flash, labels=lab_final,
        blue=blue_final.astype(bool), tcons=tcons, tau=tau,
        chain_max=int(chain_max), table=table,
        record=rec if keep_record else None)
    if verify:
        _verify_run(result, rec, occ, vis, vis_spill, box_half, out_dir)
    return result


def _verify_run(res: CouplingResult, rec: growth.RecordedRun,
                occ: np.ndarray, vis: np.ndarray, vis_spill: np.ndarray,
                box_half: int, out_dir: str | None) -> None:
    N = res.cluster.n_sites
    d = res.cluster.d
    seed, h0 = res.cluster.seed, res.cluster.meta["h0"]
    lab = res.labels
    if not np.array_equal(np.sort(lab), np.arange(N)):
        _fail(5, seed, N, d, h0, out_dir=out_dir)
    psi = res.psi()
    fixed = np.all(psi == res.cluster.sites, axis=1)
    if not np.all(fixed[res.blue]):
        _fail(6, seed, N, d, h0,
              explorer=int(lab[res.blue & ~fixed][0]), out_dir=out_dir)
    blue_expl = res.tcons[lab] == res.tau[lab]
    if not np.array_equal(blue_expl, res.blue):
        bad = np.nonzero(blue_expl != res.blue)[0][0]
        _fail(7, seed, N, d, h0, explorer=int(lab[bad]), out_dir=out_dir)
    # orbit inclusion: every site the coupled walks visited must lie on
    # some full flashing trajectory
    side = 2 * box_half + 1
    mark = np.zeros(side ** d, dtype=np.uint8)
    mark_spill = kernels.replay_mark(d, rec.codes, rec.offsets, mark,
                                     box_half, N)
    if np.any((vis == 1) & (mark == 0)) or \
            not np.all(np.isin(vis_spill, mark_spill)):
        _fail(8, seed, N, d, h0, out_dir=out_dir)
    # shell monotonicity of psi (a trajectory leaving the first k shells
    # settles outside them)
    sA = res.cluster.sites
    kz = shells.shell_index_of_norms(
        (sA * sA).sum(axis=1).astype(np.float64), res.table)
    kp = shells.shell_index_of_norms(
        (psi * psi).sum(axis=1).astype(np.float64), res.table)
    if np.any(kp < kz):
        bad = np.nonzero(kp < kz)[0][0]
        _fail(9, seed, N, d, h0, explorer=int(lab[bad]), out_dir=out_dir)
    res.checks.update(
        n_blue=int(res.blue.sum()), chain_max=res.chain_max,
        orbit_sites=int((vis == 1).sum()) + len(vis_spill))


def verify_sandwich(A: growth.ClusterState, Astar: growth.ClusterState,
                    table: shells.ShellTable) -> dict:
    """Both containment implications of the coupling theorem, for every
    shell radius r_k + h_k the table covers.  Exact integer compares."""
    a_max = int(A.norms_sq().max())
    s_max = int(Astar.norms_sq().max())
    a_hole = growth.min_unoccupied_norm_sq(A.sites, A.d)
    s_hole = growth.min_unoccupied_norm_sq(Astar.sites, Astar.d)
    violations = []
    applied = 0
    # k = 0 is the central-ball edge r_0 + h_0 = h0; both transfers hold
    # there by the same stability argument, and it is the only edge the
    # filled-ball hypothesis can reach at practical mesh scales (inner
    # shells keep a few flash-unreachable sites forever)
    for k in range(table.n_shells):
        e2 = float(table.edges_sq[k])
        if s_max < e2:  # A* inside the open ball of radius r_k + h_k
            applied += 1
            if not a_max < e2:
                violations.append((k, "outer"))
        if s_hole >= e2:  # ball of radius r_k + h_k filled by A*
            applied += 1
            if not a_hole >= e2:
                violations.append((k, "inner"))
    return {"violations": violations, "applied": applied,
            "max_norm_sq": {"idla": a_max, "flashing": s_max},
            "min_hole_sq": {"idla": a_hole, "flashing": s_hole}}


def marginal_law_check(n: int, seeds_coupled, seeds_direct, d: int = 3,
                       h0: float = 8.0, min_seeds: int = 300,
                       n_direct: int | None = None) -> float:
    """Two-sample KS p-value comparing delta_I(n) between coupled-A
    clusters and directly grown internal DLA.

    n_direct grows the direct arm at a different radius; mismatched
    radii should be detected (power check), matched ones should not.
    """
    seeds_coupled = list(seeds_coupled)
    seeds_direct = list(seeds_direct)
    if min(len(seeds_coupled), len(seeds_direct)) < min_seeds:
        raise ValueError(f"marginal law check needs >= {min_seeds} seeds "
                         "per arm")
    m = n if n_direct is None else n_direct
    N = growth.explorers_for_radius(d, n)
    M = growth.explorers_for_radius(d, m)
    a = [fluct.inner_error(coupled_grow(N, s, d=d, h0=h0,
                                        verify=False).cluster, n)
         for s in seeds_coupled]
    b = [fluct.inner_error(growth.idla_grow(M, s, d=d), m)
         for s in seeds_direct]
    return float(stats.ks_2samp(a, b, method="asymp").pvalue)
