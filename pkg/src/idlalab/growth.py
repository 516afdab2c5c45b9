"""Growth constructions: internal DLA and the flashing process, the
latter both explorer-by-explorer (direct) and by exploration waves.

The two flashing schedules consume identical per-(explorer, shell)
random streams, so they produce bit-identical clusters; tests rely on
that exactness.  Kernels do the stepping; this module sizes tables and
buffers, retries on coverage/buffer exhaustion, and wraps results.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels, lattice, shells
from .walks import STEP_CAP, StepCapError, _row_keys


@dataclass
class ClusterState:
    """A grown cluster; row i of sites is where explorer i settled."""
    d: int
    seed: int
    process: str
    sites: np.ndarray                      # (N, d) int64, settle order
    n_target: float | None = None
    settle_shell: np.ndarray | None = None  # flashing only
    steps_total: int = 0
    meta: dict = field(default_factory=dict)
    _norms_sq: np.ndarray | None = field(default=None, repr=False)

    @property
    def n_sites(self) -> int:
        return len(self.sites)

    def norms_sq(self) -> np.ndarray:
        if self._norms_sq is None:
            s = self.sites.astype(np.int64)
            self._norms_sq = (s * s).sum(axis=1)
        return self._norms_sq

    def max_norm(self) -> float:
        return math.sqrt(float(self.norms_sq().max()))

    def min_unoccupied_norm(self) -> float:
        """Norm of the smallest-norm lattice site not in the cluster."""
        return math.sqrt(float(min_unoccupied_norm_sq(self.sites, self.d)))

    def site_set(self) -> set:
        return set(map(tuple, self.sites.tolist()))


@dataclass
class RecordedRun:
    """Direction codes of every explorer's full flashing trajectory.
    codes[offsets[i]:offsets[i+1]] drives explorer i; code k means
    axis k>>1, sign 1-2*(k&1)."""
    codes: np.ndarray
    offsets: np.ndarray

    def lengths(self) -> np.ndarray:
        return np.diff(self.offsets)


def explorers_for_radius(d: int, n: float) -> int:
    """N = |B(0,n)|, the explorer count the error definitions use."""
    return lattice.ball_count(d, n)


def radius_estimate(d: int, N: int) -> float:
    return (N / lattice.ball_volume_constant(d)) ** (1.0 / d)


def min_unoccupied_norm_sq(sites: np.ndarray, d: int) -> int:
    """Smallest squared norm among sites missing from the cluster.

    The cluster has |B(0,n)| sites at most, so some site of norm
    <= n+1 is unoccupied; scanning B(0, n+2) is always enough.
    """
    n_est = radius_estimate(d, max(len(sites), 1))
    half = int(math.ceil(n_est)) + 2
    side = 2 * half + 1
    grid = np.zeros(side ** d, dtype=bool)
    s = np.asarray(sites, dtype=np.int64)
    inside = np.all(np.abs(s) <= half, axis=1)
    idx = np.zeros(int(inside.sum()), dtype=np.int64)
    for c in range(d):
        idx = idx * side + (s[inside, c] + half)
    grid[idx] = True
    ball = lattice.ball_sites(np.zeros(d, np.int64), half + 0.5, d)
    bidx = np.zeros(len(ball), dtype=np.int64)
    for c in range(d):
        bidx = bidx * side + (ball[:, c] + half)
    missing = ~grid[bidx]
    if not missing.any():
        raise AssertionError("pigeonhole violated: ball scan found no hole")
    return int((ball[missing] ** 2).sum(axis=1).min())


def _box_half(d: int, N: int) -> int:
    n_est = radius_estimate(d, N)
    return int(math.ceil(n_est + 12.0 + 6.0 * n_est ** (1.0 / (d + 1))))


def _alloc_grid(d: int, box_half: int) -> np.ndarray:
    return np.zeros((2 * box_half + 1) ** d, dtype=np.uint8)


def idla_grow(N: int, seed: int, d: int = 3,
              step_cap: int = STEP_CAP) -> ClusterState:
    """Internal DLA: explorer k settles at its first site outside
    A(k-1).  Walkers never leave B(0, maxnorm+1), so no escape handling
    is needed."""
    if N < 1:
        raise ValueError("need at least one explorer")
    box_half = _box_half(d, N)
    sites, steps, status = kernels.idla_grow(
        int(seed), d, int(N), _alloc_grid(d, box_half), box_half, step_cap)
    if status == 2:
        raise StepCapError("internal DLA walk exceeded step cap")
    return ClusterState(d=d, seed=int(seed), process="idla", sites=sites,
                        steps_total=int(steps.sum()),
                        meta={"impl": kernels.IMPL})


def coverage_radius(d: int, h0: float, N: int, straggler_odds: float = 1e3) -> float:
    """Shell-table extent: past the cluster edge an explorer settles
    each shell with probability ~0.2+, so the chance any of N explorers
    outruns J extra shells decays like N * 0.8^J; size for odds 1:1e3.
    dr/dj = 2 h(r) makes r^{d/(d+1)} linear in j."""
    n_est = radius_estimate(d, N)
    extra = math.log(max(N, 2) * straggler_odds) / 0.22
    base = max(n_est, h0 + 1.0)
    p = d / (d + 1.0)
    return (base ** p + p * 2.0 * extra) ** (1.0 / p) + 2.0 * h0


def _codes_capacity(d: int, N: int) -> int:
    n_est = radius_estimate(d, N)
    return int(N * (1.6 * n_est ** 2 + 400)) + 1_000_000


def _flashing(N: int, seed: int, d: int, h0: float, wave_mode: bool,
              record: bool, capture_shell: int,
              table: shells.ShellTable | None, step_cap: int):
    if N < 1:
        raise ValueError("need at least one explorer")
    if record and wave_mode:
        raise ValueError("trajectory recording needs the direct schedule "
                         "(wave interleaving scrambles the code stream)")
    own_table = table is None
    if own_table:
        table = shells.build_shells(d, h0, coverage_radius(d, h0, N))
    box_half = _box_half(d, N)
    codes = offsets = None
    cap = _codes_capacity(d, N) if record else 0
    for attempt in range(8):
        if record:
            codes = np.zeros(cap, dtype=np.uint8)
            offsets = np.zeros(N + 1, dtype=np.int64)
        half_ap_sq = (table.h * 0.5) ** 2
        gstar, settle_shell, xi, steps_total, cursor, status = \
            kernels.flashing_grow(
                int(seed), d, int(N), table.r, table.r_sq, table.edges,
                table.edges_sq, table.h, table.inv_hd, half_ap_sq,
                1.0 / d, _alloc_grid(d, box_half), box_half, step_cap,
                wave_mode, capture_shell, codes, offsets)
        if status == 0:
            return (gstar, settle_shell, xi, int(steps_total), table,
                    (codes[:cursor].copy(), offsets) if record else None)
        if status == 2:
            raise StepCapError("flashing segment exceeded step cap")
        if status == 1:
            if not own_table:
                raise shells.CoverageError(
                    f"explorer left the supplied {table.n_shells}-shell table")
            table = shells.build_shells(d, h0, table.coverage * 1.5)
        elif status == 3:
            cap *= 2
        else:
            raise RuntimeError(f"flashing kernel status {status}")
    raise shells.CoverageError("flashing run failed to fit after retries")


def _flash_cluster(N, seed, d, h0, wave_mode, table, step_cap, record=False):
    gstar, settle_shell, _, steps_total, table, rec = _flashing(
        N, seed, d, h0, wave_mode, record, -1, table, step_cap)
    cluster = ClusterState(
        d=d, seed=int(seed),
        process="flashing-waves" if wave_mode else "flashing-direct",
        sites=gstar, settle_shell=settle_shell, steps_total=steps_total,
        meta={"impl": kernels.IMPL, "h0": h0, "coverage": table.coverage})
    if record:
        return cluster, RecordedRun(codes=rec[0], offsets=rec[1]), table
    return cluster, table


def flashing_grow_direct(N: int, seed: int, d: int = 3, h0: float = 8.0,
                         table: shells.ShellTable | None = None,
                         record: bool = False,
                         step_cap: int = STEP_CAP):
    """Flashing growth, explorers one after the other.  Returns the
    cluster, or (cluster, RecordedRun) with record=True."""
    out = _flash_cluster(N, seed, d, h0, False, table, step_cap, record)
    return (out[0], out[1]) if record else out[0]


def flashing_grow_waves(N: int, seed: int, d: int = 3, h0: float = 8.0,
                        table: shells.ShellTable | None = None,
                        step_cap: int = STEP_CAP) -> ClusterState:
    """Flashing growth by exploration waves: wave k advances every
    unsettled explorer, in label order, from its entry point on
    Sigma_k through shell k.  Same randomness per (explorer, shell) as
    the direct schedule, hence bit-identical clusters."""
    return _flash_cluster(N, seed, d, h0, True, table, step_cap)[0]


@dataclass
class WaveState:
    k: int
    explorers: np.ndarray    # labels still unsettled entering wave k
    positions: np.ndarray    # xi_k per such explorer, on Sigma_k (k >= 1)
    settled_now: np.ndarray  # bool per row: settles during wave k

    def counts_in(self, sites: np.ndarray) -> int:
        """W_k(Lambda): unsettled explorers standing in Lambda."""
        if len(self.positions) == 0 or len(sites) == 0:
            return 0
        return int(np.isin(_row_keys(self.positions),
                           _row_keys(np.asarray(sites, np.int64))).sum())


def wave_states(N: int, seed: int, ks, d: int = 3, h0: float = 8.0,
                table: shells.ShellTable | None = None,
                step_cap: int = STEP_CAP) -> list[WaveState]:
    """Entry positions xi_k for the requested wave indices.

    Each k replays the (deterministic) run capturing positions at shell
    k entry; explorers with settle_shell < k are already out.
    """
    out = []
    for k in ks:
        gstar, settle_shell, xi, _, table, _ = _flashing(
            N, seed, d, h0, True, False, int(k), table, step_cap)
        alive = np.nonzero(settle_shell >= k)[0]
        out.append(WaveState(k=int(k), explorers=alive,
                             positions=xi[alive],
                             settled_now=settle_shell[alive] == k))
    return out
