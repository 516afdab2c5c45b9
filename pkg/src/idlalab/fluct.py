"""Fluctuation statistics: inner/outer errors, exponent fits, the
coupon-collector experiment, and the per-tile crossing counts.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import asdict, dataclass

import numpy as np

from . import growth, shells
from .walks import STEP_CAP, _row_keys

CSV_FIELDS = ("process", "d", "n", "N", "seed", "delta_in", "delta_out")


@dataclass(frozen=True)
class ErrorRecord:
    process: str
    d: int
    n: float
    N: int
    seed: int
    delta_in: float
    delta_out: float

    def key(self):
        return (self.process, self.d, float(self.n), self.seed)


def inner_error(cluster: growth.ClusterState, n: float) -> float:
    """delta_I: n minus the largest r whose ball the cluster contains."""
    return max(0.0, float(n) - cluster.min_unoccupied_norm())


def outer_error(cluster: growth.ClusterState, n: float) -> float:
    """delta_O: overshoot of the farthest settled site past n."""
    return max(0.0, cluster.max_norm() - float(n))


def error_record(cluster: growth.ClusterState, n: float) -> ErrorRecord:
    di = inner_error(cluster, n)
    do = outer_error(cluster, n)
    assert 0.0 <= di <= float(n) and do >= 0.0
    # records collapse the two flashing schedules (identical clusters)
    tag = "flashing" if cluster.process.startswith("flashing") \
        else cluster.process
    return ErrorRecord(process=tag, d=cluster.d, n=float(n),
                       N=cluster.n_sites, seed=cluster.seed,
                       delta_in=di, delta_out=do)


# ---------------------------------------------------------------- storage

def append_records(path: str, records) -> None:
    new = not os.path.exists(path) or os.path.getsize(path) == 0
    with open(path, "a", newline="") as fh:
        w = csv.writer(fh)
        if new:
            w.writerow(CSV_FIELDS)
        for r in records:
            w.writerow([r.process, r.d, repr(float(r.n)), r.N, r.seed,
                        repr(r.delta_in), repr(r.delta_out)])
        fh.flush()


def read_records(path: str) -> list[ErrorRecord]:
    if not os.path.exists(path):
        return []
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(ErrorRecord(
                process=row["process"], d=int(row["d"]), n=float(row["n"]),
                N=int(row["N"]), seed=int(row["seed"]),
                delta_in=float(row["delta_in"]),
                delta_out=float(row["delta_out"])))
    return out


def write_jsonl(path: str, records) -> None:
    with open(path, "w") as fh:
        for r in records:
            fh.write(json.dumps(asdict(r)) + "\n")


def run_error_ensemble(process: str, d: int, n_values, seeds, h0: float = 8.0,
                       out_path: str | None = None, resume: bool = True,
                       step_cap: int = STEP_CAP) -> list[ErrorRecord]:
    """Grow one cluster per (n, seed) and collect delta records.

    With out_path, rows stream to CSV as they finish and existing rows
    are not recomputed, so an interrupted ensemble resumes cleanly.
    """
    if process not in ("idla", "flashing"):
        raise ValueError(f"unknown process {process!r}")
    done = {}
    if out_path and resume:
        for r in read_records(out_path):
            done[r.key()] = r
    out = []
    for n in n_values:
        N = growth.explorers_for_radius(d, n)
        for seed in seeds:
            key = (process, d, float(n), int(seed))
            if key in done:
                out.append(done[key])
                continue
            if process == "idla":
                cl = growth.idla_grow(N, seed, d=d, step_cap=step_cap)
            else:
                cl = growth.flashing_grow_direct(N, seed, d=d, h0=h0,
                                                 step_cap=step_cap)
            rec = error_record(cl, n)
            out.append(rec)
            if out_path:
                append_records(out_path, [rec])
    out.sort(key=lambda r: (r.n, r.seed))
    return out


# ------------------------------------------------------------- exponent fit

@dataclass
class ExponentFit:
    exponent: float
    intercept: float
    stderr: float
    ci_low: float
    ci_high: float
    n_range: tuple
    statistic: str
    n_values: tuple
    seeds_per_n: tuple

    def to_json(self) -> str:
        return json.dumps(asdict(self), default=list, indent=2)


_STATS = {
    "std": lambda v: float(np.std(v, ddof=1)),
    "q90": lambda v: float(np.quantile(v, 0.9)),
    "max": lambda v: float(np.max(v)),
}


def fit_exponent(records, statistic: str = "std", field: str = "delta_in",
                 process: str | None = None, min_n_values: int = 5,
                 min_seeds: int = 100, min_span: float = 3.0) -> ExponentFit:
    """OLS slope of log statistic(delta) against log n.

    Defaults demand >= 5 n-values spanning a factor 3 with >= 100 seeds
    each; downscaled smoke runs must loosen those knobs explicitly.
    """
    if statistic not in _STATS:
        raise ValueError(f"statistic must be one of {sorted(_STATS)}")
    groups: dict[float, list[float]] = {}
    for r in records:
        if process is not None and r.process != process:
            continue
        groups.setdefault(float(r.n), []).append(getattr(r, field))
    ns = sorted(groups)
    if len(ns) < min_n_values:
        raise ValueError(f"need >= {min_n_values} distinct n values, "
                         f"got {len(ns)}")
    if ns[0] <= 0 or ns[-1] / ns[0] < min_span:
        raise ValueError(f"n values span factor {ns[-1] / ns[0]:.2f} "
                         f"< required {min_span}")
    counts = tuple(len(groups[n]) for n in ns)
    if min(counts) < min_seeds:
        raise ValueError(f"need >= {min_seeds} seeds per n, got {min(counts)}")
    stat = _STATS[statistic]
    ys = [stat(np.asarray(groups[n])) for n in ns]
    if min(ys) <= 0.0:
        raise ValueError("fluctuation statistic vanished at some n; "
                         "cannot fit a log-log slope")
    x = np.log(np.asarray(ns))
    y = np.log(np.asarray(ys))
    xb = x - x.mean()
    sxx = float(xb @ xb)
    slope = float(xb @ (y - y.mean())) / sxx
    inter = float(y.mean() - slope * x.mean())
    resid = y - (inter + slope * x)
    k = len(ns)
    se = math.sqrt(float(resid @ resid) / (k - 2) / sxx) if k > 2 else 0.0
    return ExponentFit(exponent=slope, intercept=inter, stderr=se,
                       ci_low=slope - 1.96 * se, ci_high=slope + 1.96 * se,
                       n_range=(ns[0], ns[-1]), statistic=statistic,
                       n_values=tuple(ns), seeds_per_n=counts)


def optimality_probe(records, alpha: float | None = None) -> dict:
    """Distribution of delta_I(n) / n^(1/(d+1)) per n from flashing records.

    Reports whether the median ratio trends upward with n (it must not
    collapse toward zero if the flashing exponent is sharp).
    """
    recs = [r for r in records if r.process == "flashing"]
    if not recs:
        raise ValueError("optimality probe needs flashing-process records")
    d = recs[0].d
    if any(r.d != d for r in recs):
        raise ValueError("mixed dimensions in records")
    expo = alpha if alpha is not None else 1.0 / (d + 1)
    groups: dict[float, list[float]] = {}
    for r in recs:
        groups.setdefault(float(r.n), []).append(r.delta_in / r.n ** expo)
    ns = sorted(groups)
    if len(ns) < 2:
        raise ValueError("optimality probe needs >= 2 distinct n values")
    med = [float(np.median(groups[n])) for n in ns]
    q25 = [float(np.quantile(groups[n], 0.25)) for n in ns]
    q75 = [float(np.quantile(groups[n], 0.75)) for n in ns]
    diffs = np.diff(med)
    return {"d": d, "exponent": expo, "n": ns, "median_ratio": med,
            "q25": q25, "q75": q75,
            "non_decreasing": bool(np.all(diffs >= -1e-12)),
            "last_ge_first": bool(med[-1] >= med[0] - 1e-12),
            "seeds_per_n": [len(groups[n]) for n in ns]}


# ------------------------------------------------------------ coupon runs

def coupon_tail_bound(A: float, L: int, a1: float = 1.0,
                      a2: float = 1.0) -> float:
    """Upper bound on P(tau_L < A*L) for item probabilities sandwiched
    between a1/L and a2/L."""
    return math.exp(-(a1 * a1 * A * A * math.exp(-2.0 * a2 * A) / 4.0)
                    * math.sqrt(L))


def _validate_probs(L: int, probabilities) -> np.ndarray | None:
    if probabilities is None:
        return None
    p = np.asarray(probabilities, dtype=np.float64)
    if p.shape != (L,):
        raise ValueError(f"need {L} probabilities, got shape {p.shape}")
    if np.any(p <= 0.0):
        raise ValueError("item probabilities must be positive")
    if float(p.sum()) > 1.0 + 1e-9:
        raise ValueError("item probabilities sum past 1")
    return np.cumsum(p)


def coupon_run(L: int, probabilities=None, seed: int = 0,
               rng: np.random.Generator | None = None) -> int:
    """Draws until an album of L items is complete; draws may also land
    on no item when the probabilities sum below 1."""
    if L < 1:
        raise ValueError("album size must be >= 1")
    cum = _validate_probs(L, probabilities)
    if rng is None:
        rng = np.random.default_rng(seed)
    first = np.full(L, -1, dtype=np.int64)
    drawn = 0
    batch = max(64, int(2.3 * L * (math.log(L) + 1.0)))
    while True:
        u = rng.random(batch)
        if cum is None:
            items = np.minimum((u * L).astype(np.int64), L - 1)
        else:
            items = np.searchsorted(cum, u, side="right")
        idx = drawn + np.arange(batch, dtype=np.int64)
        ok = items < L
        tmp = np.full(L, np.iinfo(np.int64).max, dtype=np.int64)
        np.minimum.at(tmp, items[ok], idx[ok])
        hit = (first < 0) & (tmp < np.iinfo(np.int64).max)
        first[hit] = tmp[hit]
        drawn += batch
        if np.all(first >= 0):
            return int(first.max()) + 1
        batch *= 2


def coupon_experiment(L: int, A: float, trials: int, seed: int = 0,
                      probabilities=None, a1: float = 1.0,
                      a2: float = 1.0) -> dict:
    """Empirical P(tau_L < A*L) over independent albums, against the
    analytic tail bound."""
    rng = np.random.default_rng(seed)
    taus = np.array([coupon_run(L, probabilities, rng=rng)
                     for _ in range(trials)], dtype=np.int64)
    emp = float((taus < A * L).mean())
    bound = coupon_tail_bound(A, L, a1, a2)
    return {"L": L, "A": A, "trials": trials, "empirical": emp,
            "bound": bound, "dominated": emp <= bound,
            "mean_tau": float(taus.mean()), "max_tau": int(taus.max())}


def coupon_probs_from_profile(profile) -> tuple[np.ndarray, float, float]:
    """Per-site hit probabilities of a flash cell, with the fitted
    sandwich constants (a1/L <= p <= a2/L)."""
    p = np.asarray(profile.scaled, dtype=np.float64) / profile.h ** len(
        profile.z_j)
    L = len(p)
    if np.any(p <= 0):
        raise ValueError("profile has unhit sites; raise the sample count")
    return p, float(L * p.min()), float(L * p.max())


# --------------------------------------------------------- tile crossings

def _tile_membership(cover: shells.TileCover, table: shells.ShellTable):
    """site key -> tile index list, for all of Sigma_j (thin cones)."""
    sig = shells.sigma_sites(cover.j, table).astype(np.float64)
    cen = cover.centers.astype(np.float64)
    czz = (cen * cen).sum(axis=1)
    n2 = (sig * sig).sum(axis=1)
    ap2 = cover.spacing * cover.spacing
    site2tiles: dict[bytes, list[int]] = {}
    keys = _row_keys(sig.astype(np.int64))
    for lo in range(0, len(sig), 512):
        hi = min(lo + 512, len(sig))
        dot = sig[lo:hi] @ cen.T
        t = np.sqrt(czz[None, :] / n2[lo:hi, None])
        rd = 2.0 * (czz[None, :] - t * dot)
        for i, j in zip(*np.nonzero(rd < ap2)):
            site2tiles.setdefault(bytes(keys[lo + i]), []).append(int(j))
    return site2tiles, len(cover.centers)


def w_k_tile_check(n: float, seeds, ks, d: int = 3, h0: float = 8.0,
                   step_cap: int = STEP_CAP) -> dict:
    """Per-tile wave crossing counts W_k(T) against the expected scale
    (n - r_k) * h_k^(d-1), one fitted constant across all requested shells.
    """
    ks = [int(k) for k in ks]
    N = growth.explorers_for_radius(d, n)
    table = shells.build_shells(d, h0, growth.coverage_radius(d, h0, N))
    member = {}
    n_tiles = {}
    for k in ks:
        cover = shells.tile_centers(k, table)
        member[k], n_tiles[k] = _tile_membership(cover, table)
    totals = {k: 0.0 for k in ks}
    unassigned = {k: 0 for k in ks}
    used = 0
    covered_runs = 0
    for seed in seeds:
        used += 1
        flash = growth.flashing_grow_direct(N, seed, d=d, h0=h0, table=table,
                                            step_cap=step_cap)
        hole = flash.min_unoccupied_norm()
        if all(hole >= table.r[k] - table.h[k] for k in ks):
            covered_runs += 1
        for ws in growth.wave_states(N, seed, ks, d=d, h0=h0, table=table,
                                     step_cap=step_cap):
            uniq, cnt = np.unique(_row_keys(ws.positions),
                                  return_counts=True)
            m = member[ws.k]
            for key, c in zip(uniq.tolist(), cnt.tolist()):
                tiles = m.get(key)
                if tiles is None:
                    unassigned[ws.k] += c
                else:
                    totals[ws.k] += c * len(tiles)
    mean_w = {k: totals[k] / (n_tiles[k] * used) for k in ks}
    scale = {k: (n - float(table.r[k])) * float(table.h[k]) ** (d - 1)
             for k in ks}
    num = sum(mean_w[k] * scale[k] for k in ks)
    den = sum(scale[k] ** 2 for k in ks)
    khat = num / den
    band = {k: 0.5 * khat * scale[k] <= mean_w[k] <= 2.0 * khat * scale[k]
            for k in ks}
    return {"n": n, "N": N, "d": d, "ks": ks, "mean_w": mean_w,
            "scale": scale, "kappa1_hat": khat, "in_band": band,
            "all_in_band": all(band.values()), "n_tiles": n_tiles,
            "unassigned": unassigned, "seeds_used": used,
            "covered_runs": covered_runs}
