"""Command line front end: grow, verify, fluct, coupon,
potential-report, bench.

Exit codes: 0 all checks passed, 1 assertion/runtime failure, 2 usage
or configuration error.  IDLALAB_OUT and IDLALAB_WORKERS override the
output directory and worker count.
"""

from __future__ import annotations

import argparse
import json
import math
import multiprocessing as mp
import os
import sys
import time

import numpy as np

from . import coupling, fluct, growth, io, kernels, lattice, potential, \
    shells, walks

KNOWN_ERRORS = (shells.CoverageError, walks.StepCapError,
                potential.SolverError, coupling.CouplingError,
                lattice.MemoryBudgetError, ValueError, OSError)


def _out_dir(args) -> str:
    out = args.out or os.environ.get("IDLALAB_OUT") or "runs"
    os.makedirs(out, exist_ok=True)
    return out


def _workers(args) -> int:
    if args.workers is not None:
        return max(1, args.workers)
    env = os.environ.get("IDLALAB_WORKERS")
    return max(1, int(env)) if env else (os.cpu_count() or 1)


def _map_seeds(workers: int, fn, items):
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with mp.Pool(min(workers, len(items))) as pool:
        return pool.map(fn, items)


def _ints(text: str) -> list[int]:
    return [int(t) for t in text.split(",") if t.strip()]


def _floats(text: str) -> list[float]:
    return [float(t) for t in text.split(",") if t.strip()]


# ------------------------------------------------------------------- grow

def _grow_one(job):
    (process, d, N, n, seed, h0, step_cap, out) = job
    if process == "idla":
        cl = growth.idla_grow(N, seed, d=d, step_cap=step_cap)
    elif process == "flashing-direct":
        cl = growth.flashing_grow_direct(N, seed, d=d, h0=h0,
                                         step_cap=step_cap)
    elif process == "flashing-waves":
        cl = growth.flashing_grow_waves(N, seed, d=d, h0=h0,
                                        step_cap=step_cap)
    elif process == "coupled":
        cl = coupling.coupled_grow(N, seed, d=d, h0=h0, verify=True,
                                   out_dir=out, step_cap=step_cap).cluster
    else:
        raise ValueError(f"unknown process {process}")
    snap = os.path.join(out, f"{process}_d{d}_seed{seed}.snap")
    digest = io.save_snapshot(snap, cl)
    rec = fluct.error_record(cl, n) if n is not None else None
    return seed, digest, snap, rec


def cmd_grow(args, parser) -> int:
    out = _out_dir(args)
    d = args.d
    if args.n is not None:
        n = float(args.n)
        N = growth.explorers_for_radius(d, n)
    else:
        N = args.N
        n = growth.radius_estimate(d, N)
    seeds = list(range(args.seed, args.seed + args.seeds))
    t0 = time.time()
    jobs = [(args.process, d, N, n, s, args.h0, args.step_cap, out)
            for s in seeds]
    results = _map_seeds(_workers(args), _grow_one, jobs)
    results.sort(key=lambda r: r[0])
    recs = [r for _, _, _, r in results if r is not None]
    if recs:
        done = {r.key() for r in fluct.read_records(
            os.path.join(out, "records.csv"))}
        fluct.append_records(os.path.join(out, "records.csv"),
                             [r for r in recs if r.key() not in done])
    io.write_manifest(
        os.path.join(out, "manifest.json"),
        {"cmd": "grow", "process": args.process, "d": d, "n": n, "N": N,
         "master_seed": args.seed, "seeds": seeds, "h0": args.h0,
         "step_cap": args.step_cap}, time.time() - t0)
    for seed, digest, snap, rec in results:
        extra = (f"  delta_in={rec.delta_in:.4f} delta_out="
                 f"{rec.delta_out:.4f}") if rec else ""
        print(f"seed {seed}  sha256={digest}{extra}  {snap}")
    return 0


# ------------------------------------------------------------------ verify

def _row(rows, name, ok, value) -> bool:
    rows.append({"check": name, "pass": bool(ok), "value": value})
    print(f"{'PASS' if ok else 'FAIL'}  {name}: {value}")
    return bool(ok)


def _suite_geometry(args) -> tuple[bool, list]:
    rows = []
    ok = True
    d = args.d
    table = shells.build_shells(d, 8.0, 700.0)
    r, h = table.r[1:], table.h[1:]
    err = float(np.abs(h - r ** (1.0 / (d + 1))).max())
    ok &= _row(rows, "shell-law h=r^(1/(d+1))", err <= 1e-9, err)
    ok &= _row(rows, "edges strictly increasing",
               bool(np.all(np.diff(table.edges) > 0)), table.n_shells)
    t2 = shells.build_shells(d, 8.0, 350.0)
    stable = np.array_equal(t2.r, table.r[:t2.n_shells])
    ok &= _row(rows, "prefix stable under extension", stable, t2.n_shells)
    rad = 20.0 if d == 3 else 10.0
    ann = lattice.annulus_sites(1.0, rad, d)
    nn = lattice.inward_neighbors(ann)
    drop = np.sqrt((ann * ann).sum(1)) - np.sqrt((nn * nn).sum(1))
    need = 1.0 / (2.0 * math.sqrt(d))
    ok &= _row(rows, "inward neighbor norm drop >= 1/(2 sqrt d)",
               bool(np.all(drop >= need - 1e-12)), float(drop.min()))
    # uniform-hitting lower bound needs h_j >= 8; take the first such shell
    wide = shells.build_shells(d, 8.0, 8.0 ** (d + 1) * 1.05)
    j = 1 + int(np.argmax(wide.h[1:] >= 8.0))
    prof = walks.uniform_hitting_profile(11, j, wide, samples=1_000_000)
    ok &= _row(rows, f"flash hitting: min scaled prob > 0 (h={wide.h[j]:.1f})",
               float(prof.scaled.min()) > 0.0, float(prof.scaled.min()))
    if d == 3 and kernels.IMPL == "compiled":
        big = shells.build_shells(3, 8.0, 460.0)
        j = int(np.searchsorted(big.r, 415.0))
        counts, _, maxmin = kernels.covering_scan(
            float(big.r[j]), float(big.h[j]), big.inner_edge(j),
            float(big.edges[j]), 1.0, float(big.h[j]) / 5.0,
            float(big.h[j]) / 2.0, False, True)
        ok &= _row(rows, f"shell r={big.r[j]:.0f} thin-cone covering",
                   counts[3] == 0 and counts[4] == 0,
                   {"uncovered": int(counts[3]), "feature": int(counts[4]),
                    "maxmin_rd": maxmin})
    return ok, rows


def _suite_coupling(args) -> tuple[bool, list]:
    rows = []
    ok = True
    d = args.d
    n = args.n if args.n is not None else 20.0
    N = growth.explorers_for_radius(d, n)
    blues, chains = [], []
    for seed in range(args.seed, args.seed + args.seeds):
        res = coupling.coupled_grow(N, seed, d=d, verify=True,
                                    out_dir=args.out)
        sw = coupling.verify_sandwich(res.cluster, res.flash_cluster,
                                      res.table)
        if sw["violations"]:
            ok &= _row(rows, f"sandwich seed {seed}", False,
                       sw["violations"])
        blues.append(res.checks["n_blue"])
        chains.append(res.chain_max)
    ok &= _row(rows, f"coupled invariants x{args.seeds} (N={N})", True,
               {"blue_mean": float(np.mean(blues)),
                "chain_max": int(max(chains))})
    return ok, rows


def _suite_potential(args) -> tuple[bool, list]:
    rows = []
    ok = True
    n = args.n if args.n is not None else 12.0
    rep = potential.mean_value_discrepancy(n, n ** (1.0 / 3.0), "full")
    ok &= _row(rows, f"mean-value full boundary exactly 0 (n={n:g})",
               rep.lhs <= 1e-9, rep.lhs)
    ring = lattice.boundary(lattice.ball_sites(0, n, 3), 3)
    single = potential.mean_value_discrepancy(n, n ** (1.0 / 3.0), ring[:1])
    ok &= _row(rows, "mean-value singleton ratio", True, single.ratio)
    mart = potential.martingale_report(lattice.ball_sites(0, 8.0, 3),
                                       (1, 2, 0))
    ok &= _row(rows, "martingale exit identity gap <= 1e-9",
               mart["gap"] <= 1e-9, mart["gap"])
    ok &= _row(rows, "exit mass = 1 +- 1e-10",
               abs(mart["mass"] - 1.0) <= 1e-10, mart["mass"] - 1.0)
    ga = potential.green_free_asymptotics(
        np.array([[3, 2, 1], [1, 2, 3], [-3, -2, 1]]), box_half=24)
    sym = float(np.abs(ga.g - ga.g[0]).max())
    ok &= _row(rows, "Green lattice symmetry <= 1e-10", sym <= 1e-10, sym)
    return ok, rows


def _suite_coupon(args) -> tuple[bool, list]:
    rows = []
    ok = True
    for L in (100, 400, 900):
        ex = fluct.coupon_experiment(L, 1.0, args.trials, seed=args.seed)
        ok &= _row(rows, f"coupon tail dominance L={L}",
                   ex["dominated"],
                   {"empirical": ex["empirical"], "bound": ex["bound"]})
    mean = np.mean([fluct.coupon_run(10, seed=1000 + t)
                    for t in range(20_000)])
    target = 10.0 * sum(1.0 / k for k in range(1, 11))
    ok &= _row(rows, "uniform L=10 mean vs 10*H_10",
               abs(mean - target) <= 0.3, float(mean - target))
    return ok, rows


def cmd_verify(args, parser) -> int:
    out = _out_dir(args)
    suites = {"geometry": _suite_geometry, "coupling": _suite_coupling,
              "potential": _suite_potential, "coupon": _suite_coupon}
    t0 = time.time()
    ok, rows = suites[args.suite](args)
    path = os.path.join(out, f"verify_{args.suite}.json")
    with open(path, "w") as fh:
        json.dump({"suite": args.suite, "pass": ok, "rows": rows,
                   "wall_time_s": time.time() - t0}, fh, indent=2,
                  default=str)
    print(f"report: {path}")
    return 0 if ok else 1


# ------------------------------------------------------------------- fluct

def _fluct_worker(job):
    process, d, n, seed, h0, step_cap = job
    N = growth.explorers_for_radius(d, n)
    if process == "idla":
        cl = growth.idla_grow(N, seed, d=d, step_cap=step_cap)
    else:
        cl = growth.flashing_grow_direct(N, seed, d=d, h0=h0,
                                         step_cap=step_cap)
    return fluct.error_record(cl, n)


def cmd_fluct(args, parser) -> int:
    out = _out_dir(args)
    n_values = sorted(_floats(args.n))
    if len(n_values) < args.min_n_values:
        parser.error(f"need >= {args.min_n_values} n values, "
                     f"got {len(n_values)}")
    if n_values[0] <= 0 or n_values[-1] / n_values[0] < args.min_span:
        parser.error(f"n values must span a factor {args.min_span}")
    if args.seeds < args.min_seeds:
        parser.error(f"need >= {args.min_seeds} seeds per n")
    rec_path = os.path.join(out, "records.csv")
    done = {r.key() for r in fluct.read_records(rec_path)} \
        if args.resume else set()
    t0 = time.time()
    jobs = [(args.process, args.d, n, s, args.h0, args.step_cap)
            for n in n_values
            for s in range(args.seed, args.seed + args.seeds)
            if (args.process, args.d, float(n), s) not in done]
    for i in range(0, len(jobs), 64):
        batch = _map_seeds(_workers(args), _fluct_worker, jobs[i:i + 64])
        fluct.append_records(rec_path, batch)
    records = [r for r in fluct.read_records(rec_path)
               if r.process == args.process and r.d == args.d
               and r.n in n_values
               and args.seed <= r.seed < args.seed + args.seeds]
    fit = fluct.fit_exponent(records, statistic=args.statistic,
                             min_n_values=args.min_n_values,
                             min_seeds=args.min_seeds,
                             min_span=args.min_span)
    with open(os.path.join(out, "fit.json"), "w") as fh:
        fh.write(fit.to_json())
    with open(os.path.join(out, "summary.csv"), "w") as fh:
        fh.write("n,count,mean,std,q90,max\n")
        for n in n_values:
            v = np.array([r.delta_in for r in records if r.n == n])
            fh.write(f"{n:g},{len(v)},{v.mean()!r},{v.std(ddof=1)!r},"
                     f"{np.quantile(v, 0.9)!r},{v.max()!r}\n")
    io.write_manifest(
        os.path.join(out, "manifest.json"),
        {"cmd": "fluct", "process": args.process, "d": args.d,
         "n": n_values, "master_seed": args.seed, "seeds": args.seeds,
         "h0": args.h0, "statistic": args.statistic}, time.time() - t0)
    print(f"slope {fit.exponent:.4f}  CI [{fit.ci_low:.4f}, "
          f"{fit.ci_high:.4f}]  statistic={fit.statistic}")
    return 0


# ------------------------------------------------------------------ coupon

def cmd_coupon(args, parser) -> int:
    out = _out_dir(args)
    rows = [fluct.coupon_experiment(L, args.A, args.trials, seed=args.seed)
            for L in _ints(args.L)]
    with open(os.path.join(out, "coupon.json"), "w") as fh:
        json.dump(rows, fh, indent=2)
    ok = True
    for row in rows:
        ok &= row["dominated"]
        print(f"{'PASS' if row['dominated'] else 'FAIL'}  L={row['L']} "
              f"A={row['A']}: empirical {row['empirical']:.3e} "
              f"<= bound {row['bound']:.3e}")
    return 0 if ok else 1


# -------------------------------------------------------- potential-report

def cmd_potential_report(args, parser) -> int:
    out = _out_dir(args)
    n = args.n
    delta = args.delta if args.delta is not None else n ** (1.0 / 3.0)
    doc = {"d": 3, "n": n, "delta_n": delta}
    rep = potential.mean_value_discrepancy(n, delta, "full")
    doc["mean_value_full_lhs"] = rep.lhs
    ring = lattice.boundary(lattice.ball_sites(0, n, 3), 3)
    doc["mean_value_singleton_ratio"] = potential.mean_value_discrepancy(
        n, delta, ring[:1]).ratio
    z = (int(math.ceil(n)) - 1, 0, 0)
    ann = potential.annulus_time_profile(n, delta, z)
    doc["annulus"] = {"z": list(z), "lhs": ann.lhs, "rhs": ann.rhs,
                      "alpha0": ann.alpha0, "ratio": ann.ratio}
    zs = lattice.annulus_sites(3.0, args.green_max_norm + 1e-9, 3)
    ga = potential.green_free_asymptotics(zs)
    doc["green"] = {"c_3": ga.c_d, "box_half": ga.box_half,
                    "max_scaled_err": ga.max_scaled_err}
    doc["constants"] = [
        potential.constants_entry("K_a_hat", 3,
                                  [(n, doc["mean_value_singleton_ratio"])]),
        potential.constants_entry("K_b_hat", 3, [(n, ann.ratio)]),
    ]
    path = os.path.join(out, "potential_report.json")
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)
    print(json.dumps(doc, indent=2, default=str))
    return 0


# ------------------------------------------------------------------- bench

def cmd_bench(args, parser) -> int:
    back = kernels.backends()
    if len(back) < 2:
        print("only one backend available; nothing to compare")
    n = args.n
    N = growth.explorers_for_radius(3, n)
    report = {}
    for name, mod in back.items():
        t0 = time.time()
        box_half = growth._box_half(3, N)
        mod.idla_grow(1, 3, N, growth._alloc_grid(3, box_half), box_half,
                      walks.STEP_CAP)
        t_idla = time.time() - t0
        table = shells.build_shells(3, 8.0, growth.coverage_radius(3, 8., N))
        t0 = time.time()
        mod.flashing_grow(1, 3, N, table.r, table.r_sq, table.edges,
                          table.edges_sq, table.h, table.inv_hd,
                          (table.h * 0.5) ** 2, 1.0 / 3,
                          growth._alloc_grid(3, box_half), box_half,
                          walks.STEP_CAP, False, -1, None, None)
        report[name] = {"idla_s": t_idla, "flashing_s": time.time() - t0}
        print(f"{name:9s} idla {t_idla:8.3f}s   flashing "
              f"{report[name]['flashing_s']:8.3f}s   (N={N})")
    if len(report) == 2:
        sp = {k: report["python"][k] / report["compiled"][k]
              for k in ("idla_s", "flashing_s")}
        print(f"speedup: idla x{sp['idla_s']:.0f}, "
              f"flashing x{sp['flashing_s']:.0f}")
    out = _out_dir(args)
    with open(os.path.join(out, "bench.json"), "w") as fh:
        json.dump({"n": n, "N": N, "timings": report}, fh, indent=2)
    return 0


# ------------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="idlalab",
        description="Cluster growth, coupling checks, potential-theory "
                    "oracles, and fluctuation statistics on Z^d.")
    p.add_argument("--config", help="JSON file of flag defaults")
    sub = p.add_subparsers(dest="cmd", required=True)

    def common(q):
        q.add_argument("--d", type=int, default=3)
        q.add_argument("--seed", type=int, default=0)
        q.add_argument("--h0", type=float, default=8.0)
        q.add_argument("--step-cap", type=int, default=walks.STEP_CAP)
        q.add_argument("--out", default=None)
        q.add_argument("--workers", type=int, default=None)

    g = sub.add_parser("grow", help="grow clusters, snapshot, record")
    common(g)
    g.add_argument("--process", required=True,
                   choices=["idla", "flashing-direct", "flashing-waves",
                            "coupled"])
    g.add_argument("--n", type=float, default=None)
    g.add_argument("--N", type=int, default=None)
    g.add_argument("--seeds", type=int, default=1)
    g.set_defaults(fn=cmd_grow)

    v = sub.add_parser("verify", help="run an invariant suite")
    common(v)
    v.add_argument("--suite", required=True,
                   choices=["geometry", "coupling", "potential", "coupon"])
    v.add_argument("--n", type=float, default=None)
    v.add_argument("--seeds", type=int, default=10)
    v.add_argument("--trials", type=int, default=10_000)
    v.set_defaults(fn=cmd_verify)

    f = sub.add_parser("fluct", help="delta ensembles and exponent fit")
    common(f)
    f.add_argument("--process", choices=["idla", "flashing"],
                   default="flashing")
    f.add_argument("--n", required=True, help="comma list, e.g. 30,45,60")
    f.add_argument("--seeds", type=int, default=200)
    f.add_argument("--statistic", choices=["std", "q90", "max"],
                   default="std")
    f.add_argument("--min-n-values", type=int, default=5)
    f.add_argument("--min-seeds", type=int, default=100)
    f.add_argument("--min-span", type=float, default=3.0)
    f.add_argument("--no-resume", dest="resume", action="store_false")
    f.set_defaults(fn=cmd_fluct, resume=True)

    c = sub.add_parser("coupon", help="coupon-collector tail experiment")
    common(c)
    c.add_argument("--L", default="100,400,900")
    c.add_argument("--A", type=float, default=1.0)
    c.add_argument("--trials", type=int, default=10_000)
    c.set_defaults(fn=cmd_coupon)

    r = sub.add_parser("potential-report",
                       help="mean-value, annulus, and Green reports")
    common(r)
    r.add_argument("--n", type=float, default=12.0)
    r.add_argument("--delta", type=float, default=None)
    r.add_argument("--green-max-norm", type=float, default=5.0)
    r.set_defaults(fn=cmd_potential_report)

    b = sub.add_parser("bench", help="compiled vs python kernel timings")
    common(b)
    b.add_argument("--n", type=float, default=16.0)
    b.set_defaults(fn=cmd_bench)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args, _ = parser.parse_known_args(argv)
    if args.config:
        with open(args.config) as fh:
            parser.set_defaults(**json.load(fh))
    args = parser.parse_args(argv)
    if getattr(args, "d", 3) < 3:
        parser.error("d >= 3 required: the processes here are transient "
                     "and d = 2 is out of scope")
    if getattr(args, "cmd", None) == "grow" and \
            (args.n is None) == (args.N is None):
        parser.error("grow needs exactly one of --n or --N")
    try:
        return args.fn(args, parser)
    except KNOWN_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
