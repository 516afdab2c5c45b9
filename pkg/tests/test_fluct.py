"""Error statistics, exponent fits, coupon runs, tile crossing counts."""

import math

import numpy as np
import pytest

from idlalab import fluct, growth, lattice, shells, walks


def _brute_min_unoccupied_norm(cluster):
    occupied = {tuple(s) for s in cluster.sites.tolist()}
    probe = lattice.ball_sites(np.zeros(cluster.d, dtype=np.int64),
                               cluster.max_norm() + 2.0)
    n2 = (probe * probe).sum(axis=1)
    free = np.array([tuple(s) not in occupied for s in probe.tolist()])
    return math.sqrt(float(n2[free].min()))


# ------------------------------------------------------------- error defs

def test_error_definitions_against_brute_force():
    cl = growth.idla_grow(300, 9)
    hole = _brute_min_unoccupied_norm(cl)
    far = float(np.sqrt((cl.sites * cl.sites).sum(axis=1)).max())
    n = growth.radius_estimate(3, 300)
    assert fluct.inner_error(cl, n) == pytest.approx(max(0.0, n - hole))
    assert fluct.outer_error(cl, n) == pytest.approx(max(0.0, far - n))


def test_errors_clamp_at_zero():
    cl = growth.idla_grow(150, 2)
    assert fluct.inner_error(cl, 0.5) == 0.0   # hole is past n
    assert fluct.outer_error(cl, 50.0) == 0.0  # nothing settled past n


def test_record_collapses_flashing_schedules():
    direct = growth.flashing_grow_direct(40, 1)
    waves = growth.flashing_grow_waves(40, 1)
    assert direct.process == "flashing-direct"
    assert waves.process == "flashing-waves"
    a = fluct.error_record(direct, 3.0)
    b = fluct.error_record(waves, 3.0)
    assert a.process == b.process == "flashing"
    assert a == b  # schedules build identical clusters
    assert fluct.error_record(growth.idla_grow(40, 1), 3.0).process == "idla"


# ---------------------------------------------------------------- storage

def test_csv_roundtrip_is_exact(tmp_path):
    cl = growth.idla_grow(200, 4)
    recs = [fluct.error_record(cl, n) for n in (3.0, 3.5, 4.0)]
    path = tmp_path / "errors.csv"
    fluct.append_records(path, recs[:2])
    fluct.append_records(path, recs[2:])  # header written once
    back = fluct.read_records(path)
    assert back == recs
    assert path.read_text().count("process") == 1


def test_read_missing_file_is_empty(tmp_path):
    assert fluct.read_records(tmp_path / "nope.csv") == []


def test_jsonl_dump(tmp_path):
    cl = growth.idla_grow(60, 8)
    rec = fluct.error_record(cl, 2.5)
    path = tmp_path / "errors.jsonl"
    fluct.write_jsonl(path, [rec])
    import json
    row = json.loads(path.read_text().strip())
    assert row["seed"] == 8 and row["process"] == "idla"
    assert row["delta_in"] == rec.delta_in


def test_ensemble_streams_and_resumes(tmp_path):
    path = tmp_path / "run.csv"
    first = fluct.run_error_ensemble("idla", 3, [3.0, 4.0], range(3),
                                     out_path=path)
    assert len(first) == 6
    assert len(fluct.read_records(path)) == 6
    # second call replays from the file instead of regrowing
    again = fluct.run_error_ensemble("idla", 3, [3.0, 4.0], range(3),
                                     out_path=path)
    assert again == first
    assert len(fluct.read_records(path)) == 6  # no duplicate rows
    with pytest.raises(ValueError, match="unknown process"):
        fluct.run_error_ensemble("dla", 3, [3.0], range(1))


# ------------------------------------------------------------ exponent fit

def _synthetic_records(alpha, ns, n_seeds=120, process="flashing", d=3):
    rs = np.random.default_rng(0)
    base = rs.lognormal(0.0, 0.4, size=n_seeds)  # shared across n
    recs = []
    for n in ns:
        for s, x in enumerate(base):
            recs.append(fluct.ErrorRecord(process=process, d=d, n=float(n),
                                          N=0, seed=s,
                                          delta_in=float(x * n ** alpha),
                                          delta_out=0.0))
    return recs


def test_fit_recovers_planted_exponent():
    # shared noise across n makes every statistic scale exactly as n^alpha
    recs = _synthetic_records(0.25, [10, 15, 22, 33, 50])
    for stat in ("std", "q90", "max"):
        fit = fluct.fit_exponent(recs, statistic=stat)
        assert fit.exponent == pytest.approx(0.25, abs=1e-12)
        assert fit.ci_low <= 0.25 <= fit.ci_high
    assert fit.n_range == (10.0, 50.0)
    assert fit.seeds_per_n == (120,) * 5


def test_fit_filters_by_process():
    recs = _synthetic_records(0.25, [10, 15, 22, 33, 50])
    recs += _synthetic_records(0.4, [10, 15, 22, 33, 50], process="idla")
    fit = fluct.fit_exponent(recs, process="idla")
    assert fit.exponent == pytest.approx(0.4, abs=1e-12)


def test_fit_guards():
    ns5 = [10, 15, 22, 33, 50]
    with pytest.raises(ValueError, match="statistic must"):
        fluct.fit_exponent(_synthetic_records(0.25, ns5), statistic="mean")
    with pytest.raises(ValueError, match="distinct n"):
        fluct.fit_exponent(_synthetic_records(0.25, [10, 15, 30]))
    with pytest.raises(ValueError, match="span factor"):
        fluct.fit_exponent(_synthetic_records(0.25, [10, 12, 14, 16, 18]))
    with pytest.raises(ValueError, match="seeds per n"):
        fluct.fit_exponent(_synthetic_records(0.25, ns5, n_seeds=20))
    flat = _synthetic_records(0.25, ns5)
    flat = [fluct.ErrorRecord(r.process, r.d, r.n, r.N, r.seed, 0.0, 0.0)
            for r in flat]
    with pytest.raises(ValueError, match="vanished"):
        fluct.fit_exponent(flat)


def test_fit_json_dump():
    fit = fluct.fit_exponent(_synthetic_records(0.25, [10, 15, 22, 33, 50]))
    import json
    blob = json.loads(fit.to_json())
    assert blob["exponent"] == pytest.approx(0.25)
    assert blob["statistic"] == "std"


# -------------------------------------------------------- optimality probe

def test_optimality_probe_flat_ratio():
    recs = _synthetic_records(0.25, [16, 32, 64])  # alpha = 1/(d+1) for d=3
    rep = fluct.optimality_probe(recs)
    assert rep["exponent"] == pytest.approx(0.25)
    assert rep["non_decreasing"] and rep["last_ge_first"]
    assert rep["median_ratio"][0] == pytest.approx(rep["median_ratio"][-1])


def test_optimality_probe_guards():
    with pytest.raises(ValueError, match="flashing"):
        fluct.optimality_probe(_synthetic_records(0.25, [16, 32],
                                                  process="idla"))
    with pytest.raises(ValueError, match=">= 2 distinct"):
        fluct.optimality_probe(_synthetic_records(0.25, [16]))
    mixed = _synthetic_records(0.25, [16, 32], d=3)
    mixed += _synthetic_records(0.25, [16, 32], d=4)
    with pytest.raises(ValueError, match="mixed dimensions"):
        fluct.optimality_probe(mixed)


# ------------------------------------------------------------ coupon album

def test_single_item_album_needs_one_draw():
    assert fluct.coupon_run(1, seed=5) == 1
    with pytest.raises(ValueError, match="album size"):
        fluct.coupon_run(0)


def test_album_mean_matches_harmonic_sum():
    rs = np.random.default_rng(11)
    taus = np.array([fluct.coupon_run(10, rng=rs) for _ in range(4000)])
    h10 = sum(1.0 / i for i in range(1, 11))
    assert abs(taus.mean() - 10.0 * h10) < 1.0
    assert taus.min() >= 10


def test_deficient_probabilities_slow_the_album():
    # mass 0.5 spread evenly: completion time doubles
    rs = np.random.default_rng(4)
    taus = np.array([fluct.coupon_run(10, probabilities=np.full(10, 0.05),
                                      rng=rs) for _ in range(500)])
    h10 = sum(1.0 / i for i in range(1, 11))
    assert abs(taus.mean() - 20.0 * h10) < 3.0


def test_probability_validation():
    with pytest.raises(ValueError, match="need 10 probabilities"):
        fluct.coupon_run(10, probabilities=[0.5, 0.5])
    with pytest.raises(ValueError, match="positive"):
        fluct.coupon_run(2, probabilities=[0.5, 0.0])
    with pytest.raises(ValueError, match="sum past 1"):
        fluct.coupon_run(2, probabilities=[0.8, 0.8])


def test_tail_bound_formula_and_dominance():
    assert fluct.coupon_tail_bound(1.0, 100) == pytest.approx(
        math.exp(-(math.exp(-2.0) / 4.0) * 10.0))
    rep = fluct.coupon_experiment(10, 3.0, 2000, seed=3)
    assert rep["empirical"] == pytest.approx(0.566, abs=1e-12)
    assert rep["bound"] == pytest.approx(
        math.exp(-(9.0 * math.exp(-6.0) / 4.0) * math.sqrt(10.0)))
    assert rep["dominated"]
    assert rep["mean_tau"] == pytest.approx(29.5995, abs=1e-4)


def test_impossible_early_completion():
    # tau >= L always, so P(tau < L) is exactly zero under A = 1
    rep = fluct.coupon_experiment(30, 1.0, 200, seed=0)
    assert rep["empirical"] == 0.0
    assert rep["dominated"]


def test_album_probs_from_hitting_profile():
    table = shells.build_shells(3, 8.0, 30.0)
    prof = walks.uniform_hitting_profile(2, 1, table, 400_000)
    p, a1, a2 = fluct.coupon_probs_from_profile(prof)
    assert len(p) == 4
    assert 0.0 < a1 <= 1.0 <= a2 or a1 <= a2  # sandwich is ordered
    assert a1 == pytest.approx(0.0746, abs=2e-3)
    assert a2 == pytest.approx(0.7252, abs=2e-3)
    assert p.sum() < 1.0
    tau = fluct.coupon_run(len(p), probabilities=p, seed=12)
    assert tau >= len(p)


# ---------------------------------------------------------- tile crossings

def test_tile_crossings_share_one_constant():
    rep = fluct.w_k_tile_check(20.0, range(2), [1, 2])
    assert rep["N"] == 33371
    assert rep["n_tiles"] == {1: 1050, 2: 1958}
    assert rep["unassigned"] == {1: 0, 2: 0}
    assert rep["all_in_band"]
    assert 0.5 < rep["kappa1_hat"] < 1.5
    for k in (1, 2):
        assert rep["mean_w"][k] > 0.0
        assert rep["scale"][k] > 0.0
