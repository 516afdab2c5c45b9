"""Blue/red coupled growth: bookkeeping invariants, sandwich containments,
and the marginal-law statistics."""

import json

import numpy as np
import pytest
from scipy import stats

from idlalab import coupling, growth, shells


def test_single_explorer_blue_iff_flash_consumed():
    # the lone walker settles at the origin; it is blue exactly when its
    # flashing trajectory was fully consumed, i.e. had length zero
    reds = 0
    for s in range(60):
        res = coupling.coupled_grow(1, s)
        assert np.array_equal(res.cluster.sites, np.zeros((1, 3), np.int64))
        assert res.flash_cluster.n_sites == 1
        assert res.labels.tolist() == [0]
        assert bool(res.blue[0]) == (res.tcons[0] == res.tau[0])
        assert bool(res.blue[0]) == (res.tau[0] == 0)
        reds += int(not res.blue[0])
    assert reds >= 55                       # blue needs the 1/h0^d draw
    for s in (199, 508):                    # scanned: first blue seeds
        res = coupling.coupled_grow(1, s)
        assert bool(res.blue[0]) and res.tau[0] == 0


def test_midsize_run_bookkeeping():
    N = 4000
    res = coupling.coupled_grow(N, 11)      # verify=True would have raised
    assert res.cluster.process == "coupled"
    assert len(res.cluster.site_set()) == N
    assert np.array_equal(np.sort(res.labels), np.arange(N))
    blue_expl = res.tcons[res.labels] == res.tau[res.labels]
    assert np.array_equal(blue_expl, res.blue)
    assert np.all(res.tcons <= res.tau)
    psi = res.psi()
    assert np.all(psi[res.blue] == res.cluster.sites[res.blue])
    # psi never moves a site into an earlier shell
    kz = shells.shell_index_of_norms(
        res.cluster.norms_sq().astype(np.float64), res.table)
    kp = shells.shell_index_of_norms(
        (psi.astype(np.int64) ** 2).sum(axis=1).astype(np.float64), res.table)
    assert np.all(kp >= kz)
    assert res.checks["n_blue"] == int(res.blue.sum()) > 0
    assert 1 <= res.chain_max <= N
    assert res.checks["orbit_sites"] == N   # DLA walks only touch A(N)


def test_dla_orbits_inside_flashing_orbits():
    res = coupling.coupled_grow(300, 3, keep_record=True)
    rec = res.record
    codes = rec.codes
    steps = np.zeros((len(codes), 3), np.int64)
    steps[np.arange(len(codes)), codes >> 1] = 1 - 2 * (codes & 1).astype(np.int64)
    pos = np.cumsum(steps, axis=0)
    visited = set(map(tuple, pos.tolist()))
    visited.add((0, 0, 0))
    # trajectory segments restart at the origin, so subtract each
    # explorer's carry-over before collecting its sites
    off = rec.offsets
    for i in range(300):
        lo, hi = off[i], off[i + 1]
        if lo == 0 or lo == hi:
            continue
        seg = pos[lo:hi] - pos[lo - 1]
        visited.update(map(tuple, seg.tolist()))
    assert res.cluster.site_set() <= visited


def test_sandwich_zero_violations_both_directions():
    # N sized so the flashing cluster fills the central ball: the
    # filled-ball transfer is then exercised, not vacuous
    res = coupling.coupled_grow(40_000, 0)
    rep = coupling.verify_sandwich(res.cluster, res.flash_cluster, res.table)
    assert rep["violations"] == []
    assert rep["applied"] >= 2
    assert rep["min_hole_sq"]["flashing"] >= res.table.edges_sq[0]
    assert rep["min_hole_sq"]["idla"] >= res.table.edges_sq[0]
    # tiny run: the flashing cluster stays inside the first edges, so the
    # bounded-ball transfer applies and the DLA cluster stays put too
    res5 = coupling.coupled_grow(5, 0)
    rep5 = coupling.verify_sandwich(res5.cluster, res5.flash_cluster, res5.table)
    assert rep5["violations"] == []
    assert rep5["max_norm_sq"]["flashing"] < res5.table.edges_sq[1]
    assert rep5["max_norm_sq"]["idla"] <= rep5["max_norm_sq"]["flashing"]


def test_consumed_prefix_monotone_in_explorer_count():
    prev = None
    for N in (500, 1000, 2000):
        res = coupling.coupled_grow(N, 77)
        assert np.all(res.tcons <= res.tau)
        if prev is not None:
            m = len(prev.tcons)
            assert np.all(res.tcons[:m] >= prev.tcons)
            assert np.array_equal(res.tau[:m], prev.tau)
        prev = res


def test_marginal_law_matches_direct_dla():
    p = coupling.marginal_law_check(12, range(300), range(1000, 1300))
    assert p > 0.01


def test_marginal_law_power_detects_radius_mismatch():
    p = coupling.marginal_law_check(12, range(300), range(1000, 1300),
                                    n_direct=16)
    assert p < 0.01


def test_marginal_law_requires_enough_seeds():
    with pytest.raises(ValueError, match="seeds"):
        coupling.marginal_law_check(12, range(200), range(300))


def test_identical_samples_give_p_one():
    # degenerate case of the two-sample statistic the check is built on
    x = np.repeat(np.arange(10.0), 30)
    assert stats.ks_2samp(x, x, method="asymp").pvalue == 1.0


def test_invariant_failure_writes_repro_bundle(tmp_path):
    with pytest.raises(coupling.CouplingError, match="unconsumed suffix"):
        coupling._fail(3, seed=42, N=7, d=3, h0=8.0, explorer=5, step=9,
                       out_dir=str(tmp_path))
    bundles = list(tmp_path.glob("coupling_repro_42_*.json"))
    assert len(bundles) == 1
    payload = json.loads(bundles[0].read_text())
    assert payload["seed"] == 42 and payload["N"] == 7
    assert payload["invariant"] == 3 and payload["explorer"] == 5
    assert payload["step"] == 9 and payload["d"] == 3
    assert "suffix" in payload["invariant_name"]


def test_bundle_path_lands_in_error_message(tmp_path):
    try:
        coupling._fail(9, seed=1, N=2, d=3, h0=8.0, out_dir=str(tmp_path))
    except coupling.CouplingError as e:
        assert e.bundle_path is not None
        assert "repro bundle" in str(e)
    else:
        raise AssertionError("expected CouplingError")
