"""Walk engine and flashing draws: laws, conventions, stopping rules."""

import math

import numpy as np
import pytest
from scipy import stats

from idlalab import lattice, rng, shells, walks

ORIGIN3 = np.zeros(3, dtype=np.int64)


def _norms(sites):
    a = np.asarray(sites, dtype=np.float64)
    return np.sqrt((a * a).sum(axis=1))


# ------------------------------------------------------------- walk_until

def test_one_step_exit_is_uniform():
    ends, steps, _ = walks.run_region_walks(404, 3, 60_000, ORIGIN3, 1.0)
    assert np.all(steps == 1)
    units = lattice.unit_vectors(3)
    counts = (ends[:, None, :] == units[None, :, :]).all(2).sum(0)
    assert counts.sum() == 60_000
    assert stats.chisquare(counts).pvalue > 0.01


def test_exterior_hitting_scaled_band():
    # hitting law of the sphere from the center: n^(d-1) * P(end = z)
    # bounded above and below by the same constants at n=6 and n=10
    for n in (6, 10):
        ends, _, _ = walks.run_region_walks(12345, 3, 10 ** 6, ORIGIN3, float(n))
        sphere = lattice.sphere_sites(float(n), 3)
        ek = np.unique(walks._row_keys(ends))
        sk = np.unique(walks._row_keys(sphere))
        assert np.array_equal(ek, sk)  # every boundary site hit, none else
        key = {bytes(k): i for i, k in enumerate(sk)}
        counts = np.zeros(len(sphere), dtype=np.int64)
        uq, ct = np.unique(walks._row_keys(ends), return_counts=True)
        for k, c in zip(uq.tolist(), ct.tolist()):
            counts[key[k]] = c
        scaled = n ** 2 * counts / 10 ** 6
        assert 0.02 <= scaled.min() <= scaled.max() <= 0.28


def test_walk_until_record_replays():
    def outside(p):
        return int((p * p).sum()) >= 16

    end, traj, steps = walks.walk_until(rng.Stream(1, 2, 3), ORIGIN3,
                                        outside, record=True)
    traj.check()
    assert np.array_equal(traj.end(), end)
    assert len(traj) == steps
    assert outside(end) and steps >= 4
    end2, traj2, steps2 = walks.walk_until(rng.Stream(1, 2, 3), ORIGIN3,
                                           outside, record=True)
    assert steps2 == steps and np.array_equal(end2, end)
    assert all(np.array_equal(a, b) for a, b in zip(traj.points, traj2.points))


def test_trajectory_check_rejects_bad_chains():
    t = walks.Trajectory(start=ORIGIN3.copy(),
                         points=[np.array([1, 0, 0]), np.array([1, 2, 0])])
    with pytest.raises(ValueError):
        t.check()
    t2 = walks.Trajectory(start=ORIGIN3.copy(),
                          points=[np.array([1, 0, 0])], consumed=5)
    with pytest.raises(ValueError):
        t2.check()


def test_step_cap_trips():
    with pytest.raises(walks.StepCapError):
        walks.walk_until(rng.Stream(0), ORIGIN3, lambda p: False, step_cap=50)


def test_martingale_norm2_minus_time():
    # ||S(t)||^2 - t has constant mean ||z||^2 up to the stopping time
    z = np.array([3, 2, 1], dtype=np.int64)
    ends, steps, _ = walks.run_region_walks(99, 3, 10 ** 5, z, 20.0)
    vals = (ends.astype(np.float64) ** 2).sum(1) - steps
    se = vals.std(ddof=1) / math.sqrt(len(vals))
    assert abs(vals.mean() - 14.0) < 3.0 * se


def test_region_walk_occupation_window():
    ends, steps, occt = walks.run_region_walks(7, 3, 2000, ORIGIN3, 5.0,
                                               occ_window=(0.0, 4.0))
    assert np.all(occt >= 1)          # t=0 counts, start norm2 = 0
    assert np.all(occt <= steps + 1)


# ------------------------------------------------------------ flash draws

@pytest.fixture(scope="module")
def h10_draws():
    """1e6 flash draws at the first shell with h >= 10 (r ~ 1e4)."""
    t = shells.build_shells(3, 8.0, 10300.0)
    j = 1 + int(np.argmax(t.h[1:] >= 10.0))
    xs = np.zeros(10 ** 6, dtype=bool)
    ys = np.zeros(10 ** 6, dtype=bool)
    rs = np.zeros(10 ** 6)
    for i in range(10 ** 6):
        d = walks.draw_flash(rng.Stream(31337, i, j), j, t)
        xs[i], ys[i], rs[i] = d.x, d.y, d.radius
    return t, j, xs, ys, rs


def test_flash_x_rate_h10(h10_draws):
    t, j, xs, _, _ = h10_draws
    assert abs(float(t.h[j]) - 10.0) < 0.01
    p = 1e-3
    tol = 3.0 * math.sqrt(p * (1 - p) / 10 ** 6)
    assert abs(xs.mean() - p) < tol


def test_flash_y_fair_coin(h10_draws):
    _, _, _, ys, _ = h10_draws
    assert abs(ys.mean() - 0.5) < 2e-3  # 4 sigma


def test_flash_radius_inverse_cdf(h10_draws):
    t, j, _, _, rs = h10_draws
    h = float(t.h[j])
    assert 0.0 <= rs.min() and rs.max() <= h
    ecdf = np.arange(1, len(rs) + 1) / len(rs)
    cdf = (np.sort(rs) / h) ** 3
    ks = np.abs(ecdf - cdf).max()
    assert ks < 0.002


def test_flash_y_forced_at_center_shell(table8):
    for a in range(300):
        d = walks.draw_flash(rng.Stream(11, a, 0), 0, table8)
        assert d.y


# ---------------------------------------------------------- flash stops

def test_flash_stop_x_branch(table8):
    z = walks.axis_sigma_site(2, table8)
    site, steps, ok = walks.flash_stop(rng.Stream(5, 0, 2), z,
                                       walks.FlashDraw(True, False, 3.3),
                                       2, table8)
    assert np.array_equal(site, z) and steps == 0 and ok


def test_flash_stop_small_ball_is_one_step(table8):
    # ball radius in (0,1]: the start is inside, every neighbor is out
    z = walks.axis_sigma_site(3, table8)
    seen = set()
    for a in range(600):
        site, steps, _ = walks.flash_stop(rng.Stream(6, a, 3), z,
                                          walks.FlashDraw(False, True, 0.5),
                                          3, table8)
        assert steps == 1
        d = np.abs(site - z).sum()
        assert d == 1
        seen.add(tuple((site - z).tolist()))
    assert len(seen) == 6  # all unit directions occur


def test_flash_stop_zero_radius_degenerates(table8):
    z = walks.axis_sigma_site(3, table8)
    site, steps, ok = walks.flash_stop(rng.Stream(9, 0, 3), z,
                                       walks.FlashDraw(False, True, 0.0),
                                       3, table8)
    assert np.array_equal(site, z) and steps == 0 and ok


def test_flash_stop_annulus_start_outside(table8):
    # R smaller than ||z|| - r_j leaves the start outside the annulus
    j = 1
    z = walks.axis_sigma_site(j, table8)
    gap = float(np.sqrt((z * z).sum())) - float(table8.r[j])
    assert gap > 0.1
    site, steps, ok = walks.flash_stop(rng.Stream(4, 2, j), z,
                                       walks.FlashDraw(False, False, 0.1),
                                       j, table8)
    assert np.array_equal(site, z) and steps == 0 and ok


def test_flash_stop_ball_exit_displacement(table8):
    j = 3
    z = walks.axis_sigma_site(j, table8)
    rho = min(3.5, float(table8.edges[j]) - float(np.sqrt((z * z).sum())))
    for a in range(100):
        site, steps, _ = walks.flash_stop(rng.Stream(8, a, j), z,
                                          walks.FlashDraw(False, True, 3.5),
                                          j, table8)
        d = math.sqrt(float(((site - z) ** 2).sum()))
        assert rho <= d < rho + 1.0
        assert steps >= 1


def test_flash_stop_annulus_exit_norm(table8):
    j = 3
    r = float(table8.r[j])
    z = walks.axis_sigma_site(j, table8)
    for a in range(100):
        site, steps, _ = walks.flash_stop(rng.Stream(12, a, j), z,
                                          walks.FlashDraw(False, False, 2.0),
                                          j, table8)
        n = math.sqrt(float((site * site).sum()))
        assert n < r - 2.0 or n >= r + 2.0
        assert steps >= 1


def test_flash_sites_stay_near_shell(table8):
    # full draw: landing site in S_j or its one-site boundary layer
    j = 3
    z = walks.axis_sigma_site(j, table8)
    lo = table8.inner_edge(j) - 1.0
    hi = float(table8.edges[j]) + 1.0
    for a in range(500):
        st = rng.Stream(21, a, j)
        d = walks.draw_flash(st, j, table8)
        site, _, _ = walks.flash_stop(st, z, d, j, table8)
        n = math.sqrt(float((site * site).sum()))
        assert lo - 1e-9 <= n < hi + 1e-9


# ------------------------------------------------------------- profiles

def test_axis_sigma_site_lands_on_entry_sphere(table8):
    for j in range(1, 7):
        z = walks.axis_sigma_site(j, table8)
        n = float(np.sqrt((z * z).sum()))
        assert float(table8.r[j]) <= n < float(table8.r[j]) + 1.0
        assert shells.shell_index(z, table8) == j
    with pytest.raises(ValueError):
        walks.axis_sigma_site(0, table8)


def test_uniform_hitting_profile_h8_shell():
    t = shells.build_shells(3, 8.0, 4300.0)
    j = 1 + int(np.argmax(t.h[1:] >= 8.0))
    assert float(t.h[j]) >= 8.0
    prof = walks.uniform_hitting_profile(5, j, t, samples=10 ** 6)
    assert prof.smin > 0.0
    zm = np.all(prof.sites == prof.z_j, axis=1)
    assert zm.sum() == 1
    z_scaled = float(prof.scaled[zm][0])
    assert z_scaled >= 0.9    # X branch alone contributes 1 exactly
    assert prof.smax >= z_scaled
    assert 0.0 < prof.in_cell_fraction < 1.0
    # every profile site really is a cell site: right shell, inside cone
    n2 = (prof.sites.astype(np.float64) ** 2).sum(1)
    assert np.all(shells.shell_index_of_norms(n2, t) == j)
    cell = shells.make_cell(j, prof.z_j, t, "cell")
    for p in prof.sites[:: max(1, len(prof.sites) // 64)]:
        assert shells.cell_contains(cell, p, t)
