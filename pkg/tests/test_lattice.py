"""Lattice primitives against brute-force cube enumeration.

Every derived count is recomputed here from scratch so the expected
values never lean on the module under test.
"""

import math

import numpy as np
import pytest

from idlalab import lattice


def cube_ball(d, radius):
    """Open ball by scanning the bounding cube, independent of the library."""
    k = math.ceil(radius) + 1
    axes = [np.arange(-k, k + 1, dtype=np.int64)] * d
    pts = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")],
                   axis=1)
    return pts[(pts * pts).sum(axis=1) < radius * radius]


def site_set(arr):
    return set(map(tuple, np.asarray(arr).tolist()))


def brute_boundary(sites, d):
    inside = site_set(sites)
    out = set()
    for p in inside:
        for a in range(d):
            for s in (1, -1):
                q = list(p)
                q[a] += s
                q = tuple(q)
                if q not in inside:
                    out.add(q)
    return out


def test_norm_examples():
    assert lattice.norm((0, 0, 0)) == 0.0
    assert abs(lattice.norm((1, 1, 1)) - math.sqrt(3.0)) < 1e-15
    assert lattice.norm((3, 4, 0)) == 5.0
    assert lattice.norm_sq((3, 4, 0)) == 25


def test_ball_counts_small():
    # oracle first: d=3 r=1 keeps only the origin; d=3 r=2 keeps norms
    # 0,1,sqrt2,sqrt3 (27 sites, norm 2 excluded); d=4 r=1.5 keeps norms
    # 0,1,sqrt2 -> 1 + 8 + 24 = 33 sites (sqrt2 = 1.414 < 1.5).
    assert len(cube_ball(3, 1.0)) == 1
    assert len(cube_ball(3, 2.0)) == 27
    assert len(cube_ball(4, 1.5)) == 33
    for d, r in ((3, 1.0), (3, 2.0), (4, 1.5)):
        got = lattice.ball_sites(np.zeros(d, np.int64), r)
        assert site_set(got) == site_set(cube_ball(d, r))
        assert lattice.ball_count(d, r) == len(got)


def test_ball_boundary_radii_exact():
    # exactly representable squared radii: strictness holds bit-for-bit
    for d in (3, 4):
        for r in (1.0, 2.0, 3.0, 5.0, 1.5, 2.5):
            got = lattice.ball_sites(np.zeros(d, np.int64), r)
            n2 = (got * got).sum(axis=1)
            assert float(n2.max()) < r * r
            assert not np.any(n2 == r * r)
            assert lattice.ball_count(d, r) == len(got)
    # irrational radii: all paths share one convention (n2 < fl(r)^2),
    # so counts can never flicker between enumeration and counting
    for r2 in (2, 3, 5):
        r = math.sqrt(r2)
        assert lattice.ball_count(3, r) == len(cube_ball(3, r))
        assert lattice.ball_count(3, r) == len(
            lattice.ball_sites(np.zeros(3, np.int64), r))


def test_ball_center_shift():
    c = np.array([2, -1, 3], dtype=np.int64)
    got = lattice.ball_sites(c, 2.5)
    want = cube_ball(3, 2.5) + c
    assert site_set(got) == site_set(want)


def test_ball_monotone_in_radius():
    rng = np.random.default_rng(5)
    for _ in range(10):
        r = float(rng.uniform(1.0, 6.0))
        rp = r + float(rng.uniform(0.0, 3.0))
        small = site_set(lattice.ball_sites(np.zeros(3, np.int64), r))
        big = site_set(lattice.ball_sites(np.zeros(3, np.int64), rp))
        assert small <= big


def test_ball_volume_ratio():
    v3 = 4.0 * math.pi / 3.0
    assert abs(lattice.ball_volume_constant(3) - v3) < 1e-14
    for n in (20, 40):
        ratio = lattice.ball_count(3, float(n)) / (v3 * n ** 3)
        assert abs(ratio - 1.0) < 0.05


def test_ball_count_matches_enumeration_random():
    rng = np.random.default_rng(11)
    for _ in range(8):
        d = int(rng.integers(3, 5))
        r = float(rng.uniform(0.5, 7.0))
        assert lattice.ball_count(d, r) == len(cube_ball(d, r))
    assert lattice.ball_count(3, 0.0) == 0
    assert lattice.ball_count(3, -1.0) == 0


def test_boundary_examples():
    got = lattice.boundary(np.zeros((1, 3), np.int64))
    assert site_set(got) == site_set(lattice.unit_vectors(3))
    assert len(got) == 6
    assert lattice.boundary(np.empty((0, 3), np.int64), d=3).shape == (0, 3)
    ball2 = lattice.ball_sites(np.zeros(3, np.int64), 2.0)
    got = lattice.boundary(ball2)
    assert len(got) == 54
    assert site_set(got) == brute_boundary(ball2, 3)


def test_boundary_properties_random_blob():
    rng = np.random.default_rng(23)
    blob = lattice.ball_sites(np.zeros(3, np.int64), 3.0)
    extra = rng.integers(-6, 7, size=(40, 3))
    blob = np.unique(np.concatenate([blob, extra]), axis=0)
    bd = lattice.boundary(blob)
    bset, inset = site_set(bd), site_set(blob)
    assert not (bset & inset)
    units = lattice.unit_vectors(3)
    for p in bd:
        assert any(tuple(q) in inset for q in p + units)
    assert bset == brute_boundary(blob, 3)


def test_sphere_sites_is_ball_boundary():
    for r in (2.0, 5.0):
        want = site_set(lattice.boundary(lattice.ball_sites(np.zeros(3, np.int64), r)))
        got = lattice.sphere_sites(r, 3)
        assert site_set(got) == want
        n2 = (got * got).sum(axis=1)
        assert n2.min() >= r * r  # outside the open ball
        # and every site has a strictly inside neighbor
        units = lattice.unit_vectors(3)
        for p in got:
            assert any(lattice.norm_sq(p + u) < r * r for u in units)


def test_annulus_sites_oracle():
    pts = lattice.annulus_sites(2.0, 4.0, 3)
    cube = cube_ball(3, 4.0)
    n2 = (cube * cube).sum(axis=1)
    want = cube[(n2 >= 4.0) & (n2 < 16.0)]
    assert site_set(pts) == site_set(want)
    assert lattice.annulus_sites(4.0, 2.0, 3).shape == (0, 3)


def test_inward_neighbor_examples():
    assert tuple(lattice.inward_neighbor((3, 0, 0))) == (2, 0, 0)
    assert tuple(lattice.inward_neighbor((-2, 1, 0))) == (-1, 1, 0)
    # tie among maximal coordinates: the lowest index moves
    assert tuple(lattice.inward_neighbor((1, 1, 1))) == (0, 1, 1)
    with pytest.raises(ValueError):
        lattice.inward_neighbor((0, 0, 0))


def test_inward_drop_exhaustive_small():
    # |w| <= |z| - 1/(2 sqrt d) for every z != 0 in a moderate ball;
    # the full radius-50 sweep lives in the acceptance suite.
    for d in (3, 4):
        zs = lattice.ball_sites(np.zeros(d, np.int64), 12.0)
        zs = zs[(zs != 0).any(axis=1)]
        ws = lattice.inward_neighbors(zs)
        drop = np.sqrt((zs * zs).sum(1)) - np.sqrt((ws * ws).sum(1))
        assert drop.min() >= 1.0 / (2.0 * math.sqrt(d)) - 1e-12
        # vectorized path agrees with the scalar one
        for i in range(0, len(zs), max(1, len(zs) // 23)):
            assert np.array_equal(ws[i], lattice.inward_neighbor(zs[i]))


def test_unit_vectors_order():
    u = lattice.unit_vectors(3)
    assert u.shape == (6, 3)
    assert tuple(u[0]) == (1, 0, 0) and tuple(u[1]) == (-1, 0, 0)
    assert tuple(u[4]) == (0, 0, 1)


def test_iter_ball_chunks_concatenates_to_ball():
    chunks = list(lattice.iter_ball_chunks(3, 9.0, chunk=500))
    assert len(chunks) > 1
    got = np.concatenate(chunks, axis=0)
    assert site_set(got) == site_set(lattice.ball_sites(np.zeros(3, np.int64), 9.0))


def test_memory_budget_guard():
    with pytest.raises(lattice.MemoryBudgetError):
        lattice.ball_sites(np.zeros(3, np.int64), 50.0, budget=1000)
    with pytest.raises(lattice.MemoryBudgetError):
        lattice.annulus_sites(40.0, 50.0, 3, budget=1000)


def test_rejects_d_below_3():
    with pytest.raises(ValueError):
        lattice.ball_sites(np.zeros(2, np.int64), 2.0)
    with pytest.raises(ValueError):
        lattice.ball_count(2, 2.0)
