"""Compiled and pure-python kernels must agree bit for bit."""

from contextlib import contextmanager

import numpy as np
import pytest

from idlalab import coupling, growth, kernels, rng, shells, walks

BACK = kernels.backends()
pytestmark = pytest.mark.skipif(len(BACK) < 2,
                                reason="only one kernel backend built")

DISPATCHED = ("debug_stream", "idla_grow", "flashing_grow", "coupled_run",
              "replay_mark", "region_walks", "flash_profile", "covering_scan")


@contextmanager
def python_kernels():
    saved = {n: getattr(kernels, n) for n in DISPATCHED}
    try:
        for n in DISPATCHED:
            setattr(kernels, n, getattr(BACK["python"], n))
        yield
    finally:
        for n, f in saved.items():
            setattr(kernels, n, f)


def both(fn):
    """Run fn under the compiled dispatch, then the python one."""
    compiled = fn()
    with python_kernels():
        return compiled, fn()


def test_debug_stream_matches_reference():
    for seed, actor, ctx in ((0, 0, 0), (42, 7, 3), (9, 12345, 88)):
        a = BACK["compiled"].debug_stream(seed, actor, ctx, 64)
        b = BACK["python"].debug_stream(seed, actor, ctx, 64)
        st = rng.Stream(seed, actor, ctx)
        c = np.array([st.next_u64() for _ in range(64)], dtype=np.uint64)
        assert np.array_equal(a, b)
        assert np.array_equal(a, c)


def test_idla_bit_identical():
    a, b = both(lambda: growth.idla_grow(600, 3))
    assert np.array_equal(a.sites, b.sites)
    assert a.steps_total == b.steps_total


def test_flashing_direct_bit_identical():
    def run():
        return growth.flashing_grow_direct(250, 7)
    a, b = both(run)
    assert np.array_equal(a.sites, b.sites)
    assert np.array_equal(a.settle_shell, b.settle_shell)
    assert a.steps_total == b.steps_total


def test_flashing_waves_bit_identical():
    a, b = both(lambda: growth.flashing_grow_waves(250, 7))
    assert np.array_equal(a.sites, b.sites)


def test_flashing_record_codes_identical():
    def run():
        return growth.flashing_grow_direct(120, 5, record=True)
    (ca, ra), (cb, rb) = both(run)
    assert np.array_equal(ca.sites, cb.sites)
    assert np.array_equal(ra.codes, rb.codes)
    assert np.array_equal(ra.offsets, rb.offsets)


def test_coupled_run_bit_identical():
    def run():
        return coupling.coupled_grow(300, 11, verify=True)
    a, b = both(run)
    assert np.array_equal(a.cluster.sites, b.cluster.sites)
    assert np.array_equal(a.flash_cluster.sites, b.flash_cluster.sites)
    assert np.array_equal(a.labels, b.labels)
    assert np.array_equal(a.blue, b.blue)
    assert np.array_equal(a.tcons, b.tcons)
    assert np.array_equal(a.tau, b.tau)
    assert a.chain_max == b.chain_max


@pytest.mark.parametrize("d,start", [(3, (2, 1, 0)), (4, (1, 0, 1, 0))])
def test_region_walks_bit_identical(d, start):
    def run():
        return walks.run_region_walks(13, d, 3000,
                                      np.array(start, dtype=np.int64),
                                      9.0, occ_window=(1.0, 25.0))
    (ea, sa, oa), (eb, sb, ob) = both(run)
    assert np.array_equal(ea, eb)
    assert np.array_equal(sa, sb)
    assert np.array_equal(oa, ob)


@pytest.mark.parametrize("d,maxr,j,samples", [(3, 200.0, 4, 20_000),
                                              (4, 120.0, 3, 12_000)])
def test_flash_profile_bit_identical(d, maxr, j, samples):
    t = shells.build_shells(d, 8.0, maxr)

    def run():
        return walks.uniform_hitting_profile(31, j, t, samples=samples)
    a, b = both(run)
    assert np.array_equal(a.sites, b.sites)
    assert np.array_equal(a.scaled, b.scaled)
    assert a.in_cell_fraction == b.in_cell_fraction


def test_covering_scan_matches(table8):
    j = 2
    args = (float(table8.r[j]), float(table8.h[j]), table8.inner_edge(j),
            float(table8.edges[j]), 1.0, float(table8.h[j]) / 5.0,
            float(table8.h[j]) / 2.0, True, True)
    ca, cb = BACK["compiled"].covering_scan(*args), \
        BACK["python"].covering_scan(*args)
    assert np.array_equal(np.asarray(ca[0]), np.asarray(cb[0]))
    assert np.array_equal(np.asarray(ca[1]), np.asarray(cb[1]))
    assert abs(ca[2] - cb[2]) < 1e-12
