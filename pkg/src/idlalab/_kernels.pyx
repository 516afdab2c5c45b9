# cython: language_level=3
# distutils: language = c++
"""Compiled kernels, mirroring _kernels_py.py one-to-one.

Keep formula order exactly in sync with the python twin: the test
suite asserts bit-identical outputs from both implementations.  The
build disables fused multiply-add contraction for the same reason.
"""

from libc.stdint cimport uint64_t, int64_t, int32_t, uint8_t
from libc.math cimport sqrt, pow, floor, ceil
from libcpp.unordered_map cimport unordered_map
from libcpp.vector cimport vector
from cython.operator cimport dereference as deref, preincrement as inc

import numpy as np

IMPL = "compiled"

cdef extern from *:
    """
    static inline unsigned long long idla_mulhi64(unsigned long long a,
                                                  unsigned long long b) {
        return (unsigned long long)(((__uint128_t)a * (__uint128_t)b) >> 64);
    }
    """
    uint64_t idla_mulhi64(uint64_t a, uint64_t b) nogil

cdef uint64_t GOLD = 0x9E3779B97F4A7C15UL
cdef uint64_t MIX1 = 0xBF58476D1CE4E5B9UL
cdef uint64_t MIX2 = 0x94D049BB133111EBUL
cdef uint64_t KEYA = 0xC2B2AE3D27D4EB4FUL
cdef uint64_t KEYB = 0x165667B19E3779F9UL
cdef double INV53 = 1.0 / 9007199254740992.0
cdef int64_t PACK_OFF = 32768


cdef inline uint64_t mix64(uint64_t z) nogil:
    z ^= z >> 30
    z = z * MIX1
    z ^= z >> 27
    z = z * MIX2
    z ^= z >> 31
    return z


cdef inline uint64_t stream_key(uint64_t seed, uint64_t actor,
                                uint64_t context) nogil:
    cdef uint64_t s = mix64(seed + GOLD)
    s = mix64(s + actor * KEYA)
    s = mix64(s + context * KEYB)
    return s


cdef inline uint64_t nxt_u64(uint64_t* st) nogil:
    st[0] = st[0] + GOLD
    return mix64(st[0])


cdef inline double unif(uint64_t* st) nogil:
    return <double>(nxt_u64(st) >> 11) * INV53


cdef inline uint64_t pick(uint64_t* st, uint64_t m) nogil:
    return idla_mulhi64(nxt_u64(st), m)


cdef inline uint64_t pack_site(int64_t* p, int d) nogil:
    cdef uint64_t k = 0
    cdef int i
    for i in range(d):
        k |= (<uint64_t>(p[i] + PACK_OFF)) << (16 * i)
    return k


# --- occupancy: dense value grid in a box plus spillover map ----------

cdef struct Occ:
    uint8_t* grid8
    int32_t* grid32
    int64_t B
    int64_t side
    int d
    unordered_map[uint64_t, int64_t]* spill


cdef inline int64_t occ_idx(Occ* o, int64_t* p) nogil:
    cdef int64_t idx = 0
    cdef int64_t c
    cdef int i
    for i in range(o.d):
        c = p[i]
        if c < -o.B or c > o.B:
            return -1
        idx = idx * o.side + (c + o.B)
    return idx


cdef inline bint occ_test(Occ* o, int64_t* p) nogil:
    cdef int64_t i = occ_idx(o, p)
    if i >= 0:
        if o.grid8 != NULL:
            return o.grid8[i] != 0
        return o.grid32[i] != 0
    return o.spill.count(pack_site(p, o.d)) != 0


cdef inline void occ_set(Occ* o, int64_t* p, int64_t v) nogil:
    cdef int64_t i = occ_idx(o, p)
    if i >= 0:
        if o.grid8 != NULL:
            o.grid8[i] = <uint8_t>v
        else:
            o.grid32[i] = <int32_t>v
    else:
        o.spill[0][pack_site(p, o.d)] = v


cdef inline int64_t occ_get(Occ* o, int64_t* p) nogil:
    cdef int64_t i = occ_idx(o, p)
    cdef unordered_map[uint64_t, int64_t].iterator it
    if i >= 0:
        if o.grid8 != NULL:
            return o.grid8[i]
        return o.grid32[i]
    it = o.spill.find(pack_site(p, o.d))
    if it == o.spill.end():
        return 0
    return deref(it).second


cdef _export_spill_keys(unordered_map[uint64_t, int64_t]* spill):
    out = np.empty(spill.size(), dtype=np.uint64)
    cdef uint64_t[::1] mv
    cdef int64_t i = 0
    cdef unordered_map[uint64_t, int64_t].iterator it = spill.begin()
    if spill.size() > 0:
        mv = out
        while it != spill.end():
            mv[i] = deref(it).first
            i += 1
            inc(it)
        out.sort()
    return out


def debug_stream(seed, actor, context, n):
    """First n raw u64 outputs of stream (seed, actor, context)."""
    cdef uint64_t st = stream_key(<uint64_t>(int(seed) & ((1 << 64) - 1)),
                                  <uint64_t>int(actor),
                                  <uint64_t>int(context))
    cdef int64_t nn = int(n)
    out = np.empty(nn, dtype=np.uint64)
    cdef uint64_t[::1] mv = out
    cdef int64_t i
    for i in range(nn):
        mv[i] = nxt_u64(&st)
    return out


def idla_grow(seed, int d, int64_t N, grid, int64_t box_half,
              int64_t step_cap):
    """Internal DLA; contract in the python twin."""
    cdef uint64_t sd = <uint64_t>(int(seed) & ((1 << 64) - 1))
    cdef uint8_t[::1] g = grid
    cdef unordered_map[uint64_t, int64_t] spill
    cdef Occ occ
    occ.grid8 = &g[0]
    occ.grid32 = NULL
    occ.B = box_half
    occ.side = 2 * box_half + 1
    occ.d = d
    occ.spill = &spill
    sites = np.zeros((N, d), dtype=np.int64)
    steps = np.zeros(N, dtype=np.int64)
    cdef int64_t[:, ::1] sv = sites
    cdef int64_t[::1] stv = steps
    cdef int64_t p[4]
    cdef uint64_t st, k
    cdef uint64_t two_d = 2 * d
    cdef int64_t i, ns
    cdef int c
    for i in range(N):
        st = stream_key(sd, <uint64_t>i, 0)
        for c in range(d):
            p[c] = 0
        ns = 0
        while occ_test(&occ, p):
            k = pick(&st, two_d)
            p[k >> 1] += 1 - 2 * <int64_t>(k & 1)
            ns += 1
            if ns > step_cap:
                return sites, steps, 2
        occ_set(&occ, p, 1)
        for c in range(d):
            sv[i, c] = p[c]
        stv[i] = ns
    return sites, steps, 0


# --- flashing growth ---------------------------------------------------

cdef struct FCtx:
    double* r
    double* r_sq
    double* edges
    double* edges_sq
    double* h
    double* inv_hd
    double* half_ap_sq
    double inv_d
    int64_t J
    int d
    uint64_t two_d
    uint64_t seed
    int64_t step_cap
    int64_t capture
    bint record
    uint8_t* codes
    int64_t ncodes
    int64_t cursor
    Occ* occ


cdef inline bint cell_ok(FCtx* C, int64_t* p, double n2, int64_t j,
                         double czz, int64_t* zj) nogil:
    cdef int64_t dot = 0
    cdef int c
    cdef double t, vsq
    if j == 0:
        return n2 < C.edges_sq[0]
    if not (C.edges_sq[j - 1] <= n2 and n2 < C.edges_sq[j]):
        return False
    for c in range(C.d):
        dot += p[c] * zj[c]
    t = sqrt(czz / n2)
    vsq = 2.0 * (czz - t * <double>dot)
    return vsq < C.half_ap_sq[j]


cdef inline int64_t norm2(int64_t* p, int d) nogil:
    cdef int64_t s = 0
    cdef int c
    for c in range(d):
        s += p[c] * p[c]
    return s


cdef int f_segment(FCtx* C, int64_t i, int64_t j, int64_t* p, double* czz,
                   int64_t* xi_row, int64_t* gs_row, int64_t* steps,
                   bint* settled) nogil:
    """Shell-j segment of explorer i: three flash uniforms, the flash
    walk, the settle attempt, then (if unsettled) the walk out to the
    next entry sphere.  Returns the status code."""
    cdef int64_t zj[4]
    cdef double zn2 = czz[0]
    cdef int c
    cdef uint64_t st, k
    cdef double u1, u2, u3, R, rho, rho2, a, b, a2, b2, nxt_r
    cdef bint x_flash, y_ball
    cdef int64_t ns = 0, rel2, n2, n2w, ax
    settled[0] = False
    for c in range(C.d):
        zj[c] = p[c]
    if C.capture == j:
        for c in range(C.d):
            xi_row[c] = p[c]
    st = stream_key(C.seed, <uint64_t>i, <uint64_t>j)
    u1 = unif(&st)
    u2 = unif(&st)
    u3 = unif(&st)
    x_flash = u1 < C.inv_hd[j]
    y_ball = True if j == 0 else (u2 < 0.5)
    R = C.h[j] * pow(u3, C.inv_d)
    if x_flash:
        pass  # flash at the entry site itself
    elif y_ball:
        rho = C.edges[j] - sqrt(zn2)
        if R < rho:
            rho = R
        if rho > 0.0:
            rho2 = rho * rho
            rel2 = 0
            while <double>rel2 < rho2:
                k = pick(&st, C.two_d)
                ax = <int64_t>(k >> 1)
                rel2 -= (p[ax] - zj[ax]) * (p[ax] - zj[ax])
                p[ax] += 1 - 2 * <int64_t>(k & 1)
                rel2 += (p[ax] - zj[ax]) * (p[ax] - zj[ax])
                ns += 1
                if C.record:
                    if C.cursor >= C.ncodes:
                        steps[0] = ns
                        return 3
                    C.codes[C.cursor] = <uint8_t>k
                    C.cursor += 1
                if ns > C.step_cap:
                    steps[0] = ns
                    return 2
    else:
        a = C.r[j] - R
        b = C.r[j] + R
        b2 = b * b
        if zn2 < b2:
            a2 = a * a
            n2 = <int64_t>zn2
            while a2 <= <double>n2 and <double>n2 < b2:
                k = pick(&st, C.two_d)
                ax = <int64_t>(k >> 1)
                n2 -= p[ax] * p[ax]
                p[ax] += 1 - 2 * <int64_t>(k & 1)
                n2 += p[ax] * p[ax]
                ns += 1
                if C.record:
                    if C.cursor >= C.ncodes:
                        steps[0] = ns
                        return 3
                    C.codes[C.cursor] = <uint8_t>k
                    C.cursor += 1
                if ns > C.step_cap:
                    steps[0] = ns
                    return 2
    # settle attempt at the flash site
    n2w = norm2(p, C.d)
    if cell_ok(C, p, <double>n2w, j, zn2, zj) and not occ_test(C.occ, p):
        occ_set(C.occ, p, 1)
        for c in range(C.d):
            gs_row[c] = p[c]
        settled[0] = True
        steps[0] = ns
        return 0
    # walk out to the next entry sphere
    if j + 1 >= C.J:
        steps[0] = ns
        return 1
    nxt_r = C.r_sq[j + 1]
    n2 = n2w
    while <double>n2 < nxt_r:
        k = pick(&st, C.two_d)
        ax = <int64_t>(k >> 1)
        n2 -= p[ax] * p[ax]
        p[ax] += 1 - 2 * <int64_t>(k & 1)
        n2 += p[ax] * p[ax]
        ns += 1
        if C.record:
            if C.cursor >= C.ncodes:
                steps[0] = ns
                return 3
            C.codes[C.cursor] = <uint8_t>k
            C.cursor += 1
        if ns > C.step_cap:
            steps[0] = ns
            return 2
    czz[0] = <double>n2
    steps[0] = ns
    return 0


def flashing_grow(seed, int d, int64_t N,
                  r_a, r_sq_a, edges_a, edges_sq_a, h_a, inv_hd_a,
                  half_ap_sq_a, double inv_d, grid, int64_t box_half,
                  int64_t step_cap, bint wave_mode=False,
                  int64_t capture_shell=-1, codes=None, offsets=None):
    """Flashing growth; full contract in the python twin."""
    cdef double[::1] r = r_a
    cdef double[::1] r_sq = r_sq_a
    cdef double[::1] edges = edges_a
    cdef double[::1] edges_sq = edges_sq_a
    cdef double[::1] h = h_a
    cdef double[::1] inv_hd = inv_hd_a
    cdef double[::1] half_ap_sq = half_ap_sq_a
    cdef uint8_t[::1] g = grid
    cdef unordered_map[uint64_t, int64_t] spill
    cdef Occ occ
    occ.grid8 = &g[0]
    occ.grid32 = NULL
    occ.B = box_half
    occ.side = 2 * box_half + 1
    occ.d = d
    occ.spill = &spill

    cdef FCtx C
    C.r = &r[0]
    C.r_sq = &r_sq[0]
    C.edges = &edges[0]
    C.edges_sq = &edges_sq[0]
    C.h = &h[0]
    C.inv_hd = &inv_hd[0]
    C.half_ap_sq = &half_ap_sq[0]
    C.inv_d = inv_d
    C.J = r_sq.shape[0]
    C.d = d
    C.two_d = 2 * d
    C.seed = <uint64_t>(int(seed) & ((1 << 64) - 1))
    C.step_cap = step_cap
    C.capture = capture_shell
    C.cursor = 0
    cdef uint8_t[::1] codes_mv
    cdef int64_t[::1] off_mv
    C.record = codes is not None
    if C.record:
        codes_mv = codes
        off_mv = offsets
        C.codes = &codes_mv[0]
        C.ncodes = codes_mv.shape[0]
    else:
        C.codes = NULL
        C.ncodes = 0
    C.occ = &occ

    gstar = np.zeros((N, d), dtype=np.int64)
    settle_shell = np.full(N, -1, dtype=np.int32)
    xi = np.zeros((N, d), dtype=np.int64)
    pos = np.zeros((N, d), dtype=np.int64)
    czz = np.zeros(N, dtype=np.float64)
    alive = np.zeros(N, dtype=np.int64)
    cdef int64_t[:, ::1] gs = gstar
    cdef int32_t[::1] ss = settle_shell
    cdef int64_t[:, ::1] xv = xi
    cdef int64_t[:, ::1] pv = pos
    cdef double[::1] cz = czz
    cdef int64_t[::1] al = alive

    cdef int64_t steps_total = 0, i, j, ns, n_alive, m, w
    cdef bint settled
    cdef int status = 0, st_code
    if not wave_mode:
        for i in range(N):
            if C.record:
                off_mv[i] = C.cursor
            j = 0
            while True:
                if j >= C.J:
                    status = 1
                    break
                st_code = f_segment(&C, i, j, &pv[i, 0], &cz[i],
                                    &xv[i, 0], &gs[i, 0], &ns, &settled)
                steps_total += ns
                if st_code:
                    status = st_code
                    break
                if settled:
                    ss[i] = <int32_t>j
                    break
                j += 1
            if status:
                break
        if C.record and status == 0:
            off_mv[N] = C.cursor
    else:
        n_alive = N
        for i in range(N):
            al[i] = i
        j = 0
        while n_alive > 0:
            if j >= C.J:
                status = 1
                break
            w = 0
            for m in range(n_alive):
                i = al[m]
                st_code = f_segment(&C, i, j, &pv[i, 0], &cz[i],
                                    &xv[i, 0], &gs[i, 0], &ns, &settled)
                steps_total += ns
                if st_code:
                    status = st_code
                    break
                if settled:
                    ss[i] = <int32_t>j
                else:
                    al[w] = i
                    w += 1
            if status:
                break
            n_alive = w
            j += 1
    return gstar, settle_shell, xi, steps_total, C.cursor, status


# --- coupling ----------------------------------------------------------

def coupled_run(int d, codes, offsets, grid, label_grid, blue_grid,
                visited_grid, int64_t box_half, int64_t n_explorers):
    """Coupled internal DLA over recorded flashing trajectories;
    contract in the python twin."""
    cdef uint8_t[::1] codes_mv = codes
    cdef int64_t[::1] off = offsets
    cdef uint8_t[::1] g_occ = grid
    cdef int32_t[::1] g_lab = label_grid
    cdef uint8_t[::1] g_blu = blue_grid
    cdef uint8_t[::1] g_vis = visited_grid
    cdef int64_t N = n_explorers
    cdef int64_t side = 2 * box_half + 1
    cdef unordered_map[uint64_t, int64_t] sp_occ, sp_lab, sp_blu, sp_vis
    cdef Occ occ, lab, blu, vis
    occ.grid8 = &g_occ[0]
    occ.grid32 = NULL
    occ.spill = &sp_occ
    lab.grid8 = NULL
    lab.grid32 = &g_lab[0]
    lab.spill = &sp_lab
    blu.grid8 = &g_blu[0]
    blu.grid32 = NULL
    blu.spill = &sp_blu
    vis.grid8 = &g_vis[0]
    vis.grid32 = NULL
    vis.spill = &sp_vis
    occ.B = box_half
    lab.B = box_half
    blu.B = box_half
    vis.B = box_half
    occ.side = side
    lab.side = side
    blu.side = side
    vis.side = side
    occ.d = d
    lab.d = d
    blu.d = d
    vis.d = d

    siteA = np.zeros((N, d), dtype=np.int64)
    lab_final = np.zeros(N, dtype=np.int32)
    blue_final = np.zeros(N, dtype=np.uint8)
    tcons = np.zeros(N, dtype=np.int64)
    tau = np.zeros(N, dtype=np.int64)
    cdef int64_t[:, ::1] sA = siteA
    cdef int32_t[::1] lF = lab_final
    cdef uint8_t[::1] bF = blue_final
    cdef int64_t[::1] tc = tcons
    cdef int64_t[::1] tv = tau
    cdef int64_t i, driver, tpos, hops, old, m, chain_max = 0
    cdef int64_t p[4]
    cdef int c
    cdef uint64_t k
    cdef int status = 0
    cdef int64_t e_inv = 0, e_expl = 0, e_hop = 0
    for i in range(N):
        tv[i] = off[i + 1] - off[i]
    for i in range(N):
        driver = i
        tpos = 0
        for c in range(d):
            p[c] = 0
        occ_set(&vis, p, 1)
        hops = 0
        while status == 0:
            if not occ_test(&occ, p):
                occ_set(&occ, p, 1)
                occ_set(&lab, p, driver + 1)
                if tpos == tv[driver]:
                    occ_set(&blu, p, 1)
                tc[driver] = tpos
                for c in range(d):
                    sA[i, c] = p[c]
                break
            if tpos == tv[driver]:
                # trajectory exhausted at an occupied site: must be red
                old = occ_get(&lab, p)
                if old == 0:
                    status = 4
                    e_inv = 1
                    e_expl = i
                    e_hop = hops
                    break
                if occ_get(&blu, p):
                    status = 4
                    e_inv = 2
                    e_expl = i
                    e_hop = hops
                    break
                old -= 1
                occ_set(&lab, p, driver + 1)
                occ_set(&blu, p, 1)
                tc[driver] = tv[driver]
                driver = old
                tpos = tc[driver]
                if tpos >= tv[driver]:
                    status = 4
                    e_inv = 3
                    e_expl = i
                    e_hop = hops
                    break
                hops += 1
                if hops > N:
                    status = 4
                    e_inv = 4
                    e_expl = i
                    e_hop = hops
                    break
                if hops > chain_max:
                    chain_max = hops
            else:
                k = codes_mv[off[driver] + tpos]
                p[k >> 1] += 1 - 2 * <int64_t>(k & 1)
                tpos += 1
                occ_set(&vis, p, 1)
        if status:
            break
    if status == 0:
        for m in range(N):
            for c in range(d):
                p[c] = sA[m, c]
            lF[m] = <int32_t>(occ_get(&lab, p) - 1)
            bF[m] = 1 if occ_get(&blu, p) else 0
    vis_spill = _export_spill_keys(&sp_vis)
    return (siteA, lab_final, blue_final, tcons, chain_max, vis_spill,
            status, (e_inv, e_expl, e_hop))


def replay_mark(int d, codes, offsets, grid, int64_t box_half,
                int64_t n_explorers):
    """Mark every recorded trajectory position into grid; returns the
    sorted packed keys of marks outside the box."""
    cdef uint8_t[::1] codes_mv = codes
    cdef int64_t[::1] off = offsets
    cdef uint8_t[::1] g = grid
    cdef unordered_map[uint64_t, int64_t] sp
    cdef Occ vis
    vis.grid8 = &g[0]
    vis.grid32 = NULL
    vis.B = box_half
    vis.side = 2 * box_half + 1
    vis.d = d
    vis.spill = &sp
    cdef int64_t i, t
    cdef int64_t p[4]
    cdef int c
    cdef uint64_t k
    for i in range(n_explorers):
        for c in range(d):
            p[c] = 0
        occ_set(&vis, p, 1)
        for t in range(off[i], off[i + 1]):
            k = codes_mv[t]
            p[k >> 1] += 1 - 2 * <int64_t>(k & 1)
            occ_set(&vis, p, 1)
    return _export_spill_keys(&sp)


# --- Monte Carlo walks -------------------------------------------------

def region_walks(seed, int d, int64_t samples, start, double r2_out,
                 double r2_in, double occ_lo, double occ_hi,
                 int64_t step_cap, ends, steps, occt):
    """Walks until squared norm >= r2_out or < r2_in; python twin has
    the contract."""
    cdef uint64_t sd = <uint64_t>(int(seed) & ((1 << 64) - 1))
    cdef int64_t[::1] st0 = np.ascontiguousarray(start, dtype=np.int64)
    cdef int64_t[:, ::1] ev = ends
    cdef int64_t[::1] sv = steps
    cdef int64_t[::1] ov = occt
    cdef uint64_t two_d = 2 * d
    cdef bint count_occ = occ_hi > 0
    cdef int64_t s, ns, no, n2, ax
    cdef int64_t p[4]
    cdef int c
    cdef uint64_t st, k
    for s in range(samples):
        st = stream_key(sd, <uint64_t>s, 0)
        for c in range(d):
            p[c] = st0[c]
        n2 = norm2(p, d)
        ns = 0
        no = 0
        while <double>n2 < r2_out and not (r2_in >= 0.0 and
                                           <double>n2 < r2_in):
            if count_occ and occ_lo <= <double>n2 and <double>n2 < occ_hi:
                no += 1
            k = pick(&st, two_d)
            ax = <int64_t>(k >> 1)
            n2 -= p[ax] * p[ax]
            p[ax] += 1 - 2 * <int64_t>(k & 1)
            n2 += p[ax] * p[ax]
            ns += 1
            if ns > step_cap:
                return 2
        for c in range(d):
            ev[s, c] = p[c]
        sv[s] = ns
        ov[s] = no
    return 0


def flash_profile(seed, int d, int64_t samples, zj, int64_t context,
                  double r_val, double edge, double edge_sq,
                  double in_edge_sq, double h_j, double inv_hd_j,
                  double half_ap_sq_j, double inv_d, int64_t step_cap,
                  sites, incell):
    """Monte Carlo of one flash from entry site zj; python twin has
    the contract."""
    cdef uint64_t sd = <uint64_t>(int(seed) & ((1 << 64) - 1))
    cdef int64_t[::1] z0 = np.ascontiguousarray(zj, dtype=np.int64)
    cdef int64_t[:, ::1] sv = sites
    cdef uint8_t[::1] iv = incell
    cdef uint64_t two_d = 2 * d
    cdef double czz = <double>norm2(&z0[0], d)
    cdef double zn = sqrt(czz)
    cdef int64_t smp, ns, rel2, n2, n2w, ax, dot
    cdef int64_t p[4]
    cdef int c
    cdef uint64_t st, k
    cdef double u1, u2, u3, R, rho, rho2, a, b, a2, b2, t, vsq
    cdef bint x_flash, y_ball, ok
    for smp in range(samples):
        st = stream_key(sd, <uint64_t>smp, <uint64_t>context)
        u1 = unif(&st)
        u2 = unif(&st)
        u3 = unif(&st)
        x_flash = u1 < inv_hd_j
        y_ball = True if context == 0 else (u2 < 0.5)
        R = h_j * pow(u3, inv_d)
        for c in range(d):
            p[c] = z0[c]
        ns = 0
        if x_flash:
            pass
        elif y_ball:
            rho = edge - zn
            if R < rho:
                rho = R
            if rho > 0.0:
                rho2 = rho * rho
                rel2 = 0
                while <double>rel2 < rho2:
                    k = pick(&st, two_d)
                    ax = <int64_t>(k >> 1)
                    rel2 -= (p[ax] - z0[ax]) * (p[ax] - z0[ax])
                    p[ax] += 1 - 2 * <int64_t>(k & 1)
                    rel2 += (p[ax] - z0[ax]) * (p[ax] - z0[ax])
                    ns += 1
                    if ns > step_cap:
                        return 2
        else:
            a = r_val - R
            b = r_val + R
            b2 = b * b
            if czz < b2:
                a2 = a * a
                n2 = norm2(p, d)
                while a2 <= <double>n2 and <double>n2 < b2:
                    k = pick(&st, two_d)
                    ax = <int64_t>(k >> 1)
                    n2 -= p[ax] * p[ax]
                    p[ax] += 1 - 2 * <int64_t>(k & 1)
                    n2 += p[ax] * p[ax]
                    ns += 1
                    if ns > step_cap:
                        return 2
        n2w = norm2(p, d)
        ok = False
        if context == 0:
            ok = <double>n2w < edge_sq
        elif in_edge_sq <= <double>n2w and <double>n2w < edge_sq:
            dot = 0
            for c in range(d):
                dot += p[c] * z0[c]
            t = sqrt(czz / <double>n2w)
            vsq = 2.0 * (czz - t * <double>dot)
            ok = vsq < half_ap_sq_j
        for c in range(d):
            sv[smp, c] = p[c]
        iv[smp] = 1 if ok else 0
    return 0


# --- covering scan (d=3 geometry) --------------------------------------

cdef inline int64_t isqrt_strict(double x) nogil:
    """Largest z >= 0 with z*z < x; -1 if none."""
    cdef int64_t z
    if x <= 0.0:
        return -1
    z = <int64_t>sqrt(x)
    while <double>(z * z) >= x:
        z -= 1
    while <double>((z + 1) * (z + 1)) < x:
        z += 1
    return z


cdef int sigma_column(int64_t x, int64_t y, double r2, int64_t* zs) nogil:
    """z-values (ascending) of exterior-boundary sites of B(0, r) in
    column (x, y); returns the count (caller sizes the buffer)."""
    cdef double own = r2 - <double>(x * x) - <double>(y * y)
    cdef int64_t zin = isqrt_strict(own)
    cdef double lat = r2 - <double>((x - 1) * (x - 1)) - <double>(y * y)
    cdef double l2 = r2 - <double>((x + 1) * (x + 1)) - <double>(y * y)
    if l2 > lat:
        lat = l2
    l2 = r2 - <double>(x * x) - <double>((y - 1) * (y - 1))
    if l2 > lat:
        lat = l2
    l2 = r2 - <double>(x * x) - <double>((y + 1) * (y + 1))
    if l2 > lat:
        lat = l2
    cdef int64_t zlat = isqrt_strict(lat)
    cdef int64_t lo = zin + 1
    cdef int64_t hi, z
    cdef int n = 0
    if zlat >= lo:
        hi = zlat
    elif zin >= 0:
        hi = lo
    else:
        return 0
    if lo == 0:
        for z in range(-hi, hi + 1):
            if <double>(z * z) >= own:
                if <double>(z * z) < lat:
                    zs[n] = z
                    n += 1
    else:
        for z in range(-hi, -lo + 1):
            if <double>(z * z) >= own:
                if (<double>(z * z) < lat) or (-z == lo and zin >= 0):
                    zs[n] = z
                    n += 1
        for z in range(lo, hi + 1):
            if <double>(z * z) >= own:
                if (<double>(z * z) < lat) or (z == lo and zin >= 0):
                    zs[n] = z
                    n += 1
    return n


cdef inline uint64_t cell_key(int64_t kx, int64_t ky, int64_t kz) nogil:
    return ((<uint64_t>(kx + 16384)) << 30) | \
           ((<uint64_t>(ky + 16384)) << 15) | <uint64_t>(kz + 16384)


cdef struct CovCtx:
    double r2
    double thin2
    double wide2
    int64_t reach
    # single-slot tile cache (fallback sites are rare and clustered)
    int64_t tile_cx
    int64_t tile_cy
    int64_t tile_cz
    int64_t tile_n
    int64_t* tile_x
    int64_t* tile_y
    int64_t* tile_z
    double* tile_n2
    int64_t* zbuf


cdef bint tile_shares(CovCtx* T, int64_t cx, int64_t cy, int64_t cz,
                      int64_t x, int64_t y, int64_t z, double n2) nogil:
    """True iff every thin-cone member of the tile at (cx,cy,cz) sees
    (x,y,z) inside its wide cone."""
    cdef double czzc, tt, vsq, tn2, yzz
    cdef int64_t tx, ty, tz, m
    cdef int nz, q
    if cx != T.tile_cx or cy != T.tile_cy or cz != T.tile_cz:
        T.tile_n = 0
        czzc = <double>(cx * cx + cy * cy + cz * cz)
        for tx in range(cx - T.reach, cx + T.reach + 1):
            for ty in range(cy - T.reach, cy + T.reach + 1):
                nz = sigma_column(tx, ty, T.r2, T.zbuf)
                for q in range(nz):
                    tz = T.zbuf[q]
                    if tz - cz > T.reach or cz - tz > T.reach:
                        continue
                    tn2 = <double>(tx * tx + ty * ty + tz * tz)
                    tt = sqrt(czzc / tn2)
                    vsq = 2.0 * (czzc - tt * <double>(tx * cx + ty * cy
                                                      + tz * cz))
                    if vsq < T.thin2:
                        T.tile_x[T.tile_n] = tx
                        T.tile_y[T.tile_n] = ty
                        T.tile_z[T.tile_n] = tz
                        T.tile_n2[T.tile_n] = tn2
                        T.tile_n += 1
        T.tile_cx = cx
        T.tile_cy = cy
        T.tile_cz = cz
    for m in range(T.tile_n):
        yzz = T.tile_n2[m]
        tt = sqrt(yzz / n2)
        vsq = 2.0 * (yzz - tt * <double>(x * T.tile_x[m] + y * T.tile_y[m]
                                         + z * T.tile_z[m]))
        if vsq >= T.wide2:
            return False
    return True


def covering_scan(double r_val, double h_val, double in_edge,
                  double out_edge, double spacing, double thin_ap,
                  double wide_ap, bint return_centers, bint measure=False):
    """Streaming covering + shared-cone feature scan of one d=3 shell.

    Counts [n_sigma, n_centers, n_shell, n_uncovered, n_feature_fail]
    match the python twin exactly; n_fallback and maxmin_rd match it
    only when measure is true (early exits otherwise skip the exact
    per-site minima).

    Memory modes: spacing <= 1.0 keeps every sphere site as a center
    (nothing stored; any radius streams).  spacing in (1, 2) runs the
    lexicographic greedy and hashes every center, as does measure=True;
    those two need out_edge <= 1024.
    """
    if spacing >= 2.0:
        raise ValueError("compiled covering_scan needs spacing < 2")
    if out_edge > 21000.0:
        raise ValueError("covering_scan column buffers sized for "
                         "out_edge <= 21000")
    cdef bint all_centers = spacing <= 1.0
    cdef bint use_hash = (not all_centers) or measure
    if use_hash and out_edge > 1024.0:
        raise ValueError("hashed covering_scan limited to out_edge <= "
                         "1024; use spacing <= 1 without measure for "
                         "big shells")

    cdef double r2 = r_val * r_val
    cdef double in2 = in_edge * in_edge
    cdef double out2 = out_edge * out_edge
    cdef double s2 = spacing * spacing
    cdef double ccell = wide_ap + 1.5
    cdef double thin2 = thin_ap * thin_ap
    cdef double wide2 = wide_ap * wide_ap
    cdef double fudge = (1.0 + 1.0 / r_val) * 1.0001
    cdef int64_t xmax = <int64_t>ceil(out_edge) + 1
    cdef int64_t reach = <int64_t>ceil(thin_ap) + 2
    if (2 * reach + 1) ** 3 > 4096:
        raise ValueError("thin aperture too large for the tile buffer")

    zbuf_a = np.zeros(600, dtype=np.int64)
    cdef int64_t[::1] zbuf = zbuf_a
    tzbuf_a = np.zeros(600, dtype=np.int64)
    cdef int64_t[::1] tzbuf = tzbuf_a
    tile_x_a = np.zeros(4096, dtype=np.int64)
    tile_y_a = np.zeros(4096, dtype=np.int64)
    tile_z_a = np.zeros(4096, dtype=np.int64)
    tile_n2_a = np.zeros(4096, dtype=np.float64)
    cdef int64_t[::1] tile_x = tile_x_a
    cdef int64_t[::1] tile_y = tile_y_a
    cdef int64_t[::1] tile_z = tile_z_a
    cdef double[::1] tile_n2 = tile_n2_a

    cdef CovCtx T
    T.r2 = r2
    T.thin2 = thin2
    T.wide2 = wide2
    T.reach = reach
    T.tile_cx = (<int64_t>1) << 62
    T.tile_cy = 0
    T.tile_cz = 0
    T.tile_n = 0
    T.tile_x = &tile_x[0]
    T.tile_y = &tile_y[0]
    T.tile_z = &tile_z[0]
    T.tile_n2 = &tile_n2[0]
    T.zbuf = &tzbuf[0]

    # ---- phase 1: sphere sweep (greedy centers, or just the count) ----
    cdef int64_t n_sigma = 0
    cdef vector[int64_t] gx, gy, gz
    cdef int64_t x, y, z, st_idx, plane_off, plane_w
    cdef int64_t dy, dz, yy, zz
    cdef int nz, q
    cdef bint okc
    stamp_a = None
    cdef int32_t[::1] stamp
    if not all_centers:
        # greedy needs only the previous and current x-slices: stamp
        # each (y, z) with the last x that accepted a center there
        plane_off = xmax + 2
        plane_w = 2 * plane_off + 1
        stamp_a = np.full(plane_w * plane_w, -2147483648, dtype=np.int32)
        stamp = stamp_a
        for x in range(-xmax, xmax + 1):
            for y in range(-xmax, xmax + 1):
                nz = sigma_column(x, y, r2, &zbuf[0])
                n_sigma += nz
                for q in range(nz):
                    z = zbuf[q]
                    okc = True
                    for dy in range(-1, 2):
                        yy = y + dy
                        for dz in range(-1, 2):
                            zz = z + dz
                            st_idx = (yy + plane_off) * plane_w + \
                                (zz + plane_off)
                            if stamp[st_idx] == <int32_t>x:
                                if <double>(dy * dy + dz * dz) < s2:
                                    okc = False
                                    break
                            elif stamp[st_idx] == <int32_t>(x - 1):
                                if <double>(dy * dy + dz * dz + 1) < s2:
                                    okc = False
                                    break
                        if not okc:
                            break
                    if okc:
                        stamp[(y + plane_off) * plane_w + (z + plane_off)] \
                            = <int32_t>x
                        gx.push_back(x)
                        gy.push_back(y)
                        gz.push_back(z)
    else:
        for x in range(-xmax, xmax + 1):
            for y in range(-xmax, xmax + 1):
                n_sigma += sigma_column(x, y, r2, &zbuf[0])

    cdef int64_t n_centers
    if all_centers:
        n_centers = n_sigma
    else:
        n_centers = <int64_t>gx.size()

    centers_out = None
    cdef int64_t ci
    cdef int64_t[:, ::1] cmv
    if return_centers:
        cen = np.empty((n_centers, 3), dtype=np.int64)
        cmv = cen
        if all_centers:
            ci = 0
            for x in range(-xmax, xmax + 1):
                for y in range(-xmax, xmax + 1):
                    nz = sigma_column(x, y, r2, &zbuf[0])
                    for q in range(nz):
                        cmv[ci, 0] = x
                        cmv[ci, 1] = y
                        cmv[ci, 2] = zbuf[q]
                        ci += 1
        else:
            for ci in range(n_centers):
                cmv[ci, 0] = gx[ci]
                cmv[ci, 1] = gy[ci]
                cmv[ci, 2] = gz[ci]
        centers_out = cen

    # ---- center hash (greedy centers, or measure mode) ----
    cdef int64_t hsize = (<int64_t>1) << 20
    cdef uint64_t hmask = <uint64_t>(hsize - 1)
    cdef vector[uint64_t] nkey
    cdef vector[int64_t] ncx, ncy, ncz
    cdef vector[double] nczz
    cdef vector[int32_t] nnxt
    head_a = None
    cdef int32_t[::1] head
    cdef uint64_t hk
    cdef int64_t hb, kx, ky, kz
    if use_hash:
        head_a = np.full(hsize, -1, dtype=np.int32)
        head = head_a
        if all_centers:
            for x in range(-xmax, xmax + 1):
                for y in range(-xmax, xmax + 1):
                    nz = sigma_column(x, y, r2, &zbuf[0])
                    for q in range(nz):
                        z = zbuf[q]
                        kx = <int64_t>floor(<double>x / ccell)
                        ky = <int64_t>floor(<double>y / ccell)
                        kz = <int64_t>floor(<double>z / ccell)
                        hk = cell_key(kx, ky, kz)
                        hb = <int64_t>(mix64(hk) & hmask)
                        nkey.push_back(hk)
                        ncx.push_back(x)
                        ncy.push_back(y)
                        ncz.push_back(z)
                        nczz.push_back(<double>(x * x + y * y + z * z))
                        nnxt.push_back(head[hb])
                        head[hb] = <int32_t>(nkey.size() - 1)
        else:
            for ci in range(n_centers):
                x = gx[ci]
                y = gy[ci]
                z = gz[ci]
                kx = <int64_t>floor(<double>x / ccell)
                ky = <int64_t>floor(<double>y / ccell)
                kz = <int64_t>floor(<double>z / ccell)
                hk = cell_key(kx, ky, kz)
                hb = <int64_t>(mix64(hk) & hmask)
                nkey.push_back(hk)
                ncx.push_back(x)
                ncy.push_back(y)
                ncz.push_back(z)
                nczz.push_back(<double>(x * x + y * y + z * z))
                nnxt.push_back(head[hb])
                head[hb] = <int32_t>(nkey.size() - 1)

    # ---- phase 2: scan every shell site ----
    cdef int64_t n_shell = 0, n_uncovered = 0, n_feature = 0, n_fallback = 0
    cdef double maxmin_rd = 0.0
    cdef int64_t x2, zhi, zlo_in, zsign, zr_lo, zr_hi
    cdef double rem_out, rem_in, n2, tproj, px, py, pz
    cdef double best, czzc, tt, vsq, rd
    cdef bint covered, found_any, ok, done
    cdef int64_t ni, ox, oy, oz, fx, fy, fz, cx, cy, cz, maxc, n2c
    cdef int64_t cx_lo, cx_hi, cy_lo, cy_hi, kc
    cdef uint64_t want

    for x in range(-xmax, xmax + 1):
        x2 = x * x
        for y in range(-xmax, xmax + 1):
            rem_out = out2 - <double>x2 - <double>(y * y)
            if rem_out <= 0.0:
                continue
            zhi = isqrt_strict(rem_out)
            rem_in = in2 - <double>x2 - <double>(y * y)
            zlo_in = isqrt_strict(rem_in)  # last |z| inside inner ball
            for zsign in range(2):
                if zsign == 0:
                    zr_lo = -zhi
                    zr_hi = zhi if zlo_in < 0 else (-zlo_in - 1)
                else:
                    if zlo_in < 0:
                        break
                    zr_lo = zlo_in + 1
                    zr_hi = zhi
                for z in range(zr_lo, zr_hi + 1):
                    n2 = <double>(x2 + y * y + z * z)
                    n_shell += 1
                    tproj = r_val / sqrt(n2)
                    px = <double>x * tproj
                    py = <double>y * tproj
                    pz = <double>z * tproj
                    kx = <int64_t>floor(px / ccell)
                    ky = <int64_t>floor(py / ccell)
                    kz = <int64_t>floor(pz / ccell)
                    best = 1e30
                    found_any = False
                    covered = False
                    done = False
                    if use_hash:
                        for ox in range(-1, 2):
                            for oy in range(-1, 2):
                                for oz in range(-1, 2):
                                    want = cell_key(kx + ox, ky + oy,
                                                    kz + oz)
                                    ni = head[<int64_t>(mix64(want)
                                                        & hmask)]
                                    while ni >= 0:
                                        if nkey[ni] == want:
                                            found_any = True
                                            czzc = nczz[ni]
                                            tt = sqrt(czzc / n2)
                                            vsq = 2.0 * (czzc - tt *
                                                         <double>(
                                                x * ncx[ni] + y * ncy[ni]
                                                + z * ncz[ni]))
                                            if vsq < best:
                                                best = vsq
                                            if not measure and \
                                                    vsq < thin2:
                                                done = True
                                                break
                                        ni = nnxt[ni]
                                    if done:
                                        break
                                if done:
                                    break
                            if done:
                                break
                        covered = best < thin2
                    else:
                        # candidates built right at the radial
                        # projection; sphere membership by the
                        # min-norm-neighbour test
                        fx = <int64_t>floor(px)
                        fy = <int64_t>floor(py)
                        fz = <int64_t>floor(pz)
                        for cx in range(fx - 1, fx + 2):
                            for cy in range(fy - 1, fy + 2):
                                for cz in range(fz - 2, fz + 4):
                                    n2c = cx * cx + cy * cy + cz * cz
                                    if <double>n2c < r2:
                                        continue
                                    maxc = cx if cx >= 0 else -cx
                                    if cy >= 0:
                                        if cy > maxc:
                                            maxc = cy
                                    elif -cy > maxc:
                                        maxc = -cy
                                    if cz >= 0:
                                        if cz > maxc:
                                            maxc = cz
                                    elif -cz > maxc:
                                        maxc = -cz
                                    if <double>(n2c - 2 * maxc + 1) >= r2:
                                        continue
                                    czzc = <double>n2c
                                    tt = sqrt(czzc / n2)
                                    vsq = 2.0 * (czzc - tt * <double>(
                                        x * cx + y * cy + z * cz))
                                    if vsq < thin2:
                                        best = vsq
                                        found_any = True
                                        covered = True
                                        done = True
                                        break
                                if done:
                                    break
                            if done:
                                break
                        if not covered:
                            # exact window enumeration straight off the
                            # sphere columns
                            best = 1e30
                            found_any = False
                            cx_lo = <int64_t>ceil((<double>(kx - 1))
                                                  * ccell)
                            cx_hi = <int64_t>ceil((<double>(kx + 2))
                                                  * ccell) - 1
                            cy_lo = <int64_t>ceil((<double>(ky - 1))
                                                  * ccell)
                            cy_hi = <int64_t>ceil((<double>(ky + 2))
                                                  * ccell) - 1
                            for cx in range(cx_lo, cx_hi + 1):
                                for cy in range(cy_lo, cy_hi + 1):
                                    nz = sigma_column(cx, cy, r2,
                                                      &zbuf[0])
                                    for q in range(nz):
                                        cz = zbuf[q]
                                        kc = <int64_t>floor(<double>cz
                                                            / ccell)
                                        if kc < kz - 1 or kc > kz + 1:
                                            continue
                                        found_any = True
                                        czzc = <double>(cx * cx + cy * cy
                                                        + cz * cz)
                                        tt = sqrt(czzc / n2)
                                        vsq = 2.0 * (czzc - tt * <double>(
                                            x * cx + y * cy + z * cz))
                                        if vsq < best:
                                            best = vsq
                            covered = best < thin2
                    if not covered:
                        n_uncovered += 1
                    if found_any:
                        rd = sqrt(best if best > 0.0 else 0.0)
                        if rd > maxmin_rd:
                            maxmin_rd = rd
                    # feature: some center's whole tile sees the site in
                    # wide cones
                    ok = False
                    if found_any:
                        rd = sqrt(best if best > 0.0 else 0.0)
                        if (rd + thin_ap) * fudge < wide_ap:
                            ok = True  # triangle bound, no enumeration
                        else:
                            n_fallback += 1
                            if use_hash:
                                for ox in range(-1, 2):
                                    for oy in range(-1, 2):
                                        for oz in range(-1, 2):
                                            want = cell_key(kx + ox,
                                                            ky + oy,
                                                            kz + oz)
                                            ni = head[<int64_t>(
                                                mix64(want) & hmask)]
                                            while ni >= 0:
                                                if nkey[ni] == want and \
                                                        tile_shares(
                                                        &T, ncx[ni],
                                                        ncy[ni], ncz[ni],
                                                        x, y, z, n2):
                                                    ok = True
                                                    break
                                                ni = nnxt[ni]
                                            if ok:
                                                break
                                        if ok:
                                            break
                                    if ok:
                                        break
                            else:
                                cx_lo = <int64_t>ceil((<double>(kx - 1))
                                                      * ccell)
                                cx_hi = <int64_t>ceil((<double>(kx + 2))
                                                      * ccell) - 1
                                cy_lo = <int64_t>ceil((<double>(ky - 1))
                                                      * ccell)
                                cy_hi = <int64_t>ceil((<double>(ky + 2))
                                                      * ccell) - 1
                                for cx in range(cx_lo, cx_hi + 1):
                                    for cy in range(cy_lo, cy_hi + 1):
                                        nz = sigma_column(cx, cy, r2,
                                                          &zbuf[0])
                                        for q in range(nz):
                                            cz = zbuf[q]
                                            kc = <int64_t>floor(
                                                <double>cz / ccell)
                                            if kc < kz - 1 or kc > kz + 1:
                                                continue
                                            if tile_shares(&T, cx, cy, cz,
                                                           x, y, z, n2):
                                                ok = True
                                                break
                                        if ok:
                                            break
                                    if ok:
                                        break
                    if not ok:
                        n_feature += 1
    counts = np.array([n_sigma, n_centers, n_shell, n_uncovered,
                       n_feature, n_fallback], dtype=np.int64)
    return counts, centers_out, maxmin_rd
