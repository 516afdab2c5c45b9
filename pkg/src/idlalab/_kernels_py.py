"""Pure-python reference kernels.

Everything here is mirrored one-to-one by the compiled extension
(_kernels.pyx); the two must agree bit-for-bit.  Keep formula order
exactly in sync with the .pyx file: float comparisons downstream
depend on it.

Conventions shared by both implementations:
  * splitmix64 streams keyed by (seed, actor, context), see rng.py;
  * uniform doubles are (u64 >> 11) * 2^-53;
  * one direction per step from a single u64 via the multiply-high
    range reduction: k = (u * 2d) >> 64, axis = k >> 1, sign = +1 for
    even k, -1 for odd;
  * each flash consumes exactly three uniforms (X, Y, R) before any
    walking, whatever the branch;
  * the cone test computes t = sqrt(czz/n2), vsq = 2*(czz - t*dot) and
    compares vsq < aperture^2.

Status codes returned by the growth kernels:
  0 ok, 1 coverage exceeded, 2 step cap hit, 3 code buffer full,
  4 internal invariant violated (coupled_run only).
"""

from __future__ import annotations

import math

import numpy as np

IMPL = "python"

MASK = (1 << 64) - 1
GOLD = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_KEYA = 0xC2B2AE3D27D4EB4F
_KEYB = 0x165667B19E3779F9
_INV53 = 1.0 / 9007199254740992.0

PACK_OFF = 32768
PACK_LIM = 32767


def _mix64(z):
    z &= MASK
    z ^= z >> 30
    z = (z * _MIX1) & MASK
    z ^= z >> 27
    z = (z * _MIX2) & MASK
    z ^= z >> 31
    return z


def _stream_key(seed, actor, context):
    s = _mix64((seed + GOLD) & MASK)
    s = _mix64((s + actor * _KEYA) & MASK)
    s = _mix64((s + context * _KEYB) & MASK)
    return s


class _St:
    """Minimal splitmix64 stream; list wrapper to keep parity with the
    pointer-state style of the compiled kernel."""

    __slots__ = ("s",)

    def __init__(self, key):
        self.s = key

    def u64(self):
        self.s = (self.s + GOLD) & MASK
        return _mix64(self.s)

    def unif(self):
        return (self.u64() >> 11) * _INV53

    def pick(self, m):
        return (self.u64() * m) >> 64


def debug_stream(seed, actor, context, n):
    st = _St(_stream_key(seed, actor, context))
    out = np.empty(n, dtype=np.uint64)
    for i in range(n):
        out[i] = st.u64()
    return out


def _pack(p, d):
    k = 0
    for i in range(d):
        k |= (p[i] + PACK_OFF) << (16 * i)
    return k


class _Occ:
    """Dense value grid over [-B, B]^d plus a spillover dict of packed
    keys for anything outside the box (values preserved there too)."""

    __slots__ = ("grid", "B", "side", "d", "spill")

    def __init__(self, grid, box_half, d):
        self.grid = grid
        self.B = box_half
        self.side = 2 * box_half + 1
        self.d = d
        self.spill = {}

    def _idx(self, p):
        B = self.B
        idx = 0
        for i in range(self.d):
            c = p[i]
            if c < -B or c > B:
                return -1
            idx = idx * self.side + (c + B)
        return idx

    def test(self, p):
        i = self._idx(p)
        if i >= 0:
            return self.grid[i] != 0
        return _pack(p, self.d) in self.spill

    def set(self, p, v=1):
        i = self._idx(p)
        if i >= 0:
            self.grid[i] = v
        else:
            self.spill[_pack(p, self.d)] = v

    def get(self, p):
        i = self._idx(p)
        if i >= 0:
            return self.grid[i]
        return self.spill.get(_pack(p, self.d), 0)


def idla_grow(seed, d, N, grid, box_half, step_cap):
    """Internal DLA: explorer i walks from the origin (stream actor=i,
    context=0) and settles at its first position outside the cluster.

    Returns (sites (N,d), steps (N,), status)."""
    occ = _Occ(grid, box_half, d)
    sites = np.zeros((N, d), dtype=np.int64)
    steps = np.zeros(N, dtype=np.int64)
    two_d = 2 * d
    for i in range(N):
        st = _St(_stream_key(seed, i, 0))
        p = [0] * d
        ns = 0
        while occ.test(p):
            k = st.pick(two_d)
            p[k >> 1] += 1 - 2 * (k & 1)
            ns += 1
            if ns > step_cap:
                return sites, steps, 2
        occ.set(p)
        for c in range(d):
            sites[i, c] = p[c]
        steps[i] = ns
    return sites, steps, 0


def _cell_ok(p, n2, j, czz, zj, d, edges_sq, half_ap_sq):
    """Pinned cell membership: in-shell interval check plus the cone
    ray test (shell 0 is the whole first ball)."""
    if j == 0:
        return n2 < edges_sq[0]
    if not (edges_sq[j - 1] <= n2 < edges_sq[j]):
        return False
    dot = 0
    for c in range(d):
        dot += p[c] * zj[c]
    t = math.sqrt(czz / n2)
    vsq = 2.0 * (czz - t * float(dot))
    return vsq < half_ap_sq[j]


def _norm2(p, d):
    s = 0
    for c in range(d):
        s += p[c] * p[c]
    return s


def flashing_grow(seed, d, N, r, r_sq, edges, edges_sq, h, inv_hd,
                  half_ap_sq, inv_d, grid, box_half, step_cap,
                  wave_mode=False, capture_shell=-1,
                  codes=None, offsets=None):
    """Flashing growth, explorer-by-explorer (direct) or wave-by-wave.

    Both schedules consume stream (seed, i, j) for explorer i's shell-j
    segment: three flash uniforms, the flash walk, then (if unsettled)
    the walk to the next entry sphere.  r/r_sq/edges/... come from a
    ShellTable; inv_d = 1/d and half_ap_sq = (h/2)^2 are precomputed by
    the caller so both implementations share the identical floats.

    Returns (gstar (N,d), settle_shell (N,), xi (N,d), steps_total,
    codes_used, status).  xi is the shell-entry position at
    capture_shell (zeros where never reached).  codes/offsets record
    per-step direction bytes when provided (direct mode only).
    """
    J = len(r_sq)
    occ = _Occ(grid, box_half, d)
    gstar = np.zeros((N, d), dtype=np.int64)
    settle_shell = np.full(N, -1, dtype=np.int32)
    xi = np.zeros((N, d), dtype=np.int64)
    record = codes is not None
    ncodes = len(codes) if record else 0
    two_d = 2 * d
    steps_total = 0
    cursor = 0  # next free byte in codes

    # per-explorer walk state (wave mode keeps all alive at once)
    pos = [[0] * d for _ in range(N)]
    czz = [0.0] * N

    def segment(i, j):
        """Advance explorer i through shell j. Returns (settled, steps,
        status)."""
        nonlocal cursor
        p = pos[i]
        zj = list(p)
        zn2 = czz[i]
        if capture_shell == j:
            for c in range(d):
                xi[i, c] = p[c]
        st = _St(_stream_key(seed, i, j))
        u1 = st.unif()
        u2 = st.unif()
        u3 = st.unif()
        x_flash = u1 < inv_hd[j]
        y_ball = True if j == 0 else (u2 < 0.5)
        R = h[j] * u3 ** inv_d
        ns = 0
        if x_flash:
            pass  # flash at the entry site itself
        elif y_ball:
            rho = edges[j] - math.sqrt(zn2)
            if R < rho:
                rho = R
            if rho > 0.0:
                rho2 = rho * rho
                rel2 = 0
                while rel2 < rho2:
                    k = st.pick(two_d)
                    ax = k >> 1
                    sg = 1 - 2 * (k & 1)
                    rel2 -= (p[ax] - zj[ax]) * (p[ax] - zj[ax])
                    p[ax] += sg
                    rel2 += (p[ax] - zj[ax]) * (p[ax] - zj[ax])
                    ns += 1
                    if record:
                        if cursor >= ncodes:
                            return False, ns, 3
                        codes[cursor] = k
                        cursor += 1
                    if ns > step_cap:
                        return False, ns, 2
        else:
            a = r[j] - R
            b = r[j] + R
            b2 = b * b
            if zn2 < b2:
                a2 = a * a
                n2 = int(zn2)
                while a2 <= n2 < b2:
                    k = st.pick(two_d)
                    ax = k >> 1
                    sg = 1 - 2 * (k & 1)
                    n2 -= p[ax] * p[ax]
                    p[ax] += sg
                    n2 += p[ax] * p[ax]
                    ns += 1
                    if record:
                        if cursor >= ncodes:
                            return False, ns, 3
                        codes[cursor] = k
                        cursor += 1
                    if ns > step_cap:
                        return False, ns, 2
        # settle attempt at the flash site
        n2w = _norm2(p, d)
        if _cell_ok(p, float(n2w), j, zn2, zj, d, edges_sq, half_ap_sq) \
                and not occ.test(p):
            occ.set(p)
            for c in range(d):
                gstar[i, c] = p[c]
            settle_shell[i] = j
            return True, ns, 0
        # walk out to the next entry sphere
        if j + 1 >= J:
            return False, ns, 1
        nxt = r_sq[j + 1]
        n2 = n2w
        while n2 < nxt:
            k = st.pick(two_d)
            ax = k >> 1
            sg = 1 - 2 * (k & 1)
            n2 -= p[ax] * p[ax]
            p[ax] += sg
            n2 += p[ax] * p[ax]
            ns += 1
            if record:
                if cursor >= ncodes:
                    return False, ns, 3
                codes[cursor] = k
                cursor += 1
            if ns > step_cap:
                return False, ns, 2
        czz[i] = float(n2)
        return False, ns, 0

    status = 0
    if not wave_mode:
        for i in range(N):
            if record:
                offsets[i] = cursor
            j = 0
            while True:
                if j >= J:
                    status = 1
                    break
                settled, ns, st_code = segment(i, j)
                steps_total += ns
                if st_code:
                    status = st_code
                    break
                if settled:
                    break
                j += 1
            if status:
                break
        if record and status == 0:
            offsets[N] = cursor
    else:
        alive = list(range(N))
        j = 0
        while alive:
            if j >= J:
                status = 1
                break
            nxt_alive = []
            for i in alive:
                settled, ns, st_code = segment(i, j)
                steps_total += ns
                if st_code:
                    status = st_code
                    break
                if not settled:
                    nxt_alive.append(i)
            if status:
                break
            alive = nxt_alive
            j += 1
    return gstar, settle_shell, xi, steps_total, cursor, status


def coupled_run(d, codes, offsets, grid, label_grid, blue_grid,
                visited_grid, box_half, n_explorers):
    """Couple internal DLA to recorded flashing trajectories.

    Explorer i replays its flashing trajectory until first exiting the
    current cluster; if the trajectory is exhausted at an occupied site
    that site must be red: it turns blue, hands over its old label's
    unconsumed suffix, and the chain continues until a vacancy is
    found.

    Fills label/blue/visited grids in place.  Returns (siteA (N,d),
    lab_final (N,), blue_final (N,), tcons (N,), chain_max,
    vis_spill (sorted packed keys), status, err_info).
    lab_final/blue_final give the end-state label (0-based) and colour
    of siteA row m.  err_info = (invariant id, explorer, hop) on
    status 4.
    """
    N = n_explorers
    occ = _Occ(grid, box_half, d)
    lab = _Occ(label_grid, box_half, d)   # stores label+1 (0 = none)
    blu = _Occ(blue_grid, box_half, d)
    vis = _Occ(visited_grid, box_half, d)
    siteA = np.zeros((N, d), dtype=np.int64)
    lab_final = np.zeros(N, dtype=np.int32)
    blue_final = np.zeros(N, dtype=np.uint8)
    tcons = np.zeros(N, dtype=np.int64)
    tau = [int(offsets[i + 1] - offsets[i]) for i in range(N)]
    chain_max = 0
    err = (0, 0, 0)
    status = 0
    for i in range(N):
        driver = i
        tpos = 0
        p = [0] * d
        vis.set(p)
        hops = 0
        while status == 0:
            if not occ.test(p):
                occ.set(p)
                lab.set(p, driver + 1)
                if tpos == tau[driver]:
                    blu.set(p)
                tcons[driver] = tpos
                for c in range(d):
                    siteA[i, c] = p[c]
                break
            if tpos == tau[driver]:
                # trajectory exhausted at an occupied site: must be red
                old = lab.get(p)
                if old == 0:
                    status, err = 4, (1, i, hops)
                    break
                if blu.get(p):
                    status, err = 4, (2, i, hops)
                    break
                old -= 1
                lab.set(p, driver + 1)
                blu.set(p)
                tcons[driver] = tau[driver]
                driver = old
                tpos = tcons[driver]
                if tpos >= tau[driver]:
                    status, err = 4, (3, i, hops)
                    break
                hops += 1
                if hops > N:
                    status, err = 4, (4, i, hops)
                    break
                if hops > chain_max:
                    chain_max = hops
            else:
                k = int(codes[offsets[driver] + tpos])
                p[k >> 1] += 1 - 2 * (k & 1)
                tpos += 1
                vis.set(p)
        if status:
            break
    if status == 0:
        for m in range(N):
            p = [int(siteA[m, c]) for c in range(d)]
            lab_final[m] = lab.get(p) - 1
            blue_final[m] = 1 if blu.get(p) else 0
    vis_spill = np.array(sorted(vis.spill.keys()), dtype=np.uint64)
    return (siteA, lab_final, blue_final, tcons, chain_max, vis_spill,
            status, err)


def replay_mark(d, codes, offsets, grid, box_half, n_explorers):
    """Mark every position of every recorded trajectory (start to end)
    into grid; used for the orbit-inclusion cross-check.  Returns the
    sorted packed keys of marks that fell outside the grid box."""
    vis = _Occ(grid, box_half, d)
    for i in range(n_explorers):
        p = [0] * d
        vis.set(p)
        for t in range(offsets[i], offsets[i + 1]):
            k = int(codes[t])
            p[k >> 1] += 1 - 2 * (k & 1)
            vis.set(p)
    return np.array(sorted(vis.spill.keys()), dtype=np.uint64)


def region_walks(seed, d, samples, start, r2_out, r2_in,
                 occ_lo, occ_hi, step_cap, ends, steps, occt):
    """Independent walks (stream actor = sample index, context 0) from
    `start` until squared norm >= r2_out or < r2_in (r2_in < 0 disables
    the inner stop).  occt counts time at squared norms in
    [occ_lo, occ_hi) before the stop, including t=0; occ_hi <= 0
    disables counting."""
    two_d = 2 * d
    count_occ = occ_hi > 0
    for s in range(samples):
        st = _St(_stream_key(seed, s, 0))
        p = [int(start[c]) for c in range(d)]
        n2 = _norm2(p, d)
        ns = 0
        no = 0
        while n2 < r2_out and not (r2_in >= 0.0 and n2 < r2_in):
            if count_occ and occ_lo <= n2 < occ_hi:
                no += 1
            k = st.pick(two_d)
            ax = k >> 1
            sg = 1 - 2 * (k & 1)
            n2 -= p[ax] * p[ax]
            p[ax] += sg
            n2 += p[ax] * p[ax]
            ns += 1
            if ns > step_cap:
                return 2
        for c in range(d):
            ends[s, c] = p[c]
        steps[s] = ns
        occt[s] = no
    return 0


def flash_profile(seed, d, samples, zj, context, r_val, edge, edge_sq,
                  in_edge_sq, h_j, inv_hd_j, half_ap_sq_j, inv_d,
                  step_cap, sites, incell):
    """Monte Carlo of one flash from entry site zj on sphere j (stream
    actor = sample, context = shell id).  Mirrors the flash branch of
    flashing_grow without occupancy.  Fills sites (M,d) and the
    in-cell flag."""
    two_d = 2 * d
    czz = float(_norm2(zj, d))
    zn = math.sqrt(czz)
    for smp in range(samples):
        st = _St(_stream_key(seed, smp, context))
        u1 = st.unif()
        u2 = st.unif()
        u3 = st.unif()
        x_flash = u1 < inv_hd_j
        y_ball = True if context == 0 else (u2 < 0.5)
        R = h_j * u3 ** inv_d
        p = [int(zj[c]) for c in range(d)]
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
                while rel2 < rho2:
                    k = st.pick(two_d)
                    ax = k >> 1
                    sg = 1 - 2 * (k & 1)
                    rel2 -= (p[ax] - zj[ax]) * (p[ax] - zj[ax])
                    p[ax] += sg
                    rel2 += (p[ax] - zj[ax]) * (p[ax] - zj[ax])
                    ns += 1
                    if ns > step_cap:
                        return 2
        else:
            a = r_val - R
            b = r_val + R
            b2 = b * b
            if czz < b2:
                a2 = a * a
                n2 = _norm2(p, d)
                while a2 <= n2 < b2:
                    k = st.pick(two_d)
                    ax = k >> 1
                    sg = 1 - 2 * (k & 1)
                    n2 -= p[ax] * p[ax]
                    p[ax] += sg
                    n2 += p[ax] * p[ax]
                    ns += 1
                    if ns > step_cap:
                        return 2
        n2w = _norm2(p, d)
        ok = False
        if context == 0:
            ok = n2w < edge_sq
        elif in_edge_sq <= n2w < edge_sq:
            dot = 0
            for c in range(d):
                dot += p[c] * zj[c]
            t = math.sqrt(czz / n2w)
            vsq = 2.0 * (czz - t * float(dot))
            ok = vsq < half_ap_sq_j
        for c in range(d):
            sites[smp, c] = p[c]
        incell[smp] = 1 if ok else 0
    return 0


# --- covering scan (d=3 geometry) -----------------------------------

def _isqrt_strict(x):
    """Largest integer z >= 0 with z*z < x (x float > 0); -1 if none."""
    if x <= 0.0:
        return -1
    z = int(math.sqrt(x))
    while z * z >= x:
        z -= 1
    while (z + 1) * (z + 1) < x:
        z += 1
    return z


def _sigma_column(x, y, r2):
    """z-values (sorted ascending) of exterior-boundary sites of
    B(0, r) in column (x, y), d=3."""
    own = r2 - x * x - y * y
    zin = _isqrt_strict(own)
    lat = max(r2 - (x - 1) * (x - 1) - y * y,
              r2 - (x + 1) * (x + 1) - y * y,
              r2 - x * x - (y - 1) * (y - 1),
              r2 - x * x - (y + 1) * (y + 1))
    zlat = _isqrt_strict(lat)
    lo = zin + 1  # first |z| outside own ball range (0 if column empty)
    out = []
    hi = zlat if zlat >= lo else (lo if zin >= 0 else -1)
    if hi < 0:
        return out
    if lo == 0:
        rng = range(-hi, hi + 1)
    else:
        rng = list(range(-hi, -lo + 1)) + list(range(lo, hi + 1))
    for z in rng:
        if z * z >= own:  # outside the ball
            if (z * z < lat) or (abs(z) == lo and zin >= 0):
                out.append(z)
    return out


def covering_scan(r_val, h_val, in_edge, out_edge, spacing,
                  thin_ap, wide_ap, return_centers, measure=False):
    """Exhaustive covering + shared-cone feature scan of one d=3 shell.

    Phase 1 sweeps the entry sphere in lexicographic order keeping the
    greedy tile centers (open exclusion: conflict iff distance <
    spacing).  Phase 2 scans every shell site and counts sites not
    ray-covered by a thin cone and sites failing the every-tile-site
    wide-cone property.  Python path is for small shells; the compiled
    twin streams the billion-site shells.

    The python path always measures exactly (the flag is accepted for
    signature parity and ignored).  The compiled twin early-exits when
    measure is false, which can change n_fallback and maxmin_rd but
    never the first five counts.

    Returns (counts, centers (M,3) or None, maxmin_rd).
    counts = [n_sigma, n_centers, n_shell, n_uncovered, n_feature_fail,
    n_fallback]."""
    r2 = r_val * r_val
    in2 = in_edge * in_edge
    out2 = out_edge * out_edge
    s2 = spacing * spacing
    xmax = int(math.ceil(out_edge)) + 1

    # phase 1: greedy centers over the sphere, lexicographic
    centers = []
    cell = max(spacing, 1.0)
    buckets = {}
    n_sigma = 0
    for x in range(-xmax, xmax + 1):
        for y in range(-xmax, xmax + 1):
            col = _sigma_column(x, y, r2)
            n_sigma += len(col)
            for z in col:
                kx = math.floor(x / cell)
                ky = math.floor(y / cell)
                kz = math.floor(z / cell)
                ok = True
                for ox in (-1, 0, 1):
                    for oy in (-1, 0, 1):
                        for oz in (-1, 0, 1):
                            for (cx, cy, cz) in buckets.get(
                                    (kx + ox, ky + oy, kz + oz), ()):
                                dd = ((x - cx) ** 2 + (y - cy) ** 2
                                      + (z - cz) ** 2)
                                if dd < s2:
                                    ok = False
                                    break
                            if not ok:
                                break
                        if not ok:
                            break
                    if not ok:
                        break
                if ok:
                    buckets.setdefault((kx, ky, kz), []).append((x, y, z))
                    centers.append((x, y, z))
    carr = np.array(centers, dtype=np.int64) if centers else \
        np.empty((0, 3), dtype=np.int64)
    # center lookup hash on (x, y, z) cells of size ~wide aperture
    ccell = wide_ap + 1.5
    chash = {}
    for ci, (cx, cy, cz) in enumerate(centers):
        key = (math.floor(cx / ccell), math.floor(cy / ccell),
               math.floor(cz / ccell))
        chash.setdefault(key, []).append(ci)
    czz = [float(cx * cx + cy * cy + cz * cz) for (cx, cy, cz) in centers]

    thin2 = thin_ap * thin_ap
    wide2 = wide_ap * wide_ap
    # chord distances at radius ~r+1 vs the center's own radius differ
    # by a factor up to 1+1/r; the extra 1.0001 absorbs rounding
    fudge = (1.0 + 1.0 / r_val) * 1.0001
    tiles = {}

    def tile_of(ci):
        t = tiles.get(ci)
        if t is None:
            cx, cy, cz = centers[ci]
            reach = int(math.ceil(thin_ap)) + 2
            t = []
            for x in range(cx - reach, cx + reach + 1):
                for y in range(cy - reach, cy + reach + 1):
                    for z in _sigma_column(x, y, r2):
                        if abs(z - cz) > reach:
                            continue
                        n2 = float(x * x + y * y + z * z)
                        tt = math.sqrt(czz[ci] / n2)
                        dot = float(x * centers[ci][0] + y * centers[ci][1]
                                    + z * centers[ci][2])
                        vsq = 2.0 * (czz[ci] - tt * dot)
                        if vsq < thin2:
                            t.append((x, y, z, n2))
            tiles[ci] = t
        return t

    n_shell = 0
    n_uncovered = 0
    n_feature = 0
    n_fallback = 0
    maxmin_rd = 0.0
    for x in range(-xmax, xmax + 1):
        x2 = x * x
        for y in range(-xmax, xmax + 1):
            rem_out = out2 - x2 - y * y
            if rem_out <= 0.0:
                continue
            zhi = _isqrt_strict(rem_out)
            rem_in = in2 - x2 - y * y
            zlo_in = _isqrt_strict(rem_in)  # last |z| inside inner ball
            if zlo_in < 0:
                zrange = range(-zhi, zhi + 1)
            else:
                zrange = list(range(-zhi, -zlo_in)) + \
                    list(range(zlo_in + 1, zhi + 1))
            for z in zrange:
                n2 = float(x2 + y * y + z * z)
                n_shell += 1
                # candidate centers near the radial projection
                t = r_val / math.sqrt(n2)
                px, py, pz = x * t, y * t, z * t
                kx, ky, kz = (math.floor(px / ccell),
                              math.floor(py / ccell),
                              math.floor(pz / ccell))
                best = 1e30
                best_ci = -1
                for ox in (-1, 0, 1):
                    for oy in (-1, 0, 1):
                        for oz in (-1, 0, 1):
                            for ci in chash.get(
                                    (kx + ox, ky + oy, kz + oz), ()):
                                cx, cy, cz = centers[ci]
                                tt = math.sqrt(czz[ci] / n2)
                                dot = float(x * cx + y * cy + z * cz)
                                vsq = 2.0 * (czz[ci] - tt * dot)
                                if vsq < best:
                                    best = vsq
                                    best_ci = ci
                if best >= thin2:
                    n_uncovered += 1
                if best_ci >= 0 and math.sqrt(max(best, 0.0)) > maxmin_rd:
                    maxmin_rd = math.sqrt(max(best, 0.0))
                # feature: some center's whole tile sees p in wide cones
                ok = False
                if best_ci >= 0:
                    rd = math.sqrt(max(best, 0.0))
                    if (rd + thin_ap) * fudge < wide_ap:
                        ok = True  # triangle bound, no enumeration
                    else:
                        n_fallback += 1
                        for ox in (-1, 0, 1):
                            if ok:
                                break
                            for oy in (-1, 0, 1):
                                if ok:
                                    break
                                for oz in (-1, 0, 1):
                                    if ok:
                                        break
                                    for ci in chash.get(
                                            (kx + ox, ky + oy, kz + oz), ()):
                                        good = True
                                        for (tx, ty, tz, tn2) in tile_of(ci):
                                            yzz = tn2
                                            tt = math.sqrt(yzz / n2)
                                            dot = float(x * tx + y * ty
                                                        + z * tz)
                                            vsq = 2.0 * (yzz - tt * dot)
                                            if vsq >= wide2:
                                                good = False
                                                break
                                        if good:
                                            ok = True
                                            break
                if not ok:
                    n_feature += 1
    counts = np.array([n_sigma, len(centers), n_shell, n_uncovered,
                       n_feature, n_fallback], dtype=np.int64)
    return counts, (carr if return_centers else None), maxmin_rd
