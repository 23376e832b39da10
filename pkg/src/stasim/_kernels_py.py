"""Pure-Python fallback kernels.

Level-kernel implementations mirroring the compiled extension statement for
statement: plain IEEE double arithmetic, the fixed strided-partial tree
reduction for root loads, first-wins strict comparisons in arrival folds, and
the shared bilinear interpolation with boundary clamping.  Outputs are
bit-identical to the compiled backend; only speed differs.
"""

from math import sqrt, inf

ROOT_ARC_DRIVEN = 0


def _interp(lut, s_ptr, l_ptr, t_ptr, s_flat, l_flat, t_flat, qs, ql):
    s0 = s_ptr[lut]
    nS = s_ptr[lut + 1] - s0
    l0 = l_ptr[lut]
    nL = l_ptr[lut + 1] - l0
    t0 = t_ptr[lut]

    if nS > 1:
        lo, hi = 0, nS
        while lo < hi:
            mid = (lo + hi) // 2
            if s_flat[s0 + mid] <= qs:
                lo = mid + 1
            else:
                hi = mid
        si = lo - 1
        if si < 0:
            si = 0
        elif si > nS - 2:
            si = nS - 2
        st = (qs - s_flat[s0 + si]) / (s_flat[s0 + si + 1] - s_flat[s0 + si])
        if st < 0.0:
            st = 0.0
        elif st > 1.0:
            st = 1.0
        si2 = si + 1
    else:
        si = 0
        st = 0.0
        si2 = 0

    if nL > 1:
        lo, hi = 0, nL
        while lo < hi:
            mid = (lo + hi) // 2
            if l_flat[l0 + mid] <= ql:
                lo = mid + 1
            else:
                hi = mid
        li = lo - 1
        if li < 0:
            li = 0
        elif li > nL - 2:
            li = nL - 2
        lt = (ql - l_flat[l0 + li]) / (l_flat[l0 + li + 1] - l_flat[l0 + li])
        if lt < 0.0:
            lt = 0.0
        elif lt > 1.0:
            lt = 1.0
        li2 = li + 1
    else:
        li = 0
        lt = 0.0
        li2 = 0

    v0 = (1.0 - lt) * t_flat[t0 + si * nL + li] + lt * t_flat[t0 + si * nL + li2]
    v1 = (1.0 - lt) * t_flat[t0 + si2 * nL + li] + lt * t_flat[t0 + si2 * nL + li2]
    return (1.0 - st) * v0 + st * v1


def rc_level(nets, net_ptr, net_root, root_cap, mem_pin, mem_parent_loc,
             mem_res, mem_cap, root_net_of_pin, load, net_delay, impulse,
             reduce_width):
    w = reduce_width
    partials = [0.0] * w
    for net in nets:
        s = net_ptr[net]
        e = net_ptr[net + 1]
        m = e - s
        root = net_root[net]
        buf = [0.0] * m
        dbuf = [0.0] * m
        for c in range(4):
            for k in range(m):
                buf[k] = mem_cap[s + k, c]
            for k in range(m - 1, 0, -1):
                pl = mem_parent_loc[s + k]
                if pl > 0:
                    buf[pl - 1] += buf[k]
            for lane in range(w):
                p = 0.0
                i = lane
                while i < m:
                    p = p + buf[i]
                    i += w
                partials[lane] = p
            stride = 1
            while stride < w:
                for lane in range(0, w, 2 * stride):
                    partials[lane] = partials[lane] + partials[lane + stride]
                stride *= 2
            load[root, c] = root_cap[net, c] + partials[0]
            for k in range(m):
                pl = mem_parent_loc[s + k]
                dp = 0.0 if pl == 0 else dbuf[pl - 1]
                t = mem_res[s + k, c] * buf[k]
                dbuf[k] = dp + t
            for k in range(m):
                r = mem_res[s + k, c]
                cp = mem_cap[s + k, c]
                d = dbuf[k]
                rad = 2.0 * r * cp * d - d * d
                imp = sqrt(rad) if rad > 0.0 else 0.0
                pin = mem_pin[s + k]
                if root_net_of_pin[pin] < 0:
                    load[pin, c] = buf[k]
                net_delay[pin, c] = dbuf[k]
                impulse[pin, c] = imp


def forward_level(nets, net_ptr, net_root, root_kind, mem_pin,
                  net_in_ptr, net_in_arc, arc_from, arc_dlut, arc_slut,
                  lut_s_ptr, lut_l_ptr, lut_t_ptr, lut_s_flat, lut_l_flat,
                  lut_t_flat, load, net_delay, impulse, slew, arrival,
                  arc_delay):
    for net in nets:
        root = net_root[net]
        if root_kind[net] == ROOT_ARC_DRIVEN:
            for c in range(4):
                late = c >= 2
                best = -inf if late else inf
                wa = -1
                root_ld = load[root, c]
                for t in range(net_in_ptr[net], net_in_ptr[net + 1]):
                    a = net_in_arc[t]
                    fp = arc_from[a]
                    d = _interp(arc_dlut[a, c], lut_s_ptr, lut_l_ptr, lut_t_ptr,
                                lut_s_flat, lut_l_flat, lut_t_flat,
                                slew[fp, c], root_ld)
                    arc_delay[a, c] = d
                    v = arrival[fp, c] + d
                    if (v > best) if late else (v < best):
                        best = v
                        wa = a
                arrival[root, c] = best
                slew[root, c] = _interp(arc_slut[wa, c], lut_s_ptr, lut_l_ptr,
                                        lut_t_ptr, lut_s_flat, lut_l_flat,
                                        lut_t_flat, slew[arc_from[wa], c], root_ld)
        s = net_ptr[net]
        e = net_ptr[net + 1]
        for k in range(s, e):
            pin = mem_pin[k]
            for c in range(4):
                arrival[pin, c] = arrival[root, c] + net_delay[pin, c]
                sr = slew[root, c]
                ii = impulse[pin, c]
                slew[pin, c] = sqrt(sr * sr + ii * ii)


def backward_level(nets, net_ptr, net_root, mem_pin, mem_out_ptr, mem_out_arc,
                   arc_to, net_delay, required, arc_delay):
    for net in nets:
        s = net_ptr[net]
        e = net_ptr[net + 1]
        root = net_root[net]
        for k in range(s, e):
            pin = mem_pin[k]
            for c in range(4):
                late = c >= 2
                r = required[pin, c]
                for t in range(mem_out_ptr[k], mem_out_ptr[k + 1]):
                    a = mem_out_arc[t]
                    v = required[arc_to[a], c] - arc_delay[a, c]
                    if (v < r) if late else (v > r):
                        r = v
                required[pin, c] = r
        for c in range(4):
            late = c >= 2
            r = required[root, c]
            for k in range(s, e):
                pin = mem_pin[k]
                v = required[pin, c] - net_delay[pin, c]
                if (v < r) if late else (v > r):
                    r = v
            required[root, c] = r
