# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled level kernels.

Statement-for-statement mirror of _kernels_py; compiled with FP contraction
disabled so results stay bit-identical to the Python fallback.
"""

from libc.math cimport sqrt, INFINITY
from libc.stdint cimport int64_t
from libc.stdlib cimport malloc, free

ROOT_ARC_DRIVEN = 0


cdef inline double _interp(int64_t lut,
                           const int64_t[::1] s_ptr, const int64_t[::1] l_ptr,
                           const int64_t[::1] t_ptr,
                           const double[::1] s_flat, const double[::1] l_flat,
                           const double[::1] t_flat,
                           double qs, double ql) nogil:
    cdef int64_t s0 = s_ptr[lut]
    cdef int64_t nS = s_ptr[lut + 1] - s0
    cdef int64_t l0 = l_ptr[lut]
    cdef int64_t nL = l_ptr[lut + 1] - l0
    cdef int64_t t0 = t_ptr[lut]
    cdef int64_t lo, hi, mid, si, li, si2, li2
    cdef double st, lt, v0, v1

    if nS > 1:
        lo = 0
        hi = nS
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
        lo = 0
        hi = nL
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


def rc_level(const int64_t[::1] nets,
             const int64_t[::1] net_ptr, const int64_t[::1] net_root,
             const double[:, ::1] root_cap,
             const int64_t[::1] mem_pin, const int64_t[::1] mem_parent_loc,
             const double[:, ::1] mem_res, const double[:, ::1] mem_cap,
             const int64_t[::1] root_net_of_pin,
             double[:, ::1] load, double[:, ::1] net_delay,
             double[:, ::1] impulse, int reduce_width):
    cdef int w = reduce_width
    cdef int64_t ni, net, s, e, m, root, k, pl, pin, i
    cdef int c, lane, stride
    cdef double p, dp, t, r, cp, d, rad, imp
    cdef int64_t max_m = 0
    for ni in range(nets.shape[0]):
        net = nets[ni]
        if net_ptr[net + 1] - net_ptr[net] > max_m:
            max_m = net_ptr[net + 1] - net_ptr[net]
    cdef double* buf = <double*> malloc((max_m if max_m > 0 else 1) * sizeof(double))
    cdef double* dbuf = <double*> malloc((max_m if max_m > 0 else 1) * sizeof(double))
    cdef double* partials = <double*> malloc(w * sizeof(double))
    if buf == NULL or dbuf == NULL or partials == NULL:
        free(buf); free(dbuf); free(partials)
        raise MemoryError()
    try:
        with nogil:
            for ni in range(nets.shape[0]):
                net = nets[ni]
                s = net_ptr[net]
                e = net_ptr[net + 1]
                m = e - s
                root = net_root[net]
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
                        lane = 0
                        while lane < w:
                            partials[lane] = partials[lane] + partials[lane + stride]
                            lane += 2 * stride
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
    finally:
        free(buf)
        free(dbuf)
        free(partials)


def forward_level(const int64_t[::1] nets,
                  const int64_t[::1] net_ptr, const int64_t[::1] net_root,
                  const int64_t[::1] root_kind, const int64_t[::1] mem_pin,
                  const int64_t[::1] net_in_ptr, const int64_t[::1] net_in_arc,
                  const int64_t[::1] arc_from,
                  const int64_t[:, ::1] arc_dlut, const int64_t[:, ::1] arc_slut,
                  const int64_t[::1] lut_s_ptr, const int64_t[::1] lut_l_ptr,
                  const int64_t[::1] lut_t_ptr,
                  const double[::1] lut_s_flat, const double[::1] lut_l_flat,
                  const double[::1] lut_t_flat,
                  const double[:, ::1] load, const double[:, ::1] net_delay,
                  const double[:, ::1] impulse,
                  double[:, ::1] slew, double[:, ::1] arrival,
                  double[:, ::1] arc_delay):
    cdef int64_t ni, net, root, t, a, fp, wa, s, e, k, pin
    cdef int c
    cdef bint late
    cdef double best, root_ld, d, v, sr, ii
    with nogil:
        for ni in range(nets.shape[0]):
            net = nets[ni]
            root = net_root[net]
            if root_kind[net] == 0:  # arc driven
                for c in range(4):
                    late = c >= 2
                    best = -INFINITY if late else INFINITY
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


def backward_level(const int64_t[::1] nets,
                   const int64_t[::1] net_ptr, const int64_t[::1] net_root,
                   const int64_t[::1] mem_pin,
                   const int64_t[::1] mem_out_ptr, const int64_t[::1] mem_out_arc,
                   const int64_t[::1] arc_to,
                   const double[:, ::1] net_delay,
                   double[:, ::1] required, const double[:, ::1] arc_delay):
    cdef int64_t ni, net, s, e, root, k, pin, t, a
    cdef int c
    cdef bint late
    cdef double r, v
    with nogil:
        for ni in range(nets.shape[0]):
            net = nets[ni]
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
