"""Sequential, order-deterministic reference STA.

Computes RC net quantities (loads, cumulative Elmore delays, impulses),
LUT-interpolated forward arrival/slew propagation, backward required-time
and slack propagation, and the TNS/WNS summaries.  This is the correctness
oracle the scheduled engines are compared against: it is implemented
independently of the backend kernels, with numpy passes vectorized over
whole levels.

Root loads fold member loads in member order by default (reduce_mode
"sequential").  reduce_mode "tree" reproduces the engines' fixed reduction
order instead: per-lane strided partial sums followed by the pairwise
stride-doubling reduction, making reference and engine outputs bit-identical.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .netlist import Design, Lut2D, Net, N_COND, LATE_CONDS
from .flatten import (
    FlatDesign, LevelSchedule, CycleError, flatten, levelize, ROOT_ARC_DRIVEN,
)

__all__ = [
    "TimingState", "LevelSchedule", "CycleError", "levelize",
    "interpolate_lut", "compute_net_loads", "compute_net_delays",
    "compute_net_impulses", "compute_rc", "propagate_arrival",
    "propagate_required", "run_reference", "tns", "wns", "check_schedule",
]

BIG = np.iinfo(np.int64).max


@dataclass
class TimingState:
    """Per-pin, per-condition timing values plus the per-arc delay cache."""

    load: np.ndarray       # (n_pins, 4) farads
    net_delay: np.ndarray  # (n_pins, 4) seconds, cumulative from net root
    impulse: np.ndarray    # (n_pins, 4) seconds
    slew: np.ndarray       # (n_pins, 4) seconds
    arrival: np.ndarray    # (n_pins, 4) seconds
    required: np.ndarray   # (n_pins, 4) seconds
    slack: np.ndarray      # (n_pins, 4) seconds
    arc_delay: np.ndarray  # (n_arcs, 4) seconds
    n_levels: int = 0

    @classmethod
    def init(cls, flat: FlatDesign) -> "TimingState":
        n = flat.n_pins
        z = lambda: np.zeros((n, N_COND))
        required = np.empty((n, N_COND))
        required[:, 0:2] = -np.inf
        required[:, 2:4] = np.inf
        state = cls(load=z(), net_delay=z(), impulse=z(), slew=z(),
                    arrival=z(), required=required, slack=z(),
                    arc_delay=np.zeros((flat.n_arcs, N_COND)),
                    n_levels=flat.n_levels)
        if len(flat.pi_pin):
            state.arrival[flat.pi_pin] = flat.pi_arrival
            state.slew[flat.pi_pin] = flat.pi_slew
        if len(flat.ep_pin):
            np.minimum.at(state.required[:, 2:4], flat.ep_pin, flat.ep_required[:, 2:4])
            np.maximum.at(state.required[:, 0:2], flat.ep_pin, flat.ep_required[:, 0:2])
        return state

    def values_equal(self, other: "TimingState", rtol=1e-6, atol=1e-22) -> bool:
        return all(
            np.allclose(getattr(self, f), getattr(other, f), rtol=rtol, atol=atol, equal_nan=True)
            for f in ("load", "net_delay", "impulse", "slew", "arrival", "required", "slack"))


# ---------------------------------------------------------------------------
# LUT interpolation

def _locate(axis, q):
    n = len(axis)
    if n == 1:
        return 0, 0.0
    lo, hi = 0, n
    while lo < hi:
        mid = (lo + hi) // 2
        if axis[mid] <= q:
            lo = mid + 1
        else:
            hi = mid
    i = lo - 1
    if i < 0:
        i = 0
    elif i > n - 2:
        i = n - 2
    t = (q - axis[i]) / (axis[i + 1] - axis[i])
    if t < 0.0:
        t = 0.0
    elif t > 1.0:
        t = 1.0
    return i, t


def interpolate_lut(lut: Lut2D, slew: float, load: float) -> float:
    """Bilinear interpolation over (slew, load); out-of-range queries clamp
    to the boundary cell, 1x1 tables are constants."""
    si, st = _locate(lut.slew_axis, slew)
    li, lt = _locate(lut.load_axis, load)
    si2 = si + 1 if lut.slew_axis.size > 1 else si
    li2 = li + 1 if lut.load_axis.size > 1 else li
    tab = lut.table
    v0 = (1.0 - lt) * tab[si, li] + lt * tab[si, li2]
    v1 = (1.0 - lt) * tab[si2, li] + lt * tab[si2, li2]
    return float((1.0 - st) * v0 + st * v1)


def _interp_many(flat: FlatDesign, lut_ids, qs, ql):
    """Vectorized bilinear interpolation, grouped by table."""
    out = np.empty(len(lut_ids))
    order = np.argsort(lut_ids, kind="stable")
    sorted_ids = lut_ids[order]
    starts = np.flatnonzero(np.r_[True, sorted_ids[1:] != sorted_ids[:-1]])
    bounds = np.r_[starts, len(sorted_ids)]
    for gi in range(len(starts)):
        sel = order[bounds[gi]:bounds[gi + 1]]
        uid = int(sorted_ids[bounds[gi]])
        axS = flat.lut_s_flat[flat.lut_s_ptr[uid]:flat.lut_s_ptr[uid + 1]]
        axL = flat.lut_l_flat[flat.lut_l_ptr[uid]:flat.lut_l_ptr[uid + 1]]
        tab = flat.lut_t_flat[flat.lut_t_ptr[uid]:flat.lut_t_ptr[uid + 1]]
        nS, nL = len(axS), len(axL)
        s, l = qs[sel], ql[sel]
        if nS > 1:
            si = np.clip(np.searchsorted(axS, s, side="right") - 1, 0, nS - 2)
            st = np.clip((s - axS[si]) / (axS[si + 1] - axS[si]), 0.0, 1.0)
            si2 = si + 1
        else:
            si = np.zeros(len(sel), dtype=np.int64)
            st = np.zeros(len(sel))
            si2 = si
        if nL > 1:
            li = np.clip(np.searchsorted(axL, l, side="right") - 1, 0, nL - 2)
            lt = np.clip((l - axL[li]) / (axL[li + 1] - axL[li]), 0.0, 1.0)
            li2 = li + 1
        else:
            li = np.zeros(len(sel), dtype=np.int64)
            lt = np.zeros(len(sel))
            li2 = li
        v0 = (1.0 - lt) * tab[si * nL + li] + lt * tab[si * nL + li2]
        v1 = (1.0 - lt) * tab[si2 * nL + li] + lt * tab[si2 * nL + li2]
        out[sel] = (1.0 - st) * v0 + st * v1
    return out


# ---------------------------------------------------------------------------
# per-net RC operations (scalar oracle form)

def compute_net_loads(net: Net) -> np.ndarray:
    """Loads for [root] + members: Load(u) = Cap(u) + sum of children loads;
    the root instead sums all member loads over its own cap (the flat
    per-member reduction)."""
    m = len(net.member_pins)
    loads = np.zeros((1 + m, N_COND))
    loads[1:] = net.member_caps
    for k in range(m - 1, -1, -1):
        # parent index in the [root]+members numbering; root handled below
        p = _parent_local(net, k)
        if p > 0:
            loads[p] += loads[k + 1]
    total = np.zeros(N_COND)
    for k in range(m):
        total = total + loads[k + 1]
    loads[0] = net.root_cap + total
    return loads


def _parent_local(net: Net, k):
    parent = net.member_parents[k]
    if parent == net.root:
        return 0
    return net.member_pins.index(parent) + 1


def compute_net_delays(net: Net, loads: np.ndarray) -> np.ndarray:
    """Cumulative Elmore delay along the tree: Delay(root) = 0,
    Delay(u) = Delay(parent) + Res(parent->u) * Load(u)."""
    m = len(net.member_pins)
    delays = np.zeros((1 + m, N_COND))
    for k in range(m):
        p = _parent_local(net, k)
        delays[k + 1] = delays[p] + net.member_res[k] * loads[k + 1]
    return delays


def compute_net_impulses(net: Net, loads: np.ndarray, delays: np.ndarray) -> np.ndarray:
    """Impulse(u) = sqrt(max(0, 2*Res(parent->u)*Cap(u)*Delay(u) - Delay(u)^2))."""
    m = len(net.member_pins)
    out = np.zeros((1 + m, N_COND))
    for k in range(m):
        rad = 2.0 * net.member_res[k] * net.member_caps[k] * delays[k + 1] \
            - delays[k + 1] * delays[k + 1]
        out[k + 1] = np.sqrt(np.where(rad > 0.0, rad, 0.0))
    return out


# ---------------------------------------------------------------------------
# vectorized full-design passes

def _pos_groups(flat: FlatDesign):
    """Member flat indices grouped by local position, cached on the flat."""
    got = flat._level_cache.get("_pos_groups")
    if got is None:
        order = np.argsort(flat.mem_local, kind="stable")
        pos_sorted = flat.mem_local[order]
        max_pos = int(pos_sorted[-1]) + 1 if len(pos_sorted) else 0
        bounds = np.searchsorted(pos_sorted, np.arange(max_pos + 1))
        got = [order[bounds[k]:bounds[k + 1]] for k in range(max_pos)]
        flat._level_cache["_pos_groups"] = got
    return got


def compute_rc(flat: FlatDesign, state: TimingState, reduce_mode="sequential",
               reduce_width=8):
    """Loads, cumulative delays, and impulses for every net at once."""
    if reduce_mode not in ("sequential", "tree"):
        raise ValueError(f"unknown reduce_mode {reduce_mode!r}")
    M = len(flat.mem_pin)
    load_buf = flat.mem_cap.copy()
    groups = _pos_groups(flat)

    # fold subtree loads into non-root parents, deepest position first
    for k in range(len(groups) - 1, 0, -1):
        idx = groups[k]
        inner = idx[flat.mem_parent_loc[idx] > 0]
        if len(inner):
            parent = flat.net_ptr[flat.mem_net[inner]] + flat.mem_parent_loc[inner] - 1
            load_buf[parent] += load_buf[inner]

    # root loads: cap plus the sum over all member loads
    nz = flat.net_m > 0
    root_load = flat.root_cap.copy()
    if M:
        if reduce_mode == "sequential":
            seg = np.add.reduceat(load_buf, flat.net_ptr[:-1][nz], axis=0)
            root_load[nz] = root_load[nz] + seg
        else:
            w = reduce_width
            partials = np.zeros((flat.n_nets, w, N_COND))
            max_trips = (int(flat.net_m.max()) + w - 1) // w
            for t in range(max_trips):
                for lane in range(w):
                    pos = t * w + lane
                    if pos >= len(groups):
                        break
                    idx = groups[pos]
                    partials[flat.mem_net[idx], lane] += load_buf[idx]
            stride = 1
            while stride < w:
                for lane in range(0, w, 2 * stride):
                    partials[:, lane] += partials[:, lane + stride]
                stride *= 2
            root_load[nz] = root_load[nz] + partials[nz, 0]

    # cumulative delays, shallowest position first
    delay_buf = np.zeros((M, N_COND))
    for k in range(len(groups)):
        idx = groups[k]
        t = flat.mem_res[idx] * load_buf[idx]
        par = flat.mem_parent_loc[idx]
        pd = np.zeros((len(idx), N_COND))
        inner = par > 0
        if inner.any():
            pidx = flat.net_ptr[flat.mem_net[idx[inner]]] + par[inner] - 1
            pd[inner] = delay_buf[pidx]
        delay_buf[idx] = pd + t

    rad = 2.0 * flat.mem_res * flat.mem_cap * delay_buf - delay_buf * delay_buf
    imp = np.sqrt(np.where(rad > 0.0, rad, 0.0))

    state.load[flat.mem_pin] = load_buf
    state.load[flat.net_root] = root_load
    state.net_delay[flat.mem_pin] = delay_buf
    state.impulse[flat.mem_pin] = imp
    return state


def _forward_gather(flat: FlatDesign, li):
    key = ("fwd", li)
    got = flat._level_cache.get(key)
    if got is None:
        nets, mem_idx, mem_seg, arc_nets, arc_idx, arc_seg = flat.level_view(li)
        rep_net = np.repeat(arc_nets, flat.net_a[arc_nets])
        got = (nets, mem_idx, mem_seg, arc_nets, arc_idx, arc_seg, rep_net)
        flat._level_cache[key] = got
    return got


def propagate_arrival(flat: FlatDesign, state: TimingState) -> TimingState:
    """Forward pass, level by level: cell-output arrival/slew by LUT arcs
    (late = max, early = min, first arc wins ties), then net edges."""
    for li in range(flat.n_levels):
        nets, mem_idx, mem_seg, arc_nets, arc_idx, arc_seg, rep_net = _forward_gather(flat, li)
        if len(arc_idx):
            from_pin = flat.arc_from[arc_idx]
            q_load = state.load[flat.net_root[rep_net]]
            starts = arc_seg[:-1]
            for c in range(N_COND):
                qs = state.slew[from_pin, c]
                d = _interp_many(flat, flat.arc_dlut[arc_idx, c], qs, q_load[:, c])
                state.arc_delay[arc_idx, c] = d
                cand = state.arrival[from_pin, c] + d
                if c in LATE_CONDS:
                    best = np.maximum.reduceat(cand, starts)
                else:
                    best = np.minimum.reduceat(cand, starts)
                pos = np.arange(len(cand), dtype=np.int64)
                tie = np.where(cand == np.repeat(best, flat.net_a[arc_nets]), pos, BIG)
                win = np.minimum.reduceat(tie, starts)
                state.arrival[flat.net_root[arc_nets], c] = best
                wa = arc_idx[win]
                ws = _interp_many(flat, flat.arc_slut[wa, c],
                                  state.slew[flat.arc_from[wa], c],
                                  state.load[flat.net_root[arc_nets], c])
                state.slew[flat.net_root[arc_nets], c] = ws
        if len(mem_idx):
            pins = flat.mem_pin[mem_idx]
            roots = flat.net_root[flat.mem_net[mem_idx]]
            state.arrival[pins] = state.arrival[roots] + state.net_delay[pins]
            rs = state.slew[roots]
            ii = state.impulse[pins]
            state.slew[pins] = np.sqrt(rs * rs + ii * ii)
    return state


def _backward_gather(flat: FlatDesign, li):
    key = ("bwd", li)
    got = flat._level_cache.get(key)
    if got is None:
        nets, mem_idx, mem_seg, _, _, _ = flat.level_view(li)
        cnt = flat.mem_out_ptr[mem_idx + 1] - flat.mem_out_ptr[mem_idx]
        mem_nz = mem_idx[cnt > 0]
        out_idx = np.concatenate(
            [flat.mem_out_arc[flat.mem_out_ptr[f]:flat.mem_out_ptr[f + 1]] for f in mem_nz]
        ).astype(np.int64) if len(mem_nz) else np.zeros(0, dtype=np.int64)
        out_seg = np.zeros(len(mem_nz) + 1, dtype=np.int64)
        np.cumsum(cnt[cnt > 0], out=out_seg[1:])
        nz_nets = nets[flat.net_m[nets] > 0]
        nz_mem_idx = np.concatenate(
            [np.arange(flat.net_ptr[n], flat.net_ptr[n + 1]) for n in nz_nets]
        ).astype(np.int64) if len(nz_nets) else np.zeros(0, dtype=np.int64)
        nz_seg = np.zeros(len(nz_nets) + 1, dtype=np.int64)
        np.cumsum(flat.net_m[nz_nets], out=nz_seg[1:])
        got = (mem_nz, out_idx, out_seg, nz_nets, nz_mem_idx, nz_seg)
        flat._level_cache[key] = got
    return got


def propagate_required(flat: FlatDesign, state: TimingState) -> TimingState:
    """Backward pass in reverse level order; fills required and slack.

    Late required at an arc input is the min over fanout arcs of
    (required at output - arc delay); early is the max.  Net roots fold
    (member required - net delay) over their members the same way.
    """
    for li in range(flat.n_levels - 1, -1, -1):
        mem_nz, out_idx, out_seg, nz_nets, nz_mem_idx, nz_seg = _backward_gather(flat, li)
        if len(out_idx):
            to_pin = flat.arc_to[out_idx]
            pins = flat.mem_pin[mem_nz]
            starts = out_seg[:-1]
            for c in range(N_COND):
                cand = state.required[to_pin, c] - state.arc_delay[out_idx, c]
                if c in LATE_CONDS:
                    fold = np.minimum.reduceat(cand, starts)
                    state.required[pins, c] = np.minimum(state.required[pins, c], fold)
                else:
                    fold = np.maximum.reduceat(cand, starts)
                    state.required[pins, c] = np.maximum(state.required[pins, c], fold)
        if len(nz_mem_idx):
            pins = flat.mem_pin[nz_mem_idx]
            roots = flat.net_root[nz_nets]
            starts = nz_seg[:-1]
            for c in range(N_COND):
                cand = state.required[pins, c] - state.net_delay[pins, c]
                if c in LATE_CONDS:
                    fold = np.minimum.reduceat(cand, starts)
                    state.required[roots, c] = np.minimum(state.required[roots, c], fold)
                else:
                    fold = np.maximum.reduceat(cand, starts)
                    state.required[roots, c] = np.maximum(state.required[roots, c], fold)
    state.slack[:, 0:2] = state.arrival[:, 0:2] - state.required[:, 0:2]
    state.slack[:, 2:4] = state.required[:, 2:4] - state.arrival[:, 2:4]
    return state


def run_reference(design, schedule=None, reduce_mode="sequential",
                  reduce_width=8) -> TimingState:
    """Full reference STA pass over a Design or FlatDesign."""
    flat = design if isinstance(design, FlatDesign) else flatten(design, schedule)
    state = TimingState.init(flat)
    compute_rc(flat, state, reduce_mode=reduce_mode, reduce_width=reduce_width)
    propagate_arrival(flat, state)
    propagate_required(flat, state)
    return state


# ---------------------------------------------------------------------------
# summaries

def tns(state: TimingState, flat: FlatDesign) -> float:
    """Sum of negative late slacks over declared endpoints, rise and fall
    contributing independently."""
    if not len(flat.ep_pin):
        return 0.0
    s = state.slack[flat.ep_pin][:, 2:4]
    return float(np.minimum(s, 0.0).sum())


def wns(state: TimingState, flat: FlatDesign) -> float:
    """Worst late endpoint slack (uncapped); +inf when no endpoints."""
    if not len(flat.ep_pin):
        return float("inf")
    return float(state.slack[flat.ep_pin][:, 2:4].min())


def check_schedule(design: Design, schedule: LevelSchedule) -> list:
    """Return violations of the level-schedule invariants (for tests)."""
    problems = []
    member_of = {}
    for ni, net in enumerate(design.nets):
        for pin in net.member_pins:
            member_of[pin] = ni
    from .netlist import _net_deps
    deps = _net_deps(design, member_of, {net.root: i for i, net in enumerate(design.nets)})
    seen = np.zeros(len(design.nets), dtype=np.int64)
    for li, nets in enumerate(schedule.levels):
        for n in nets:
            seen[n] += 1
            if schedule.level_of[n] != li:
                problems.append(f"net {n}: level_of says {schedule.level_of[n]}, found at {li}")
            for d in deps[n]:
                if schedule.level_of[d] >= li:
                    problems.append(f"net {n} at level {li} depends on net {d} "
                                    f"at level {schedule.level_of[d]}")
    if not np.all(seen == 1):
        bad = np.flatnonzero(seen != 1)
        problems.append(f"nets {bad.tolist()} appear {seen[bad].tolist()} times")
    return problems
