"""Levelization and the flat array form of a design.

FlatDesign is the array representation every execution path works on: CSR
nets with member-local parent links, deduplicated lookup tables in packed
storage, arcs grouped by driven net and by source member, per-net dependency
levels, and the primary-input / endpoint seed vectors.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .netlist import Design, N_COND, _net_deps

ROOT_ARC_DRIVEN = 0
ROOT_PI = 1
ROOT_FEEDTHROUGH = 2


class CycleError(ValueError):
    """Combinational cycle; carries a pin known to lie on the cycle."""

    def __init__(self, pin, name=None):
        self.pin = pin
        label = f"pin {pin}" if name is None else f"pin {pin} ({name})"
        super().__init__(f"combinational cycle through {label}")


@dataclass
class LevelSchedule:
    """Nets grouped into dependency levels: every net driving a net at level
    i sits at a level < i."""

    levels: list                 # list of int64 arrays of net ids
    level_of: np.ndarray         # net id -> level

    @property
    def n_levels(self):
        return len(self.levels)


def levelize(design: Design) -> LevelSchedule:
    """Group nets into levels: level 0 nets depend on primary inputs only,
    level i nets on nets of levels < i, longest-chain depth exactly.

    Raises CycleError naming a pin on the cycle if connectivity is cyclic.
    """
    member_of = {}
    for ni, net in enumerate(design.nets):
        for pin in net.member_pins:
            member_of[pin] = ni
    deps = _net_deps(design, member_of, {net.root: i for i, net in enumerate(design.nets)})
    n = len(deps)
    level = np.zeros(n, dtype=np.int64)
    indeg = np.array([len(d) for d in deps], dtype=np.int64)
    consumers = [[] for _ in range(n)]
    for i, d in enumerate(deps):
        for j in d:
            consumers[j].append(i)
    from collections import deque
    queue = deque(int(i) for i in range(n) if indeg[i] == 0)
    done = 0
    while queue:
        i = queue.popleft()
        done += 1
        for j in consumers[i]:
            if level[i] + 1 > level[j]:
                level[j] = level[i] + 1
            indeg[j] -= 1
            if indeg[j] == 0:
                queue.append(j)
    if done != n:
        stuck = [i for i in range(n) if indeg[i] > 0]
        pin = design.nets[stuck[0]].root
        raise CycleError(pin, design.pin_names[pin] if 0 <= pin < len(design.pin_names) else None)
    n_levels = int(level.max()) + 1 if n else 0
    levels = [np.flatnonzero(level == li).astype(np.int64) for li in range(n_levels)]
    return LevelSchedule(levels=levels, level_of=level)


@dataclass
class FlatDesign:
    design: Design
    schedule: LevelSchedule

    n_pins: int
    n_nets: int
    n_arcs: int
    clock_period: float

    # nets in CSR over members (root kept separate)
    net_ptr: np.ndarray        # (N+1,)
    net_root: np.ndarray       # (N,)
    root_cap: np.ndarray       # (N,4)
    root_kind: np.ndarray      # (N,) ROOT_*
    mem_pin: np.ndarray        # (M,)
    mem_parent_loc: np.ndarray  # (M,) 0 = root, k>0 = member k-1 of same net
    mem_res: np.ndarray        # (M,4)
    mem_cap: np.ndarray        # (M,4)
    mem_net: np.ndarray        # (M,)
    mem_local: np.ndarray      # (M,) position within net

    # packed lookup tables
    lut_s_ptr: np.ndarray      # (L+1,) into lut_s_flat
    lut_l_ptr: np.ndarray
    lut_t_ptr: np.ndarray      # (L+1,) into lut_t_flat (row-major tables)
    lut_s_flat: np.ndarray
    lut_l_flat: np.ndarray
    lut_t_flat: np.ndarray

    # arcs
    arc_from: np.ndarray       # (A,)
    arc_to: np.ndarray         # (A,)
    arc_dlut: np.ndarray       # (A,4) lut ids
    arc_slut: np.ndarray       # (A,4)
    net_in_ptr: np.ndarray     # (N+1,) arcs into each net's root, arc id order
    net_in_arc: np.ndarray
    mem_out_ptr: np.ndarray    # (M+1,) arcs out of each member pin
    mem_out_arc: np.ndarray

    # per-net work-item stats
    net_m: np.ndarray          # member count
    net_a: np.ndarray          # in-arc count of the root
    net_o: np.ndarray          # summed member out-arc count

    # pin maps and boundary seeds
    member_of_pin: np.ndarray  # pin -> member flat index or -1
    root_net_of_pin: np.ndarray  # pin -> net id or -1
    pi_pin: np.ndarray
    pi_arrival: np.ndarray     # (P,4)
    pi_slew: np.ndarray
    ep_pin: np.ndarray
    ep_required: np.ndarray    # (E,4)
    is_endpoint: np.ndarray    # (n_pins,) bool

    _level_cache: dict = field(default_factory=dict, repr=False)

    @property
    def n_levels(self):
        return self.schedule.n_levels

    def level_nets(self, li):
        return self.schedule.levels[li]

    def level_view(self, li):
        """Gathered per-level indices for vectorized passes: member flat
        indices, in-arc ids of arc-driven roots, and segment offsets."""
        hit = self._level_cache.get(li)
        if hit is not None:
            return hit
        nets = self.schedule.levels[li]
        mem_idx = np.concatenate(
            [np.arange(self.net_ptr[n], self.net_ptr[n + 1]) for n in nets]
        ).astype(np.int64) if len(nets) else np.zeros(0, dtype=np.int64)
        mem_seg = np.zeros(len(nets) + 1, dtype=np.int64)
        np.cumsum(self.net_m[nets], out=mem_seg[1:])
        arc_nets = nets[self.root_kind[nets] == ROOT_ARC_DRIVEN]
        arc_idx = np.concatenate(
            [self.net_in_arc[self.net_in_ptr[n]:self.net_in_ptr[n + 1]] for n in arc_nets]
        ).astype(np.int64) if len(arc_nets) else np.zeros(0, dtype=np.int64)
        arc_seg = np.zeros(len(arc_nets) + 1, dtype=np.int64)
        np.cumsum(self.net_a[arc_nets], out=arc_seg[1:])
        view = (nets, mem_idx, mem_seg, arc_nets, arc_idx, arc_seg)
        self._level_cache[li] = view
        return view


def flatten(design: Design, schedule: LevelSchedule | None = None) -> FlatDesign:
    if schedule is None:
        schedule = levelize(design)
    n_pins = design.n_pins
    n_nets = len(design.nets)

    net_ptr = np.zeros(n_nets + 1, dtype=np.int64)
    for i, net in enumerate(design.nets):
        net_ptr[i + 1] = net_ptr[i] + len(net.member_pins)
    n_mem = int(net_ptr[-1])

    net_root = np.zeros(n_nets, dtype=np.int64)
    root_cap = np.zeros((n_nets, N_COND))
    mem_pin = np.zeros(n_mem, dtype=np.int64)
    mem_parent_loc = np.zeros(n_mem, dtype=np.int64)
    mem_res = np.zeros((n_mem, N_COND))
    mem_cap = np.zeros((n_mem, N_COND))
    mem_net = np.zeros(n_mem, dtype=np.int64)
    mem_local = np.zeros(n_mem, dtype=np.int64)

    member_of_pin = np.full(n_pins, -1, dtype=np.int64)
    root_net_of_pin = np.full(n_pins, -1, dtype=np.int64)

    for i, net in enumerate(design.nets):
        s = net_ptr[i]
        net_root[i] = net.root
        root_cap[i] = net.root_cap
        root_net_of_pin[net.root] = i
        local_of = {net.root: 0}
        for k, (pin, parent) in enumerate(zip(net.member_pins, net.member_parents)):
            f = s + k
            mem_pin[f] = pin
            mem_parent_loc[f] = local_of[parent]
            local_of[pin] = k + 1
            mem_net[f] = i
            mem_local[f] = k
            member_of_pin[pin] = f
        mem_res[s:s + len(net.member_pins)] = net.member_res
        mem_cap[s:s + len(net.member_pins)] = net.member_caps

    # dedupe lookup tables (shared objects first, then identical content)
    lut_ids = {}
    luts = []

    def lut_id(lut):
        key = id(lut)
        got = lut_ids.get(key)
        if got is None:
            got = lut_ids[key] = len(luts)
            luts.append(lut)
        return got

    arcs = [(arc, ci) for ci, cell in enumerate(design.cells) for arc in cell.arcs]
    n_arcs = len(arcs)
    arc_from = np.zeros(n_arcs, dtype=np.int64)
    arc_to = np.zeros(n_arcs, dtype=np.int64)
    arc_dlut = np.zeros((n_arcs, N_COND), dtype=np.int64)
    arc_slut = np.zeros((n_arcs, N_COND), dtype=np.int64)
    for a, (arc, _) in enumerate(arcs):
        arc_from[a] = arc.from_pin
        arc_to[a] = arc.to_pin
        for c in range(N_COND):
            arc_dlut[a, c] = lut_id(arc.delay_luts[c])
            arc_slut[a, c] = lut_id(arc.slew_luts[c])

    lut_s_ptr = np.zeros(len(luts) + 1, dtype=np.int64)
    lut_l_ptr = np.zeros(len(luts) + 1, dtype=np.int64)
    lut_t_ptr = np.zeros(len(luts) + 1, dtype=np.int64)
    for i, lut in enumerate(luts):
        lut_s_ptr[i + 1] = lut_s_ptr[i] + lut.slew_axis.size
        lut_l_ptr[i + 1] = lut_l_ptr[i] + lut.load_axis.size
        lut_t_ptr[i + 1] = lut_t_ptr[i] + lut.table.size
    lut_s_flat = np.concatenate([l.slew_axis for l in luts]) if luts else np.zeros(0)
    lut_l_flat = np.concatenate([l.load_axis for l in luts]) if luts else np.zeros(0)
    lut_t_flat = np.concatenate([l.table.ravel() for l in luts]) if luts else np.zeros(0)

    # arcs grouped by the net their target roots (ascending arc id per net)
    net_in_lists = [[] for _ in range(n_nets)]
    for a in range(n_arcs):
        ni = root_net_of_pin[arc_to[a]]
        if ni >= 0:
            net_in_lists[ni].append(a)
    net_in_ptr = np.zeros(n_nets + 1, dtype=np.int64)
    for i in range(n_nets):
        net_in_ptr[i + 1] = net_in_ptr[i] + len(net_in_lists[i])
    net_in_arc = np.fromiter(
        (a for lst in net_in_lists for a in lst), dtype=np.int64, count=int(net_in_ptr[-1]))

    # arcs grouped by source member
    mem_out_lists = [[] for _ in range(n_mem)]
    for a in range(n_arcs):
        f = member_of_pin[arc_from[a]]
        if f >= 0:
            mem_out_lists[f].append(a)
    mem_out_ptr = np.zeros(n_mem + 1, dtype=np.int64)
    for i in range(n_mem):
        mem_out_ptr[i + 1] = mem_out_ptr[i] + len(mem_out_lists[i])
    mem_out_arc = np.fromiter(
        (a for lst in mem_out_lists for a in lst), dtype=np.int64, count=int(mem_out_ptr[-1]))

    pi_pin = np.array([pi.pin for pi in design.primary_inputs], dtype=np.int64)
    pi_arrival = (np.stack([pi.arrival for pi in design.primary_inputs])
                  if design.primary_inputs else np.zeros((0, N_COND)))
    pi_slew = (np.stack([pi.slew for pi in design.primary_inputs])
               if design.primary_inputs else np.zeros((0, N_COND)))
    ep_pin = np.array([ep.pin for ep in design.endpoints], dtype=np.int64)
    ep_required = (np.stack([ep.required for ep in design.endpoints])
                   if design.endpoints else np.zeros((0, N_COND)))
    is_endpoint = np.zeros(n_pins, dtype=bool)
    is_endpoint[ep_pin] = True

    pi_set = set(pi_pin.tolist())
    root_kind = np.zeros(n_nets, dtype=np.int64)
    for i in range(n_nets):
        r = net_root[i]
        if net_in_ptr[i + 1] > net_in_ptr[i]:
            root_kind[i] = ROOT_ARC_DRIVEN
        elif member_of_pin[r] >= 0:
            root_kind[i] = ROOT_FEEDTHROUGH
        elif r in pi_set:
            root_kind[i] = ROOT_PI
        else:
            root_kind[i] = ROOT_PI  # undriven roots only exist pre-validate

    net_m = np.diff(net_ptr)
    net_a = np.diff(net_in_ptr)
    net_o = np.array(
        [int(mem_out_ptr[net_ptr[i + 1]] - mem_out_ptr[net_ptr[i]]) for i in range(n_nets)],
        dtype=np.int64)

    return FlatDesign(
        design=design, schedule=schedule,
        n_pins=n_pins, n_nets=n_nets, n_arcs=n_arcs,
        clock_period=design.clock_period,
        net_ptr=net_ptr, net_root=net_root, root_cap=root_cap, root_kind=root_kind,
        mem_pin=mem_pin, mem_parent_loc=mem_parent_loc,
        mem_res=mem_res, mem_cap=mem_cap, mem_net=mem_net, mem_local=mem_local,
        lut_s_ptr=lut_s_ptr, lut_l_ptr=lut_l_ptr, lut_t_ptr=lut_t_ptr,
        lut_s_flat=lut_s_flat, lut_l_flat=lut_l_flat, lut_t_flat=lut_t_flat,
        arc_from=arc_from, arc_to=arc_to, arc_dlut=arc_dlut, arc_slut=arc_slut,
        net_in_ptr=net_in_ptr, net_in_arc=net_in_arc,
        mem_out_ptr=mem_out_ptr, mem_out_arc=mem_out_arc,
        net_m=net_m, net_a=net_a, net_o=net_o,
        member_of_pin=member_of_pin, root_net_of_pin=root_net_of_pin,
        pi_pin=pi_pin, pi_arrival=pi_arrival, pi_slew=pi_slew,
        ep_pin=ep_pin, ep_required=ep_required, is_endpoint=is_endpoint,
    )
