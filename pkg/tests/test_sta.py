"""Reference STA: RC stages, LUT interpolation, propagation, summaries.

Value examples are hand-computed; the structural invariants are checked
against brute-force oracles implemented here (path enumeration, longest
chain relaxation) that share no code with the engine.
"""

import copy
import math

import numpy as np
import pytest

from stasim import (GeneratorConfig, generate_design, flatten, levelize,
                    run_reference, interpolate_lut, tns, wns, uniform)
from stasim.netlist import Endpoint, Lut2D, Net
from stasim.sta import (check_schedule, compute_net_delays,
                        compute_net_impulses, compute_net_loads)
from conftest import (chain_design, diamond_design, flat_nets_design,
                      two_input_design, const_arc, zero_net, checked)


def star_net(root_cap, sink_caps, res=0.0):
    m = len(sink_caps)
    return Net(root=0, member_pins=list(range(1, m + 1)),
               member_parents=[0] * m,
               member_res=np.full((m, 4), float(res)),
               member_caps=np.stack([np.full(4, c) for c in sink_caps]),
               root_cap=np.full(4, float(root_cap)))


def chain_net(caps, res):
    # r -> a -> b -> ... along member order
    m = len(caps)
    return Net(root=0, member_pins=list(range(1, m + 1)),
               member_parents=list(range(m)),
               member_res=np.stack([np.full(4, r) for r in res]),
               member_caps=np.stack([np.full(4, c) for c in caps]),
               root_cap=np.zeros(4))


# ---------------------------------------------------------------------------
# RC stage value examples

def test_loads_star():
    loads = compute_net_loads(star_net(0.5, [1.0, 2.0]))
    assert loads[1, 0] == 1.0 and loads[2, 0] == 2.0
    assert loads[0, 0] == 3.5


def test_loads_chain_telescoping():
    # caps r=0, a=1, b=2; member loads fold into the root total
    loads = compute_net_loads(chain_net([1.0, 2.0], [1.0, 1.0]))
    assert loads[2, 0] == 2.0
    assert loads[1, 0] == 3.0
    assert loads[0, 0] == 5.0


def test_loads_all_zero():
    loads = compute_net_loads(star_net(0.0, [0.0, 0.0]))
    assert np.all(loads == 0.0)


def test_delays_star_depth_one():
    net = star_net(0.0, [1.0], res=2.0)
    loads = compute_net_loads(net)
    delays = compute_net_delays(net, loads)
    assert delays[1, 0] == 2.0
    assert delays[0, 0] == 0.0


def test_delays_chain_path_sum():
    net = chain_net([1.0, 2.0], [1.0, 1.0])
    loads = compute_net_loads(net)
    delays = compute_net_delays(net, loads)
    assert delays[1, 0] == 3.0  # Res*Load(a) = 1*3
    assert delays[2, 0] == 5.0  # 3 + 1*2


def test_delays_zero_resistance():
    net = chain_net([1.0, 2.0], [0.0, 0.0])
    delays = compute_net_delays(net, compute_net_loads(net))
    assert np.all(delays == 0.0)


def test_impulse_formula_and_clamp():
    net = star_net(0.0, [4.0], res=1.0)
    loads = compute_net_loads(net)
    # force Delay=2: radicand 2*1*4*2 - 4 = 12
    delays = np.zeros((2, 4))
    delays[1] = 2.0
    imp = compute_net_impulses(net, loads, delays)
    assert imp[1, 0] == pytest.approx(math.sqrt(12.0), rel=1e-15)
    # Delay=0 -> impulse 0
    assert compute_net_impulses(net, loads, np.zeros((2, 4)))[1, 0] == 0.0
    # Cap=0, Delay=2 -> radicand -4, clamped to 0
    net0 = star_net(0.0, [0.0], res=1.0)
    imp0 = compute_net_impulses(net0, compute_net_loads(net0), delays)
    assert imp0[1, 0] == 0.0


def test_load_conservation_on_star_nets():
    # depth-1 nets: root load telescopes to the sum of all caps in the net
    d = generate_design(GeneratorConfig(num_cells=150, fanout=uniform(1, 7),
                                        seed=2, net_topology="star"))
    for net in d.nets:
        loads = compute_net_loads(net)
        total = net.root_cap + net.member_caps.sum(axis=0)
        np.testing.assert_allclose(loads[0], total, rtol=1e-12)


def test_delay_monotonic_along_tree():
    d = generate_design(GeneratorConfig(num_cells=100, fanout=uniform(2, 6),
                                        seed=4, net_topology="random_tree"))
    for net in d.nets:
        loads = compute_net_loads(net)
        delays = compute_net_delays(net, loads)
        for k, parent in enumerate(net.member_parents):
            local = ([net.root] + list(net.member_pins)).index(parent)
            assert np.all(delays[k + 1] >= delays[local])


# ---------------------------------------------------------------------------
# levelization

def test_levelize_three_serial_nets():
    assert levelize(chain_design(3)).n_levels == 3


def test_levelize_independent_single_level():
    d = flat_nets_design([1] * 7)
    sched = levelize(d)
    assert sched.n_levels == 1
    assert len(sched.levels[0]) == 7


def test_levelize_diamond():
    sched = levelize(diamond_design())
    got = [sorted(lv.tolist()) for lv in sched.levels]
    assert got == [[0], [1, 2], [3]]


def test_levelize_matches_longest_chain_oracle():
    # independent relaxation over net-to-net dependencies
    d = generate_design(GeneratorConfig(num_cells=200, fanout=uniform(1, 5),
                                        seed=8, net_topology="random_tree"))
    member_of = {p: ni for ni, net in enumerate(d.nets)
                 for p in net.member_pins}
    feeds = {}
    for cell in d.cells:
        for arc in cell.arcs:
            feeds.setdefault(arc.to_pin, set()).add(arc.from_pin)
    deps = []
    for net in d.nets:
        ds = {member_of[src] for src in feeds.get(net.root, ())
              if src in member_of}
        if net.root in member_of:
            ds.add(member_of[net.root])
        deps.append(ds)
    level = [0] * len(d.nets)
    changed = True
    while changed:
        changed = False
        for ni, ds in enumerate(deps):
            want = max((level[x] + 1 for x in ds), default=0)
            if want != level[ni]:
                level[ni] = want
                changed = True
    sched = levelize(d)
    assert [sched.level_of[ni] for ni in range(len(d.nets))] == level
    assert check_schedule(d, sched) == []


def test_check_schedule_catches_violation():
    d = chain_design(3)
    sched = levelize(d)
    bad = copy.deepcopy(sched)
    bad.levels[0], bad.levels[1] = bad.levels[1], bad.levels[0]
    bad.level_of[bad.levels[0][0]] = 0
    bad.level_of[bad.levels[1][0]] = 1
    assert check_schedule(d, bad) != []


# ---------------------------------------------------------------------------
# LUT interpolation

def test_lut_exact_on_grid_and_midpoint():
    lut = Lut2D(np.array([0.0, 1.0]), np.array([0.0, 1.0]),
                np.array([[0.0, 1.0], [2.0, 3.0]]))
    for i, s in enumerate([0.0, 1.0]):
        for j, l in enumerate([0.0, 1.0]):
            assert interpolate_lut(lut, s, l) == lut.table[i, j]
    assert interpolate_lut(lut, 0.5, 0.5) == 1.5


def test_lut_clamps_out_of_range():
    lut = Lut2D(np.array([0.0, 1.0]), np.array([0.0, 1.0]),
                np.array([[0.0, 1.0], [2.0, 3.0]]))
    assert interpolate_lut(lut, 5.0, 0.0) == 2.0   # clamped to max slew row
    assert interpolate_lut(lut, -5.0, 1.0) == 1.0  # clamped to min slew row
    assert interpolate_lut(lut, 1.0, 99.0) == 3.0


def test_lut_linear_along_axes():
    rng = np.random.default_rng(0)
    lut = Lut2D(np.array([0.0, 0.4, 1.0]), np.array([0.0, 0.7, 2.0]),
                rng.normal(size=(3, 3)))
    for j, l in enumerate([0.0, 0.7, 2.0]):
        for t in (0.25, 0.5, 0.9):
            s = 0.4 + t * 0.6
            want = (1 - t) * lut.table[1, j] + t * lut.table[2, j]
            assert interpolate_lut(lut, s, l) == pytest.approx(want, rel=1e-12)
    for i, s in enumerate([0.0, 0.4, 1.0]):
        t = 0.3
        l = 0.7 + t * 1.3
        want = (1 - t) * lut.table[i, 1] + t * lut.table[i, 2]
        assert interpolate_lut(lut, s, l) == pytest.approx(want, rel=1e-12)


# ---------------------------------------------------------------------------
# forward / backward propagation

def test_chain_arrival_accumulates():
    n = 6
    d = chain_design(n + 1, arc_delay=2.5)  # n buffers
    flat = flatten(d)
    state = run_reference(flat)
    po = flat.ep_pin[0]
    assert state.arrival[po, 2] == pytest.approx(n * 2.5, rel=1e-15)
    assert state.arrival[po, 0] == pytest.approx(n * 2.5, rel=1e-15)


def test_two_input_late_max_early_min():
    d = two_input_design(arrivals=(3.0, 5.0), delays=(2.0, 1.0))
    flat = flatten(d)
    state = run_reference(flat)
    out = 4  # g.out
    assert state.arrival[out, 2] == 6.0  # late: max(3+2, 5+1)
    assert state.arrival[out, 0] == 5.0  # early: min(5, 6)


def test_tie_break_first_arc_wins():
    # equal arrival sums; the slew must come from the first declared arc
    names = ["pi0", "pi1", "g.in0", "g.in1", "g.out", "po"]
    nets = [zero_net(0, [2]), zero_net(1, [3]), zero_net(4, [5])]
    from stasim.netlist import Cell, Design, PrimaryInput
    cells = [Cell([const_arc(2, 4, 1.0, slew=1e-12),
                   const_arc(3, 4, 1.0, slew=5e-12)])]
    d = checked(Design(pin_names=names, cells=cells, nets=nets,
                       primary_inputs=[PrimaryInput(0, 0.0, 1e-12),
                                       PrimaryInput(1, 0.0, 1e-12)],
                       endpoints=[Endpoint(5, 10.0)], clock_period=10.0))
    state = run_reference(flatten(d))
    assert np.all(state.slew[4] == 1e-12)


def test_required_and_slack_chain():
    # single buffer, arc delay 4, endpoint RAT 10
    d = chain_design(2, arc_delay=4.0, required=10.0, clock_period=10.0)
    flat = flatten(d)
    state = run_reference(flat)
    b_in = d.pin_names.index("b0.in")
    po = d.pin_names.index("po")
    assert state.required[b_in, 2] == 6.0   # 10 - 4
    assert state.arrival[po, 2] == 4.0
    assert state.slack[po, 2] == 6.0        # RAT - AT
    # endpoint RAT 10, AT 7 -> slack 3
    d2 = chain_design(2, arc_delay=7.0, required=10.0, clock_period=10.0)
    st2 = run_reference(flatten(d2))
    assert st2.slack[d2.pin_names.index("po"), 2] == 3.0


def test_arrival_monotone_under_arc_delay_bump():
    d = generate_design(GeneratorConfig(num_cells=60, fanout=uniform(1, 4),
                                        seed=6))
    flat = flatten(d)
    base = run_reference(flat)
    bumped = copy.deepcopy(d)
    cell = bumped.cells[len(bumped.cells) // 2]
    arc = cell.arcs[0]
    arc.delay_luts = [Lut2D(l.slew_axis.copy(), l.load_axis.copy(),
                            l.table + 1e-11) for l in arc.delay_luts]
    after = run_reference(flatten(bumped))
    assert np.all(after.arrival[:, 2:4] >= base.arrival[:, 2:4] - 1e-30)

    # pins outside the arc's downstream cone keep their arrivals exactly
    down = {arc.to_pin}
    grown = True
    root_of = {net.root: ni for ni, net in enumerate(d.nets)}
    while grown:
        grown = False
        for p in list(down):
            if p in root_of:
                for mp in d.nets[root_of[p]].member_pins:
                    if mp not in down:
                        down.add(mp)
                        grown = True
        for c in d.cells:
            for a in c.arcs:
                if a.from_pin in down and a.to_pin not in down:
                    down.add(a.to_pin)
                    grown = True
    outside = [p for p in range(d.n_pins) if p not in down]
    assert np.array_equal(after.arrival[outside], base.arrival[outside])


def _late_path_oracle(d, flat, state, cond):
    """Brute-force enumeration of every PI-to-pin path using the engine's
    computed edge weights (arc delays, cumulative net delays)."""
    succ = {}
    root_of = {net.root: ni for ni, net in enumerate(d.nets)}
    for ci, cell in enumerate(d.cells):
        for ai, arc in enumerate(cell.arcs):
            succ.setdefault(arc.from_pin, [])
    arc_ids = {}
    for a in range(len(flat.arc_from)):
        succ.setdefault(int(flat.arc_from[a]), []).append(
            (int(flat.arc_to[a]), float(state.arc_delay[a, cond])))
    for p, ni in root_of.items():
        for mp in d.nets[ni].member_pins:
            succ.setdefault(p, []).append(
                (mp, float(state.net_delay[mp, cond])))
    best = {}

    def walk(pin, t):
        if t > best.get(pin, -math.inf):
            best[pin] = t
        for nxt, w in succ.get(pin, ()):
            walk(nxt, t + w)

    for k, pi in enumerate(flat.pi_pin):
        walk(int(pi), float(flat.pi_arrival[k, cond]))
    return best


def test_min_slack_equals_clock_minus_longest_path():
    d = generate_design(GeneratorConfig(num_cells=4, fanout=uniform(1, 2),
                                        depth_target=3, seed=12))
    assert d.n_pins <= 20
    T = d.clock_period
    d.endpoints = [Endpoint(ep.pin, T) for ep in d.endpoints]
    flat = flatten(d)
    state = run_reference(flat)
    worst = math.inf
    for cond in (2, 3):
        best = _late_path_oracle(d, flat, state, cond)
        for ep in flat.ep_pin:
            assert best[int(ep)] == pytest.approx(
                state.arrival[int(ep), cond], rel=1e-12)
            worst = min(worst, T - best[int(ep)])
    assert wns(state, flat) == pytest.approx(worst, rel=1e-12)


# ---------------------------------------------------------------------------
# summaries

def test_tns_sums_negative_late_slacks():
    d = flat_nets_design([1, 1, 1])
    flat = flatten(d)
    state = run_reference(flat)
    state.slack[flat.ep_pin, 2] = [3.0, -2.0, -5.0]
    state.slack[flat.ep_pin, 3] = [3.0, 0.0, 1.0]
    assert tns(state, flat) == -7.0
    assert wns(state, flat) == -5.0


def test_tns_zero_when_all_meet():
    d = chain_design(3, arc_delay=0.1, required=10.0, clock_period=10.0)
    flat = flatten(d)
    state = run_reference(flat)
    assert tns(state, flat) == 0.0
    assert wns(state, flat) > 0


def test_tns_matches_brute_force_on_random_design():
    d = generate_design(GeneratorConfig(num_cells=120, seed=3))
    flat = flatten(d)
    state = run_reference(flat)
    brute = sum(min(0.0, float(state.slack[p, c]))
                for p in flat.ep_pin for c in (2, 3))
    assert tns(state, flat) == pytest.approx(brute, rel=1e-12, abs=1e-30)


def test_wns_infinite_without_endpoints():
    d = flat_nets_design([2])
    flat = flatten(d)
    state = run_reference(flat)
    flat2 = copy.copy(flat)
    flat2.ep_pin = np.zeros(0, dtype=np.int64)
    assert wns(state, flat2) == math.inf
    assert tns(state, flat2) == 0.0


def test_reference_tree_mode_close_to_sequential():
    d = generate_design(GeneratorConfig(num_cells=300, fanout=uniform(1, 9),
                                        seed=5))
    a = run_reference(d)
    b = run_reference(d, reduce_mode="tree", reduce_width=8)
    assert a.values_equal(b, rtol=1e-6)
