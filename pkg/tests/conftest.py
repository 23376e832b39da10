"""Shared builders for hand-made designs with exactly known timing."""

import numpy as np
import pytest

from stasim.netlist import (Cell, Design, Endpoint, Lut2D, Net, PrimaryInput,
                            TimingArc, validate)


def const_lut(v):
    return Lut2D(np.array([0.0]), np.array([0.0]), np.array([[float(v)]]))


def const_arc(from_pin, to_pin, delay, slew=1e-12):
    """Arc whose delay/slew tables are constants (same for all conditions)."""
    return TimingArc(from_pin, to_pin,
                     [const_lut(delay) for _ in range(4)],
                     [const_lut(slew) for _ in range(4)])


def zero_net(root, members, parents=None):
    """RC-free net: all res/caps zero, so net delay and impulse are zero."""
    m = len(members)
    return Net(root=root, member_pins=list(members),
               member_parents=list(parents) if parents is not None else [root] * m,
               member_res=np.zeros((m, 4)), member_caps=np.zeros((m, 4)),
               root_cap=np.zeros(4))


def checked(design):
    problems = validate(design)
    assert problems == [], [str(p) for p in problems]
    return design


def chain_design(n_nets, arc_delay=1.0, required=None, clock_period=1.0,
                 pi_arrival=0.0):
    """n_nets serially dependent zero-RC nets joined by buffer cells.

    pi -> net0 -> buf0 -> net1 -> buf1 -> ... -> net(n-1) -> po
    Endpoint po; n_nets-1 buffers each with constant arc delay.
    """
    assert n_nets >= 1
    names = ["pi"]
    nets = []
    cells = []
    root = 0
    for i in range(n_nets - 1):
        names += [f"b{i}.in", f"b{i}.out"]
        sink = len(names) - 2
        out = len(names) - 1
        nets.append(zero_net(root, [sink]))
        cells.append(Cell([const_arc(sink, out, arc_delay)]))
        root = out
    names.append("po")
    po = len(names) - 1
    nets.append(zero_net(root, [po]))
    req = required if required is not None else clock_period
    return checked(Design(
        pin_names=names, cells=cells, nets=nets,
        primary_inputs=[PrimaryInput(0, pi_arrival, 1e-12)],
        endpoints=[Endpoint(po, req)], clock_period=clock_period))


def diamond_design(delay_top=1.0, delay_bot=1.0, merge_delays=(1.0, 1.0),
                   clock_period=10.0):
    """Net-level diamond: net0 feeds nets {1, 2}; both feed net3.

    pi -(net0)-> {b.in, c.in}; b -> net1 -> d.in1; c -> net2 -> d.in2;
    d (two arcs) -> net3 -> po (endpoint).
    """
    names = ["pi", "b.in", "c.in", "b.out", "c.out", "d.in1", "d.in2",
             "d.out", "po"]
    nets = [
        zero_net(0, [1, 2]),
        zero_net(3, [5]),
        zero_net(4, [6]),
        zero_net(7, [8]),
    ]
    cells = [
        Cell([const_arc(1, 3, delay_top)]),
        Cell([const_arc(2, 4, delay_bot)]),
        Cell([const_arc(5, 7, merge_delays[0]), const_arc(6, 7, merge_delays[1])]),
    ]
    return checked(Design(
        pin_names=names, cells=cells, nets=nets,
        primary_inputs=[PrimaryInput(0, 0.0, 1e-12)],
        endpoints=[Endpoint(8, clock_period)], clock_period=clock_period))


def two_input_design(arrivals=(3.0, 5.0), delays=(2.0, 1.0), required=10.0,
                     clock_period=10.0):
    """Two primary inputs into one 2-arc cell, output net to an endpoint."""
    names = ["pi0", "pi1", "g.in0", "g.in1", "g.out", "po"]
    nets = [
        zero_net(0, [2]),
        zero_net(1, [3]),
        zero_net(4, [5]),
    ]
    cells = [Cell([const_arc(2, 4, delays[0]), const_arc(3, 4, delays[1])])]
    return checked(Design(
        pin_names=names, cells=cells, nets=nets,
        primary_inputs=[PrimaryInput(0, arrivals[0], 1e-12),
                        PrimaryInput(1, arrivals[1], 1e-12)],
        endpoints=[Endpoint(5, required)], clock_period=clock_period))


def flat_nets_design(member_counts, clock_period=1.0):
    """One level of independent PI-rooted zero-RC nets with the given member
    counts; every sink is an endpoint.  No cells, so all nets sit in level 0."""
    names = []
    nets = []
    pis = []
    eps = []
    for ni, m in enumerate(member_counts):
        root = len(names)
        names.append(f"n{ni}.r")
        sinks = []
        for k in range(m):
            sinks.append(len(names))
            names.append(f"n{ni}.s{k}")
        nets.append(zero_net(root, sinks))
        pis.append(PrimaryInput(root, 0.0, 1e-12))
        eps.extend(Endpoint(s, clock_period) for s in sinks)
    return checked(Design(pin_names=names, cells=[], nets=nets,
                          primary_inputs=pis, endpoints=eps,
                          clock_period=clock_period))


@pytest.fixture
def chain4():
    return chain_design(4)
