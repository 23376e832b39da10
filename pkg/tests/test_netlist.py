"""Data model, validation, CSR layout, and JSON interchange."""

import numpy as np
import pytest

from stasim.netlist import (Cell, Design, Endpoint, Lut2D, Net, PrimaryInput,
                            build_csr, corner, design_equal, parse_design,
                            serialize_design, validate)
from conftest import chain_design, checked, const_arc, zero_net


def test_corner_scalar_broadcast():
    assert np.array_equal(corner(2.5), np.full(4, 2.5))
    assert np.array_equal(corner([1, 2, 3, 4]), np.array([1.0, 2, 3, 4]))
    with pytest.raises(ValueError):
        corner([1, 2, 3])


def test_minimal_design_one_driver_one_sink():
    d = checked(Design(
        pin_names=["drv", "snk"], cells=[],
        nets=[zero_net(0, [1])],
        primary_inputs=[PrimaryInput(0, 0.0, 1e-12)],
        endpoints=[Endpoint(1, 1.0)], clock_period=1.0))
    assert d.n_pins == 2
    assert len(d.nets) == 1


def test_validate_net_not_topological():
    # member 0's parent is member 1, declared later
    net = Net(root=0, member_pins=[1, 2], member_parents=[2, 0],
              member_res=np.zeros((2, 4)), member_caps=np.zeros((2, 4)),
              root_cap=np.zeros(4))
    d = Design(pin_names=["r", "a", "b"], cells=[], nets=[net],
               primary_inputs=[PrimaryInput(0, 0.0, 1e-12)],
               endpoints=[Endpoint(1, 1.0), Endpoint(2, 1.0)],
               clock_period=1.0)
    v = validate(d)
    assert [x.kind for x in v] == ["non-tree-net"]
    assert "not in topological order" in v[0].message


def test_validate_parent_two_cycle_single_violation():
    # a's parent is b and b's parent is a: exactly one non-tree violation
    net = Net(root=0, member_pins=[1, 2], member_parents=[2, 1],
              member_res=np.zeros((2, 4)), member_caps=np.zeros((2, 4)),
              root_cap=np.zeros(4))
    d = Design(pin_names=["r", "a", "b"], cells=[], nets=[net],
               primary_inputs=[PrimaryInput(0, 0.0, 1e-12)],
               endpoints=[Endpoint(1, 1.0), Endpoint(2, 1.0)],
               clock_period=1.0)
    kinds = [x.kind for x in validate(d)]
    assert kinds.count("non-tree-net") == 1


def test_validate_combinational_loop():
    # two cells arc-connected through two nets in a cycle
    names = ["a.out", "b.in", "b.out", "a.in"]
    nets = [zero_net(0, [1]), zero_net(2, [3])]
    cells = [Cell([const_arc(3, 0, 1.0)]), Cell([const_arc(1, 2, 1.0)])]
    d = Design(pin_names=names, cells=cells, nets=nets,
               primary_inputs=[], endpoints=[], clock_period=1.0)
    v = validate(d)
    assert any(x.kind == "cyclic" and "cycle" in x.message for x in v)


def test_validate_clean_on_hand_designs(chain4):
    assert validate(chain4) == []


def test_build_csr_offsets():
    # member counts [2,1,3]: root included per group
    counts = [2, 1, 3]
    names = []
    nets = []
    for m in counts:
        root = len(names)
        names.append(f"r{root}")
        sinks = list(range(len(names), len(names) + m))
        names.extend(f"s{p}" for p in sinks)
        nets.append(zero_net(root, sinks))
    d = Design(pin_names=names, cells=[], nets=nets, primary_inputs=[],
               endpoints=[], clock_period=1.0)
    csr = build_csr(d)
    assert csr.net_index.tolist() == [0, 3, 5, 9]
    assert csr.pin_list.size == 9


def test_build_csr_empty():
    d = Design(pin_names=[], cells=[], nets=[], primary_inputs=[],
               endpoints=[], clock_period=1.0)
    assert build_csr(d).net_index.tolist() == [0]


def test_lut_checks():
    good = Lut2D(np.array([0.0, 1.0]), np.array([0.0, 1.0]),
                 np.array([[0.0, 1.0], [2.0, 3.0]]))
    assert good.check() == []
    bad_axis = Lut2D(np.array([1.0, 0.0]), np.array([0.0]),
                     np.array([[0.0], [1.0]]))
    assert any("strictly increasing" in p for p in bad_axis.check())
    bad_shape = Lut2D(np.array([0.0]), np.array([0.0]), np.array([[0.0, 1.0]]))
    assert any("shape" in p for p in bad_shape.check())


def test_serialize_round_trip_byte_identical(chain4):
    text = serialize_design(chain4)
    again = parse_design(text)
    assert design_equal(chain4, again)
    assert serialize_design(again) == text


def test_serialize_deterministic(chain4):
    assert serialize_design(chain4) == serialize_design(chain_design(4))


def test_parse_rejects_garbage():
    with pytest.raises(ValueError):
        parse_design("not json at all {")
    with pytest.raises(ValueError):
        parse_design("{}")
