"""Netlist data model, validation, CSR layout, and the JSON interchange format.

A design is a pin-level timing graph: cells carry lookup-table timing arcs from
input pins to output pins, and every driver pin (cell output or primary input)
fans out through one rooted RC net to its sink pins.  All timing quantities are
tracked per condition; the canonical condition order is

    0 early-rise, 1 early-fall, 2 late-rise, 3 late-fall

and a "corner vector" is a length-4 float array in that order.

Document format (JSON, one design per document)::

    {
      "clock_period": <seconds>,
      "pins":  [{"name": str, "is_endpoint": bool,
                 "required": [4 floats]?,            # endpoints only
                 "arrival": [4]?, "slew": [4]?},...],# primary inputs only
      "luts":  [{"slew_axis": [...], "load_axis": [...],
                 "table": [[...], ...]}, ...],       # optional shared table pool
      "cells": [{"arcs": [{"from": pin, "to": pin,
                 "delay_lut": [4 refs], "slew_lut": [4 refs]}]}, ...],
      "nets":  [{"root": pin, "root_cap": [4],
                 "members": [{"pin": pin, "parent": pin,
                              "res": [4], "cap": [4]}, ...]}, ...]
    }

Pins are referenced by index into "pins".  A lut ref is either an integer
index into the shared "luts" pool or an inline lut object.  Net members are
listed in topological order: each member's parent is the net root or an
earlier member.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

N_COND = 4
EARLY_RISE, EARLY_FALL, LATE_RISE, LATE_FALL = range(N_COND)
COND_NAMES = ("early_rise", "early_fall", "late_rise", "late_fall")
EARLY_CONDS = (EARLY_RISE, EARLY_FALL)
LATE_CONDS = (LATE_RISE, LATE_FALL)


class DesignFormatError(ValueError):
    """Raised when a design document is not syntactically well formed."""


class DesignSemanticsError(ValueError):
    """Raised when a well-formed document violates a model invariant."""

    def __init__(self, violations):
        self.violations = list(violations)
        lines = "; ".join(str(v) for v in self.violations[:8])
        more = "" if len(self.violations) <= 8 else f" (+{len(self.violations) - 8} more)"
        super().__init__(f"invalid design: {lines}{more}")


@dataclass
class Violation:
    kind: str
    message: str

    def __str__(self):
        return f"[{self.kind}] {self.message}"


def corner(values) -> np.ndarray:
    """Coerce a scalar or a length-4 sequence to a corner vector."""
    a = np.asarray(values, dtype=np.float64)
    if a.ndim == 0:
        a = np.full(N_COND, float(a))
    if a.shape != (N_COND,):
        raise ValueError(f"corner vector must have {N_COND} entries, got shape {a.shape}")
    return a


@dataclass
class Lut2D:
    """2-D lookup table indexed by (input slew, output load), both axes
    strictly increasing.  A 1x1 table is a constant."""

    slew_axis: np.ndarray
    load_axis: np.ndarray
    table: np.ndarray

    def __post_init__(self):
        self.slew_axis = np.asarray(self.slew_axis, dtype=np.float64)
        self.load_axis = np.asarray(self.load_axis, dtype=np.float64)
        self.table = np.asarray(self.table, dtype=np.float64)

    def check(self):
        problems = []
        if self.slew_axis.ndim != 1 or self.load_axis.ndim != 1:
            problems.append("lut axes must be 1-D")
            return problems
        if self.slew_axis.size < 1 or self.load_axis.size < 1:
            problems.append("lut axes must be non-empty")
        if self.table.shape != (self.slew_axis.size, self.load_axis.size):
            problems.append(
                f"lut table shape {self.table.shape} does not match axes "
                f"({self.slew_axis.size}, {self.load_axis.size})"
            )
        for name, ax in (("slew", self.slew_axis), ("load", self.load_axis)):
            if ax.size > 1 and not np.all(np.diff(ax) > 0):
                problems.append(f"lut {name} axis is not strictly increasing")
        for name, a in (("slew_axis", self.slew_axis), ("load_axis", self.load_axis), ("table", self.table)):
            if a.size and not np.all(np.isfinite(a)):
                problems.append(f"lut {name} has non-finite entries")
        return problems


@dataclass
class TimingArc:
    """One cell arc from an input pin to an output pin, with one delay table
    and one output-slew table per condition."""

    from_pin: int
    to_pin: int
    delay_luts: list  # 4 x Lut2D
    slew_luts: list   # 4 x Lut2D


@dataclass
class Cell:
    arcs: list  # list[TimingArc]


@dataclass
class Net:
    """Rooted RC tree.  Members are sink pins in topological order; parent of
    each member is the root pin or an earlier member pin.  res[k] is the
    resistance of the edge parent->member k; cap[k] is member k's pin
    capacitance, root_cap the root's."""

    root: int
    member_pins: list
    member_parents: list
    member_res: np.ndarray   # (m, 4)
    member_caps: np.ndarray  # (m, 4)
    root_cap: np.ndarray     # (4,)

    def __post_init__(self):
        m = len(self.member_pins)
        self.member_res = np.asarray(self.member_res, dtype=np.float64).reshape(m, N_COND)
        self.member_caps = np.asarray(self.member_caps, dtype=np.float64).reshape(m, N_COND)
        self.root_cap = corner(self.root_cap)


@dataclass
class PrimaryInput:
    pin: int
    arrival: np.ndarray  # (4,)
    slew: np.ndarray     # (4,)

    def __post_init__(self):
        self.arrival = corner(self.arrival)
        self.slew = corner(self.slew)


@dataclass
class Endpoint:
    pin: int
    required: np.ndarray  # (4,)

    def __post_init__(self):
        self.required = corner(self.required)


@dataclass
class Design:
    pin_names: list
    cells: list
    nets: list
    primary_inputs: list
    endpoints: list
    clock_period: float
    meta: dict = field(default_factory=dict)

    @property
    def n_pins(self):
        return len(self.pin_names)


# ---------------------------------------------------------------------------
# validation

def validate(design: Design) -> list:
    """Return the list of model violations in a design (empty when valid).

    Checked: reference ranges, net tree shape and topological member order,
    single-driver ownership of every pin, lut well-formedness, endpoint and
    primary-input sanity, acyclic net-to-net connectivity, and that every
    sink either feeds an arc or is an endpoint.
    """
    v = []
    n = design.n_pins

    def ref_ok(pin, what):
        if not isinstance(pin, (int, np.integer)) or not (0 <= pin < n):
            v.append(Violation("dangling-ref", f"{what} references pin {pin!r} outside 0..{n - 1}"))
            return False
        return True

    driver_of = {}  # pin -> description of what drives it

    def claim(pin, desc):
        if pin in driver_of:
            v.append(Violation("multi-driver", f"pin {pin} driven by both {driver_of[pin]} and {desc}"))
        else:
            driver_of[pin] = desc

    pi_pins = set()
    for pi in design.primary_inputs:
        if ref_ok(pi.pin, "primary input"):
            if pi.pin in pi_pins:
                v.append(Violation("multi-driver", f"pin {pi.pin} listed as primary input twice"))
            pi_pins.add(pi.pin)
            claim(pi.pin, "primary input")
            if not (np.all(np.isfinite(pi.arrival)) and np.all(np.isfinite(pi.slew))):
                v.append(Violation("bad-value", f"primary input {pi.pin} has non-finite arrival/slew"))

    for ei, ep in enumerate(design.endpoints):
        ref_ok(ep.pin, f"endpoint {ei}")
        if not np.all(np.isfinite(ep.required)):
            v.append(Violation("bad-value", f"endpoint pin {ep.pin} has non-finite required time"))

    arc_sources = set()
    arc_targets = set()
    for ci, cell in enumerate(design.cells):
        for ai, arc in enumerate(cell.arcs):
            where = f"cell {ci} arc {ai}"
            if not (ref_ok(arc.from_pin, where) and ref_ok(arc.to_pin, where)):
                continue
            if arc.from_pin == arc.to_pin:
                v.append(Violation("bad-arc", f"{where} is a self loop on pin {arc.from_pin}"))
            arc_sources.add(arc.from_pin)
            if arc.to_pin not in arc_targets:
                arc_targets.add(arc.to_pin)
                claim(arc.to_pin, f"cell {ci}")
            elif driver_of.get(arc.to_pin) != f"cell {ci}":
                v.append(Violation("multi-driver",
                                   f"pin {arc.to_pin} is an arc target of more than one cell"))
            for kind, luts in (("delay", arc.delay_luts), ("slew", arc.slew_luts)):
                if len(luts) != N_COND:
                    v.append(Violation("bad-lut", f"{where} needs {N_COND} {kind} luts"))
                    continue
                for lut in luts:
                    for p in lut.check():
                        v.append(Violation("bad-lut", f"{where}: {p}"))

    member_of = {}
    root_of = {}
    for ni, net in enumerate(design.nets):
        if not ref_ok(net.root, f"net {ni} root"):
            continue
        if net.root in root_of:
            v.append(Violation("multi-driver", f"pin {net.root} roots both net {root_of[net.root]} and net {ni}"))
        root_of[net.root] = ni
        seen = {net.root}
        for mi, (pin, parent) in enumerate(zip(net.member_pins, net.member_parents)):
            if not ref_ok(pin, f"net {ni} member {mi}"):
                continue
            ref_ok(parent, f"net {ni} member {mi} parent")
            if pin in member_of:
                v.append(Violation("multi-driver", f"pin {pin} is a member of nets {member_of[pin]} and {ni}"))
            member_of[pin] = ni
            claim(pin, f"net {ni}")
            if pin == net.root:
                v.append(Violation("non-tree-net", f"net {ni}: root pin {pin} listed as a member"))
            if parent not in seen:
                v.append(Violation(
                    "non-tree-net",
                    f"net {ni} not in topological order: member pin {pin} has parent {parent} "
                    f"which is not the root or an earlier member"))
            seen.add(pin)
        arrs = (net.member_res, net.member_caps, net.root_cap)
        if not all(np.all(np.isfinite(a)) for a in arrs):
            v.append(Violation("bad-value", f"net {ni} has non-finite res/cap entries"))
        elif any(np.any(a < 0) for a in arrs):
            v.append(Violation("bad-value", f"net {ni} has negative res/cap entries"))

    # every net root must be driven by something: an arc, a net, or a PI seed
    for ni, net in enumerate(design.nets):
        r = net.root
        if isinstance(r, (int, np.integer)) and 0 <= r < n:
            if r not in arc_targets and r not in pi_pins and r not in member_of:
                v.append(Violation("undriven-root", f"net {ni} root pin {r} has no arc, net, or primary input driving it"))

    # every arc source must carry a timing value from somewhere
    for p in sorted(arc_sources):
        if p not in member_of and p not in pi_pins:
            v.append(Violation("undriven-pin", f"arc source pin {p} is neither a net member nor a primary input"))

    # every sink must be consumed: feed an arc, root a net, or be an endpoint
    ep_pins = {ep.pin for ep in design.endpoints}
    for p in sorted(member_of):
        if p not in arc_sources and p not in root_of and p not in ep_pins:
            v.append(Violation("dangling-pin", f"net member pin {p} feeds no arc and is not an endpoint"))

    if not (isinstance(design.clock_period, (int, float)) and np.isfinite(design.clock_period)
            and design.clock_period > 0):
        v.append(Violation("bad-value", f"clock_period must be a positive finite number, got {design.clock_period!r}"))

    # net-to-net connectivity must be acyclic; report one pin on a cycle
    if not any(x.kind in ("dangling-ref", "non-tree-net") for x in v):
        cyc = _find_cycle_pin(design, member_of, root_of)
        if cyc is not None:
            v.append(Violation("cyclic", f"combinational cycle through pin {cyc}"))
    return v


def _net_deps(design: Design, member_of: dict, root_of: dict):
    """Net index -> set of net indices whose sinks feed this net's driver."""
    src_of_target = {}
    for cell in design.cells:
        for arc in cell.arcs:
            src_of_target.setdefault(arc.to_pin, []).append(arc.from_pin)
    deps = []
    for net in design.nets:
        d = set()
        for src in src_of_target.get(net.root, ()):
            if src in member_of:
                d.add(member_of[src])
        if net.root in member_of:  # feedthrough: root fed directly by another net
            d.add(member_of[net.root])
        deps.append(d)
    return deps


def _find_cycle_pin(design: Design, member_of, root_of):
    deps = _net_deps(design, member_of, root_of)
    WHITE, GREY, BLACK = 0, 1, 2
    color = [WHITE] * len(deps)
    for start in range(len(deps)):
        if color[start] != WHITE:
            continue
        stack = [(start, iter(deps[start]))]
        color[start] = GREY
        while stack:
            node, it = stack[-1]
            adv = next(it, None)
            if adv is None:
                color[node] = BLACK
                stack.pop()
            elif color[adv] == GREY:
                return design.nets[adv].root
            elif color[adv] == WHITE:
                color[adv] = GREY
                stack.append((adv, iter(deps[adv])))
    return None


# ---------------------------------------------------------------------------
# CSR pin layout

@dataclass
class CsrNetlist:
    """Flat pin list grouped by net, root stored first in each group, with
    offsets such that net i occupies pin_list[net_index[i]:net_index[i+1]]
    and net_index[i+1]-net_index[i] == 1 + member count."""

    pin_list: np.ndarray
    net_index: np.ndarray


def build_csr(design: Design) -> CsrNetlist:
    offsets = [0]
    pins = []
    for net in design.nets:
        pins.append(net.root)
        pins.extend(net.member_pins)
        offsets.append(len(pins))
    return CsrNetlist(
        pin_list=np.asarray(pins, dtype=np.int64),
        net_index=np.asarray(offsets, dtype=np.int64),
    )


# ---------------------------------------------------------------------------
# JSON interchange

def _lut_to_doc(lut: Lut2D):
    return {
        "slew_axis": [float(x) for x in lut.slew_axis],
        "load_axis": [float(x) for x in lut.load_axis],
        "table": [[float(x) for x in row] for row in lut.table],
    }


def _lut_key(lut: Lut2D):
    return (tuple(lut.slew_axis.tolist()), tuple(lut.load_axis.tolist()),
            tuple(map(tuple, lut.table.tolist())))


def serialize_design(design: Design) -> str:
    """Render a design to its canonical JSON document.

    Identical luts are pooled into the shared "luts" section, so the output
    of two structurally equal designs is byte-identical.
    """
    pool = {}
    pool_docs = []

    def lut_ref(lut):
        k = _lut_key(lut)
        if k not in pool:
            pool[k] = len(pool_docs)
            pool_docs.append(_lut_to_doc(lut))
        return pool[k]

    cells = []
    for cell in design.cells:
        arcs = []
        for arc in cell.arcs:
            arcs.append({
                "from": int(arc.from_pin),
                "to": int(arc.to_pin),
                "delay_lut": [lut_ref(l) for l in arc.delay_luts],
                "slew_lut": [lut_ref(l) for l in arc.slew_luts],
            })
        cells.append({"arcs": arcs})

    pi_by_pin = {pi.pin: pi for pi in design.primary_inputs}
    ep_by_pin = {ep.pin: ep for ep in design.endpoints}
    pins = []
    for i, name in enumerate(design.pin_names):
        doc = {"name": name, "is_endpoint": i in ep_by_pin}
        if i in ep_by_pin:
            doc["required"] = [float(x) for x in ep_by_pin[i].required]
        if i in pi_by_pin:
            doc["arrival"] = [float(x) for x in pi_by_pin[i].arrival]
            doc["slew"] = [float(x) for x in pi_by_pin[i].slew]
        pins.append(doc)

    nets = []
    for net in design.nets:
        members = []
        for k, (pin, parent) in enumerate(zip(net.member_pins, net.member_parents)):
            members.append({
                "pin": int(pin),
                "parent": int(parent),
                "res": [float(x) for x in net.member_res[k]],
                "cap": [float(x) for x in net.member_caps[k]],
            })
        nets.append({
            "root": int(net.root),
            "root_cap": [float(x) for x in net.root_cap],
            "members": members,
        })

    doc = {
        "clock_period": float(design.clock_period),
        "pins": pins,
        "luts": pool_docs,
        "cells": cells,
        "nets": nets,
    }
    return json.dumps(doc, indent=1)


def _parse_lut(obj, pool):
    if isinstance(obj, int):
        if not (0 <= obj < len(pool)):
            raise DesignFormatError(f"lut index {obj} outside shared pool of {len(pool)}")
        return pool[obj]
    if not isinstance(obj, dict):
        raise DesignFormatError(f"lut reference must be an index or an object, got {type(obj).__name__}")
    try:
        return Lut2D(obj["slew_axis"], obj["load_axis"], obj["table"])
    except (KeyError, ValueError, TypeError) as e:
        raise DesignFormatError(f"malformed lut object: {e}") from e


def _parse_luts(obj, pool, what):
    if not isinstance(obj, list) or len(obj) != N_COND:
        raise DesignFormatError(f"{what} must be a list of {N_COND} lut references")
    return [_parse_lut(o, pool) for o in obj]


def parse_design(text: str) -> Design:
    """Parse and validate a JSON design document.

    Raises DesignFormatError on syntax or shape problems (with position
    information for JSON errors) and DesignSemanticsError listing every
    model violation otherwise.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise DesignFormatError(f"JSON syntax error at line {e.lineno} column {e.colno}: {e.msg}") from e
    if not isinstance(doc, dict):
        raise DesignFormatError("top level of a design document must be an object")
    for key in ("clock_period", "pins", "cells", "nets"):
        if key not in doc:
            raise DesignFormatError(f"missing required top-level key {key!r}")

    pool = []
    for i, obj in enumerate(doc.get("luts", [])):
        if isinstance(obj, int):
            raise DesignFormatError(f"shared lut {i} may not itself be an index")
        pool.append(_parse_lut(obj, pool))

    pin_names = []
    primary_inputs = []
    endpoints = []
    if not isinstance(doc["pins"], list):
        raise DesignFormatError('"pins" must be a list')
    try:
        for i, p in enumerate(doc["pins"]):
            pin_names.append(str(p["name"]))
            if p.get("is_endpoint", False):
                endpoints.append(Endpoint(i, corner(p["required"])))
            if "arrival" in p:
                primary_inputs.append(PrimaryInput(i, corner(p["arrival"]), corner(p.get("slew", 0.0))))
    except (KeyError, ValueError, TypeError) as e:
        raise DesignFormatError(f"malformed pin entry: {e}") from e

    cells = []
    try:
        for c in doc["cells"]:
            arcs = [
                TimingArc(int(a["from"]), int(a["to"]),
                          _parse_luts(a["delay_lut"], pool, "delay_lut"),
                          _parse_luts(a["slew_lut"], pool, "slew_lut"))
                for a in c["arcs"]
            ]
            cells.append(Cell(arcs))
    except (KeyError, ValueError, TypeError) as e:
        raise DesignFormatError(f"malformed cell entry: {e}") from e

    nets = []
    try:
        for nd in doc["nets"]:
            members = nd["members"]
            nets.append(Net(
                root=int(nd["root"]),
                member_pins=[int(m["pin"]) for m in members],
                member_parents=[int(m["parent"]) for m in members],
                member_res=np.asarray([m["res"] for m in members], dtype=np.float64).reshape(len(members), N_COND),
                member_caps=np.asarray([m["cap"] for m in members], dtype=np.float64).reshape(len(members), N_COND),
                root_cap=corner(nd.get("root_cap", 0.0)),
            ))
    except (KeyError, ValueError, TypeError) as e:
        raise DesignFormatError(f"malformed net entry: {e}") from e

    try:
        clock_period = float(doc["clock_period"])
    except (TypeError, ValueError) as e:
        raise DesignFormatError(f"clock_period must be a number: {e}") from e

    design = Design(pin_names, cells, nets, primary_inputs, endpoints, clock_period)
    violations = validate(design)
    if violations:
        raise DesignSemanticsError(violations)
    return design


def design_equal(a: Design, b: Design) -> bool:
    """Structural equality via the canonical serialization."""
    return serialize_design(a) == serialize_design(b)
