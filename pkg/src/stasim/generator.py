"""Seeded synthetic-circuit generator with controllable fanout distributions.

Cells are placed in layers; every net connects a driver in layer i only to
sinks in layer i+1 (or to dedicated endpoint pins), so net dependency levels
coincide with layers and the level count equals depth_target.  Fanouts are
drawn first and honored exactly: sinks that do not fit into the next layer's
remaining cell-input capacity become endpoint pins, and cell input counts are
whatever the wiring delivered (1..max_cell_inputs).  First-layer cell inputs
are seeded as primary inputs.

Sub-streams (layout, fanout, rc, luts, pins) are spawned from one seed via a
counter-based PRNG, so each aspect of the design is independently
reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .netlist import (
    N_COND, Cell, Design, Endpoint, Lut2D, Net, PrimaryInput, TimingArc,
)

NOMINAL_STAGE_DELAY = 60e-12  # seconds; calibrates clock_period to depth


@dataclass
class FanoutDist:
    """Fanout distribution family: fixed(k), uniform(lo, hi), or
    power_law(alpha, max) with pmf proportional to k**-alpha on 1..max."""

    kind: str
    k: int = 1
    lo: int = 1
    hi: int = 1
    alpha: float = 2.0
    max: int = 1

    def __post_init__(self):
        if self.kind not in ("fixed", "uniform", "power_law"):
            raise ValueError(f"unknown fanout distribution {self.kind!r}")
        if self.kind == "fixed" and self.k < 1:
            raise ValueError("fixed fanout must be >= 1")
        if self.kind == "uniform" and not (1 <= self.lo <= self.hi):
            raise ValueError("uniform fanout needs 1 <= lo <= hi")
        if self.kind == "power_law" and not (self.alpha > 0 and self.max >= 1):
            raise ValueError("power_law fanout needs alpha > 0 and max >= 1")

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.kind == "fixed":
            return np.full(n, self.k, dtype=np.int64)
        if self.kind == "uniform":
            return rng.integers(self.lo, self.hi + 1, size=n, dtype=np.int64)
        support = np.arange(1, self.max + 1, dtype=np.float64)
        pmf = support ** (-self.alpha)
        pmf /= pmf.sum()
        return rng.choice(np.arange(1, self.max + 1, dtype=np.int64), size=n, p=pmf)

    def pmf(self) -> np.ndarray:
        """Probability of each fanout value 1..support_max."""
        if self.kind == "fixed":
            p = np.zeros(self.k)
            p[self.k - 1] = 1.0
            return p
        if self.kind == "uniform":
            p = np.zeros(self.hi)
            p[self.lo - 1:] = 1.0 / (self.hi - self.lo + 1)
            return p
        support = np.arange(1, self.max + 1, dtype=np.float64)
        p = support ** (-self.alpha)
        return p / p.sum()

    def to_doc(self):
        if self.kind == "fixed":
            return {"kind": "fixed", "k": self.k}
        if self.kind == "uniform":
            return {"kind": "uniform", "lo": self.lo, "hi": self.hi}
        return {"kind": "power_law", "alpha": self.alpha, "max": self.max}

    @classmethod
    def from_doc(cls, doc):
        kind = doc["kind"]
        if kind == "fixed":
            return cls("fixed", k=int(doc["k"]))
        if kind == "uniform":
            return cls("uniform", lo=int(doc["lo"]), hi=int(doc["hi"]))
        return cls("power_law", alpha=float(doc["alpha"]), max=int(doc["max"]))


def fixed(k):
    return FanoutDist("fixed", k=k)


def uniform(lo, hi):
    return FanoutDist("uniform", lo=lo, hi=hi)


def power_law(alpha, max_fanout):
    return FanoutDist("power_law", alpha=alpha, max=max_fanout)


@dataclass
class GeneratorConfig:
    num_cells: int
    fanout: FanoutDist = field(default_factory=lambda: power_law(2.0, 64))
    depth_target: int = 8
    lut_grid_size: int = 5
    seed: int = 0
    max_cell_inputs: int = 3
    clock_scale: float = 1.0
    net_topology: str = "star"  # or "random_tree"

    def __post_init__(self):
        if self.num_cells < 1:
            raise ValueError("num_cells must be >= 1")
        if self.depth_target < 1:
            raise ValueError("depth_target must be >= 1")
        if self.depth_target > self.num_cells:
            raise ValueError(
                f"infeasible config: depth_target {self.depth_target} exceeds num_cells {self.num_cells}")
        if self.lut_grid_size < 1:
            raise ValueError("lut_grid_size must be >= 1")
        if self.max_cell_inputs < 1:
            raise ValueError("max_cell_inputs must be >= 1")
        if not (self.clock_scale > 0):
            raise ValueError("clock_scale must be > 0")
        if self.net_topology not in ("star", "random_tree"):
            raise ValueError(f"unknown net topology {self.net_topology!r}")

    def to_doc(self):
        return {
            "num_cells": self.num_cells,
            "fanout": self.fanout.to_doc(),
            "depth_target": self.depth_target,
            "lut_grid_size": self.lut_grid_size,
            "seed": self.seed,
            "max_cell_inputs": self.max_cell_inputs,
            "clock_scale": self.clock_scale,
            "net_topology": self.net_topology,
        }

    @classmethod
    def from_doc(cls, doc):
        return cls(
            num_cells=int(doc["num_cells"]),
            fanout=FanoutDist.from_doc(doc["fanout"]),
            depth_target=int(doc["depth_target"]),
            lut_grid_size=int(doc.get("lut_grid_size", 5)),
            seed=int(doc.get("seed", 0)),
            max_cell_inputs=int(doc.get("max_cell_inputs", 3)),
            clock_scale=float(doc.get("clock_scale", 1.0)),
            net_topology=str(doc.get("net_topology", "star")),
        )


N_CELL_CLASSES = 8


def _build_lut_library(rng: np.random.Generator, grid: int):
    """One (delay, slew) x (rise, fall) table quadruple per cell class.

    Tables are strictly increasing along both axes: delay = base
    + slew_coef*slew + r_eff*load + a small positive cross term.  Early and
    late conditions share the same table object, which guarantees
    early arrival <= late arrival on generated designs.
    """
    slew_axis = np.geomspace(1e-12, 2e-10, grid) if grid > 1 else np.array([5e-12])
    load_axis = np.geomspace(5e-16, 3e-13, grid) if grid > 1 else np.array([5e-15])
    lib = []
    for _ in range(N_CELL_CLASSES):
        base = rng.uniform(20e-12, 80e-12)
        fall_ratio = rng.uniform(0.95, 1.15)
        s_coef = rng.uniform(0.15, 0.35)
        r_eff = rng.uniform(100.0, 600.0)
        cross = rng.uniform(0.02, 0.08)
        sl_base = rng.uniform(2e-12, 8e-12)
        sl_s_coef = rng.uniform(0.1, 0.3)
        sl_r_eff = rng.uniform(50.0, 300.0)
        s_col = slew_axis[:, None]
        l_row = load_axis[None, :]
        cross_term = cross * base * (s_col / slew_axis[-1]) * (l_row / load_axis[-1])
        tabs = {}
        for edge, ratio in (("rise", 1.0), ("fall", fall_ratio)):
            d = ratio * base + s_coef * s_col + r_eff * l_row + cross_term
            s = ratio * sl_base + sl_s_coef * s_col + sl_r_eff * l_row
            tabs[edge] = (
                Lut2D(slew_axis, load_axis, d + 0 * l_row),
                Lut2D(slew_axis, load_axis, s + 0 * l_row),
            )
        delay_luts = [tabs["rise"][0], tabs["fall"][0], tabs["rise"][0], tabs["fall"][0]]
        slew_luts = [tabs["rise"][1], tabs["fall"][1], tabs["rise"][1], tabs["fall"][1]]
        lib.append((delay_luts, slew_luts))
    return lib


def _rc_corner(rng, lo, hi):
    """Early == late; fall differs from rise by a few percent."""
    rise = rng.uniform(lo, hi)
    fall = rise * rng.uniform(0.95, 1.05)
    return np.array([rise, fall, rise, fall])


def generate_design(cfg: GeneratorConfig) -> Design:
    """Deterministically generate a valid design from cfg (same cfg, same
    output, byte-identical once serialized)."""
    ss = np.random.SeedSequence(cfg.seed)
    kids = ss.spawn(5)
    rng_fan = np.random.Generator(np.random.Philox(kids[0]))
    rng_wire = np.random.Generator(np.random.Philox(kids[1]))
    rng_rc = np.random.Generator(np.random.Philox(kids[2]))
    rng_lut = np.random.Generator(np.random.Philox(kids[3]))
    rng_pin = np.random.Generator(np.random.Philox(kids[4]))

    depth = cfg.depth_target
    layer_sizes = [len(chunk) for chunk in np.array_split(np.arange(cfg.num_cells), depth)]
    clock_period = cfg.clock_scale * depth * NOMINAL_STAGE_DELAY

    lib = _build_lut_library(rng_lut, cfg.lut_grid_size)
    cell_class = rng_lut.integers(0, N_CELL_CLASSES, size=cfg.num_cells)

    pin_names = []
    primary_inputs = []
    endpoints = []

    def new_pin(name):
        pin_names.append(name)
        return len(pin_names) - 1

    # layer by layer: create the layer's cells (output pins now, input pins
    # as wiring arrives), then wire the previous layer's drawn fanout into it
    cells_meta = []   # per cell: {"out": pin, "inputs": [pins]}
    layers = []       # per layer: list of cell ids
    fanout_bumps = 0
    cid = 0
    for li, size in enumerate(layer_sizes):
        layer = []
        for _ in range(size):
            out = new_pin(f"c{cid}/o")
            cells_meta.append({"out": out, "inputs": []})
            layer.append(cid)
            cid += 1
        layers.append(layer)

    # first-layer inputs come from primary inputs
    for c in layers[0]:
        n_in = int(rng_wire.integers(1, cfg.max_cell_inputs + 1))
        for k in range(n_in):
            p = new_pin(f"c{c}/i{k}")
            cells_meta[c]["inputs"].append(p)
            base = rng_pin.uniform(0.0, 10e-12)
            late_extra = rng_pin.uniform(0.0, 5e-12)
            arrival = np.array([base, base, base + late_extra, base + late_extra])
            slew = np.full(N_COND, rng_pin.uniform(1e-12, 5e-12))
            primary_inputs.append(PrimaryInput(p, arrival, slew))

    # draw every driver's fanout up front; realized fanout equals the draw
    fanouts = np.concatenate([
        cfg.fanout.sample(rng_fan, len(layer)) for layer in layers
    ]) if cfg.num_cells else np.zeros(0, dtype=np.int64)

    ep_count = 0
    net_sinks = [[] for _ in range(cfg.num_cells)]

    def new_endpoint_pin():
        nonlocal ep_count
        p = new_pin(f"ep{ep_count}")
        ep_count += 1
        required = np.array([0.0, 0.0, clock_period, clock_period])
        endpoints.append(Endpoint(p, required))
        return p

    for li in range(depth):
        drivers = layers[li]
        consumers = layers[li + 1] if li + 1 < depth else []
        conn = np.repeat(np.asarray(drivers, dtype=np.int64),
                         fanouts[np.asarray(drivers, dtype=np.int64)])
        rng_wire.shuffle(conn)
        conn = list(conn)
        # coverage: every consumer cell needs at least one driven input
        while len(conn) < len(consumers):
            extra = int(rng_wire.choice(np.asarray(drivers, dtype=np.int64)))
            fanouts[extra] += 1
            conn.append(extra)
            fanout_bumps += 1
        order = list(consumers)
        rng_wire.shuffle(order)
        open_cells = []
        for j, c in enumerate(order):
            p = new_pin(f"c{c}/i{len(cells_meta[c]['inputs'])}")
            cells_meta[c]["inputs"].append(p)
            net_sinks[conn[j]].append(p)
            if cfg.max_cell_inputs > 1:
                open_cells.append(c)
        for d in conn[len(order):]:
            # remaining connections fill spare input capacity, else endpoints
            c = None
            while open_cells:
                pick = int(rng_wire.integers(0, len(open_cells)))
                if len(cells_meta[open_cells[pick]]["inputs"]) < cfg.max_cell_inputs:
                    c = open_cells[pick]
                    break
                open_cells[pick] = open_cells[-1]
                open_cells.pop()
            if c is None:
                net_sinks[d].append(new_endpoint_pin())
                continue
            p = new_pin(f"c{c}/i{len(cells_meta[c]['inputs'])}")
            cells_meta[c]["inputs"].append(p)
            net_sinks[d].append(p)

    # assemble cells and nets in cell order
    cells = []
    nets = []
    for c in range(cfg.num_cells):
        meta = cells_meta[c]
        delay_luts, slew_luts = lib[cell_class[c]]
        arcs = [TimingArc(p, meta["out"], delay_luts, slew_luts) for p in meta["inputs"]]
        cells.append(Cell(arcs))

        sinks = net_sinks[c]
        m = len(sinks)
        parents = []
        if cfg.net_topology == "star" or m <= 1:
            parents = [meta["out"]] * m
        else:
            nodes = [meta["out"]]
            for _ in sinks:
                parents.append(nodes[int(rng_rc.integers(0, len(nodes)))])
                nodes.append(sinks[len(parents) - 1])
        res = np.empty((m, N_COND))
        caps = np.empty((m, N_COND))
        for k in range(m):
            res[k] = _rc_corner(rng_rc, 100.0, 2000.0)
            caps[k] = _rc_corner(rng_rc, 0.5e-15, 5e-15)
        nets.append(Net(
            root=meta["out"],
            member_pins=list(sinks),
            member_parents=parents,
            member_res=res,
            member_caps=caps,
            root_cap=_rc_corner(rng_rc, 1e-15, 3e-15),
        ))

    design = Design(
        pin_names=pin_names,
        cells=cells,
        nets=nets,
        primary_inputs=primary_inputs,
        endpoints=endpoints,
        clock_period=clock_period,
        meta={
            "generator": cfg.to_doc(),
            "layer_sizes": layer_sizes,
            "fanout_bumps": fanout_bumps,
        },
    )
    return design
