"""Report rendering: structured text + CSV pairs with frozen field orders.

Every report embeds the tool version and the design hash (sha256 of the
canonical serialized design document).  No report contains wall-clock times;
timing of runs lives only in the run manifest, outside the deterministic
region.
"""

from __future__ import annotations

import hashlib
import json

import numpy as np

from . import __version__
from .netlist import serialize_design, COND_NAMES
from .flatten import FlatDesign, flatten
from .sta import tns as _tns, wns as _wns
from .warp import STAGES, OVERHEAD_KEYS, SCHEMES

TIMING_FIELDS = ("pin", "condition", "load", "delay", "impulse", "slew",
                 "arrival", "required", "slack")
COMPARE_CSV_COLUMNS = ("design", "scheme", "stage", "cycles", "total_cycles",
                       "useful_lane_cycles", "lane_utilization",
                       "rescheduling_steps", "values_within_tol", "max_rel_dev")
TRACE_FIELDS = ("id", "stream", "kind", "level", "start", "finish")


def design_hash(design) -> str:
    """sha256 of the canonical serialized design document."""
    if isinstance(design, str):
        doc = design
    else:
        doc = serialize_design(design)
    return hashlib.sha256(doc.encode("utf-8")).hexdigest()


def _f(x) -> str:
    """Deterministic shortest round-trip float formatting."""
    return repr(float(x))


def _header(kind: str, dhash: str) -> list:
    return [f"# stasim {__version__} {kind} report",
            f"# design sha256: {dhash}"]


def render_csv(columns, rows) -> str:
    lines = [",".join(columns)]
    for row in rows:
        lines.append(",".join(str(row[c]) for c in columns))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# timing

def timing_summary(flat: FlatDesign, state, cost_report=None) -> dict:
    out = {
        "tns": _tns(state, flat),
        "wns": _wns(state, flat),
        "level_count": flat.n_levels,
        "pins": flat.n_pins,
        "nets": flat.n_nets,
    }
    if cost_report is not None:
        out["scheme"] = cost_report.scheme
        out["total_cycles"] = cost_report.total_cycles
        out["lane_utilization"] = cost_report.lane_utilization
        out["rescheduling_steps"] = cost_report.rescheduling_steps
    return out


def timing_report(design, state, scheme: str = "reference",
                  cost_report=None) -> str:
    """Full per-pin timing report: one row per (pin, condition), stable
    field order, plus the design summary."""
    flat = design if isinstance(design, FlatDesign) else flatten(design)
    dhash = design_hash(flat.design)
    lines = _header("timing", dhash)
    lines.append(f"# scheme: {scheme}")
    for k, v in timing_summary(flat, state, cost_report).items():
        lines.append(f"{k} = {v if isinstance(v, (int, str)) else _f(v)}")
    lines.append("")
    lines.append(" ".join(TIMING_FIELDS))
    names = flat.design.pin_names
    for p in range(flat.n_pins):
        for c in range(4):
            lines.append(" ".join([
                names[p], COND_NAMES[c],
                _f(state.load[p, c]), _f(state.net_delay[p, c]),
                _f(state.impulse[p, c]), _f(state.slew[p, c]),
                _f(state.arrival[p, c]), _f(state.required[p, c]),
                _f(state.slack[p, c]),
            ]))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# scheme comparison

def comparison_csv(dhash: str, comp) -> str:
    rows = []
    for scheme in SCHEMES:
        r = comp.results[scheme]
        rep = r.report
        for stage in STAGES + OVERHEAD_KEYS:
            rows.append({
                "design": dhash,
                "scheme": scheme,
                "stage": stage,
                "cycles": _f(rep.stage_cycles[stage]),
                "total_cycles": _f(rep.total_cycles),
                "useful_lane_cycles": _f(rep.useful_lane_cycles),
                "lane_utilization": _f(rep.lane_utilization),
                "rescheduling_steps": rep.rescheduling_steps,
                "values_within_tol": int(r.values_within_tol),
                "max_rel_dev": _f(r.max_rel_dev),
            })
    return render_csv(COMPARE_CSV_COLUMNS, rows)


def comparison_text(dhash: str, comp) -> str:
    lines = _header("scheme-comparison", dhash)
    lines.append(f"tns = {_f(comp.tns)}")
    lines.append(f"wns = {_f(comp.wns)}")
    lines.append(f"level_count = {comp.n_levels}")
    lines.append("")
    for scheme in SCHEMES:
        r = comp.results[scheme]
        rep = r.report
        lines.append(f"[{scheme}]")
        lines.append(f"  total_cycles = {_f(rep.total_cycles)}")
        lines.append(f"  useful_lane_cycles = {_f(rep.useful_lane_cycles)}")
        lines.append(f"  lane_utilization = {_f(rep.lane_utilization)}")
        lines.append(f"  rescheduling_steps = {rep.rescheduling_steps}")
        for stage in STAGES + OVERHEAD_KEYS:
            lines.append(f"  cycles.{stage} = {_f(rep.stage_cycles[stage])}")
        lines.append(f"  values_within_tol = {r.values_within_tol}")
        lines.append(f"  max_rel_dev = {_f(r.max_rel_dev)}")
        lines.append(f"  exact_vs_tree_oracle = {r.exact_vs_tree_oracle}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# gradients

def max_grad_coordinate(gstate) -> tuple:
    """Label of the largest-magnitude gradient coordinate."""
    best = ("none", -1, "", 0.0)
    if gstate.d_arc.size:
        idx = int(np.abs(gstate.d_arc).argmax())
        a, j = divmod(idx, 2)
        v = float(gstate.d_arc[a, j])
        best = ("arc", a, ("late-rise", "late-fall")[j], v)
    if gstate.d_edge.size:
        idx = int(np.abs(gstate.d_edge).argmax())
        k, j = divmod(idx, 2)
        v = float(gstate.d_edge[k, j])
        if abs(v) > abs(best[3]):
            best = ("edge", k, ("late-rise", "late-fall")[j], v)
    return best


def gradient_report(design, state, gstate, fd_report=None) -> str:
    """Per arc and per net edge: the delay variable and its loss gradient,
    late rise/fall; plus the loss summary."""
    flat = design if isinstance(design, FlatDesign) else flatten(design)
    dhash = design_hash(flat.design)
    names = flat.design.pin_names
    lines = _header("gradient", dhash)
    lines.append(f"loss = {_f(gstate.loss)}")
    lines.append(f"gamma = {_f(gstate.gamma)}")
    lines.append(f"loss_kind = {gstate.loss_kind}")
    kind, idx, cond, val = max_grad_coordinate(gstate)
    lines.append(f"max_grad_coordinate = {kind}:{idx}:{cond} value {_f(val)}")
    if fd_report is not None:
        lines.append(f"finite_diff_max_rel_error = {_f(fd_report.max_rel_error)}")
        lines.append(f"finite_diff_max_abs_error = {_f(fd_report.max_abs_error)}")
        lines.append(f"finite_diff_epsilon_dominated = {fd_report.epsilon_dominated}")
    lines.append("")
    lines.append("id from to delay_late_rise delay_late_fall grad_late_rise grad_late_fall")
    for a in range(len(flat.arc_from)):
        lines.append(" ".join([
            f"arc:{a}", names[flat.arc_from[a]], names[flat.arc_to[a]],
            _f(state.arc_delay[a, 2]), _f(state.arc_delay[a, 3]),
            _f(gstate.d_arc[a, 0]), _f(gstate.d_arc[a, 1]),
        ]))
    for k in range(len(flat.mem_pin)):
        pl = flat.mem_parent_loc[k]
        if pl > 0:
            parent = names[flat.mem_pin[flat.net_ptr[flat.mem_net[k]] + pl - 1]]
            pd = flat.net_ptr[flat.mem_net[k]] + pl - 1
            d_lr = state.net_delay[flat.mem_pin[k], 2] - state.net_delay[flat.mem_pin[pd], 2]
            d_lf = state.net_delay[flat.mem_pin[k], 3] - state.net_delay[flat.mem_pin[pd], 3]
        else:
            parent = names[flat.net_root[flat.mem_net[k]]]
            d_lr = state.net_delay[flat.mem_pin[k], 2]
            d_lf = state.net_delay[flat.mem_pin[k], 3]
        lines.append(" ".join([
            f"edge:{k}", parent, names[flat.mem_pin[k]],
            _f(d_lr), _f(d_lf),
            _f(gstate.d_edge[k, 0]), _f(gstate.d_edge[k, 1]),
        ]))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# schedules

def schedule_trace(dhash: str, seq_result, fused_result) -> str:
    """Kernel trace of the fused schedule plus the makespan summary."""
    lines = _header("schedule", dhash)
    lines.append(f"sequential_makespan = {_f(seq_result.makespan)}")
    lines.append(f"fused_makespan = {_f(fused_result.makespan)}")
    lines.append(f"overlap_fraction = {_f(fused_result.overlap_fraction)}")
    lines.append("")
    lines.append(" ".join(TRACE_FIELDS))
    for r in fused_result.records:
        lines.append(" ".join([r["id"], r["stream"], r["kind"], str(r["level"]),
                               _f(r["start"]), _f(r["finish"])]))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# manifests

def run_manifest(command: str, config: dict, dhash: str | None, seed,
                 outputs: list, wall_time_s: float | None) -> str:
    """JSON run manifest.  wall_time_s is informational and excluded from
    any determinism comparison."""
    doc = {
        "tool": "stasim",
        "version": __version__,
        "command": command,
        "config": config,
        "design_sha256": dhash,
        "seed": seed,
        "outputs": outputs,
        "wall_time_s": wall_time_s,
    }
    return json.dumps(doc, indent=1) + "\n"
