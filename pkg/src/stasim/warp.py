"""Deterministic lockstep warp-execution cost model and the three task
assignment schemes (net-based, pin-based, CTE).

Timing values are computed once per design by the shared backend level
kernels, which fix a single deterministic operation order (including the
strided-partial tree reduction for root loads); a scheme's TaskAssignment
decides only who executes which work item when, and therefore what the run
costs.  Cycle accounting per warp follows the lockstep rule: a warp's loop
costs the maximum lane trip count, idle lanes ride along.

Cost semantics:
  - work-phase cycles: item-loop cycles per warp (max lane items x
    cycles_per_item).  These fill total_cycles and the per-stage buckets
    "loads/delays/impulses/forward/backward".
  - overhead cycles: tree reductions, CTE prefix scans, CTE per-trip binary
    searches, and kernel launches.  These fill total_cycles, the "reduction"
    bucket (launches a separate "launch" bucket), but NOT the utilization
    denominator.
  - lane_utilization = useful item cycles / (work-phase cycles x warp_size),
    aggregated over all active warps.  Utilization measures how well the
    scheme packs items into lanes; overhead is reported separately in the
    cycle totals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .flatten import FlatDesign, flatten
from .sta import TimingState, run_reference, tns as _tns, wns as _wns
from . import backend

NET_BASED = "net-based"
PIN_BASED = "pin-based"
CTE = "cte"
SCHEMES = (NET_BASED, PIN_BASED, CTE)

STAGES = ("loads", "delays", "impulses", "forward", "backward")
OVERHEAD_KEYS = ("reduction", "launch")
KIND_RC, KIND_FORWARD, KIND_BACKWARD = 0, 1, 2
KIND_NAMES = ("net_rc", "cell_delay_at", "slack_bwd")


class CoverageError(ValueError):
    """A task assignment does not cover the design's workload exactly."""


@dataclass
class WarpGeometry:
    warp_size: int = 32
    x_dim: int = 4
    y_dim: int = 8
    nets_per_block: int = 4
    # net-based baseline: False = one lane per net, conditions serial in the
    # lane (default); True = condition-parallel lanes (warp_size/x_dim nets).
    net_based_parallel_conditions: bool = False

    def __post_init__(self):
        if self.warp_size < 1 or (self.warp_size & (self.warp_size - 1)) != 0:
            raise ValueError("warp_size must be a power of two")
        if self.x_dim * self.y_dim != self.warp_size:
            raise ValueError("x_dim * y_dim must equal warp_size")
        if self.nets_per_block < 1:
            raise ValueError("nets_per_block must be >= 1")

    @property
    def default_block_size(self):
        return self.warp_size * self.nets_per_block


@dataclass
class CostModel:
    cycles_per_item: float = 1.0
    scan_step_cost: float = 1.0
    search_step_cost: float = 1.0
    reduction_step_cost: float = 1.0
    kernel_launch_cost: float = 0.0

    def __post_init__(self):
        for name in ("cycles_per_item", "scan_step_cost", "search_step_cost",
                     "reduction_step_cost", "kernel_launch_cost"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")


# ---------------------------------------------------------------------------
# micro-operations

def exclusive_scan(values) -> np.ndarray:
    """Work-efficient (two-phase up/down-sweep) exclusive prefix sum."""
    vals = np.asarray(values, dtype=np.int64)
    n = len(vals)
    if n == 0:
        return np.zeros(0, dtype=np.int64)
    size = 1
    while size < n:
        size *= 2
    a = np.zeros(size, dtype=np.int64)
    a[:n] = vals
    d = 1
    while d < size:
        idx = np.arange(2 * d - 1, size, 2 * d)
        a[idx] += a[idx - d]
        d *= 2
    a[size - 1] = 0
    d = size // 2
    while d >= 1:
        idx = np.arange(2 * d - 1, size, 2 * d)
        left = a[idx - d].copy()
        a[idx - d] = a[idx]
        a[idx] = a[idx] + left
        d //= 2
    return a[:n]


def scan_step_count(n: int) -> int:
    """Lockstep steps charged for an n-element scan: 2*ceil(log2(n))."""
    if n <= 1:
        return 0
    size = 1
    steps = 0
    while size < n:
        size *= 2
        steps += 1
    return 2 * steps


def lower_bound(prefix, task_id: int) -> int:
    """Greatest index i with prefix[i] <= task_id.  The prefix array carries
    the total workload as its last entry; task_id must lie in [0, total)."""
    prefix = np.asarray(prefix)
    if len(prefix) == 0:
        raise ValueError("empty prefix array")
    total = int(prefix[-1])
    if not (0 <= task_id < total):
        raise ValueError(f"task_id {task_id} out of range [0, {total})")
    return int(np.searchsorted(prefix, task_id, side="right")) - 1


def search_step_count(n_prefix: int) -> int:
    """Lockstep steps charged for one binary search over n_prefix entries."""
    return int(math.ceil(math.log2(n_prefix))) if n_prefix > 1 else 0


def tree_reduce(values):
    """Pairwise reduction in the fixed pairing order (lane k absorbs lane
    k+stride); lane count must be a power of two.  Deterministic and
    bit-stable for floats."""
    vals = [np.asarray(v, dtype=np.float64) if np.ndim(v) else float(v) for v in values]
    n = len(vals)
    if n == 0:
        raise ValueError("tree_reduce needs at least one lane")
    if n & (n - 1):
        raise ValueError("lane count must be a power of two")
    stride = 1
    while stride < n:
        for k in range(0, n, 2 * stride):
            vals[k] = vals[k] + vals[k + stride]
        stride *= 2
    return vals[0]


# ---------------------------------------------------------------------------
# task assignments

def _stage_items(flat: FlatDesign) -> dict:
    """Per-net work items per condition, by stage."""
    return {
        "loads": flat.net_m,
        "delays": flat.net_m,
        "impulses": flat.net_m,
        "forward": flat.net_a + flat.net_m,
        "backward": flat.net_o + flat.net_m,
    }


# CTE kernels: the RC kernel fuses loads/delays/impulses (3 items per task);
# forward and backward are their own task pools (1 item per task).
_CTE_KERNELS = (
    ("rc", "loads", 3, ("loads", "delays", "impulses")),
    ("forward", "forward", 1, ("forward",)),
    ("backward", "backward", 1, ("backward",)),
)


@dataclass
class TaskAssignment:
    """Mapping of work items to simulated warps/blocks for one design."""

    scheme: str
    geometry: WarpGeometry
    block_size: int
    level_nets: list                  # per level: int64 array of net ids
    n_nets: int
    n_pins: int
    rescheduling_steps: int = 0

    def iter_warps_rc(self, flat: FlatDesign):
        """Yield (warp_label, per-lane item lists) for the RC workload, each
        item a (net, pin, condition) triple.  Used by coverage oracles; large
        designs should rely on the aggregate counts instead."""
        geo = self.geometry
        if self.scheme == NET_BASED:
            if geo.net_based_parallel_conditions:
                npw = geo.warp_size // geo.x_dim
                for li, nets in enumerate(self.level_nets):
                    for w0 in range(0, len(nets), npw):
                        chunk = nets[w0:w0 + npw]
                        lanes = []
                        for net in chunk:
                            s, e = flat.net_ptr[net], flat.net_ptr[net + 1]
                            for c in range(geo.x_dim):
                                lanes.append([(int(net), int(flat.mem_pin[i]), c)
                                              for i in range(s, e)])
                        yield (f"L{li}W{w0 // npw}", lanes)
            else:
                for li, nets in enumerate(self.level_nets):
                    for w0 in range(0, len(nets), geo.warp_size):
                        chunk = nets[w0:w0 + geo.warp_size]
                        lanes = []
                        for net in chunk:
                            s, e = flat.net_ptr[net], flat.net_ptr[net + 1]
                            lanes.append([(int(net), int(flat.mem_pin[i]), c)
                                          for i in range(s, e) for c in range(4)])
                        yield (f"L{li}W{w0 // geo.warp_size}", lanes)
        elif self.scheme == PIN_BASED:
            for li, nets in enumerate(self.level_nets):
                for net in nets:
                    s, e = flat.net_ptr[net], flat.net_ptr[net + 1]
                    m = e - s
                    lanes = []
                    for c in range(geo.x_dim):
                        for y in range(geo.y_dim):
                            lanes.append([(int(net), int(flat.mem_pin[s + i]), c)
                                          for i in range(y, m, geo.y_dim)])
                    yield (f"L{li}N{net}", lanes)
        elif self.scheme == CTE:
            B = self.block_size
            for li, nets in enumerate(self.level_nets):
                for b0 in range(0, len(nets), B):
                    chunk = nets[b0:b0 + B]
                    work = 4 * flat.net_m[chunk]
                    prefix = np.concatenate([exclusive_scan(work), [int(work.sum())]])
                    total = int(prefix[-1])
                    lanes = [[] for _ in range(B)]
                    for task in range(total):
                        t = lower_bound(prefix, task)
                        net = int(chunk[t])
                        off = task - int(prefix[t])
                        pin = int(flat.mem_pin[flat.net_ptr[net] + off // 4])
                        lanes[task % B].append((net, pin, off % 4))
                    for w0 in range(0, B, geo.warp_size):
                        yield (f"L{li}B{b0 // B}W{w0 // geo.warp_size}",
                               lanes[w0:w0 + geo.warp_size])
        else:
            raise ValueError(f"unknown scheme {self.scheme!r}")

    def check_coverage(self, flat: FlatDesign):
        """Cheap structural verification that the assignment belongs to this
        design and accounts for every (member pin x condition) item."""
        if self.n_nets != flat.n_nets or self.n_pins != flat.n_pins:
            raise CoverageError("assignment was built for a different design")
        covered = sum(int(flat.net_m[nets].sum()) for nets in self.level_nets)
        if covered != len(flat.mem_pin):
            raise CoverageError(
                f"assignment covers {covered} member pins, design has {len(flat.mem_pin)}")


def _level_net_arrays(flat: FlatDesign):
    return [flat.schedule.levels[li] for li in range(flat.n_levels)]


def assign_net_based(flat: FlatDesign, geometry: WarpGeometry | None = None) -> TaskAssignment:
    geo = geometry or WarpGeometry()
    return TaskAssignment(NET_BASED, geo, geo.default_block_size,
                          _level_net_arrays(flat), flat.n_nets, flat.n_pins)


def assign_pin_based(flat: FlatDesign, geometry: WarpGeometry | None = None) -> TaskAssignment:
    geo = geometry or WarpGeometry()
    return TaskAssignment(PIN_BASED, geo, geo.default_block_size,
                          _level_net_arrays(flat), flat.n_nets, flat.n_pins)


def assign_cte(flat: FlatDesign, block_size: int | None = None,
               geometry: WarpGeometry | None = None) -> TaskAssignment:
    geo = geometry or WarpGeometry()
    B = block_size if block_size is not None else geo.default_block_size
    if B < geo.warp_size or B % geo.warp_size:
        raise ValueError("block_size must be a positive multiple of warp_size")
    ta = TaskAssignment(CTE, geo, B, _level_net_arrays(flat), flat.n_nets, flat.n_pins)
    items = _stage_items(flat)
    steps = 0
    per_trip = search_step_count(B + 1)
    for nets in ta.level_nets:
        for b0 in range(0, len(nets), B):
            chunk = nets[b0:b0 + B]
            for _, item_key, _, _ in _CTE_KERNELS:
                T = int(4 * items[item_key][chunk].sum())
                steps += scan_step_count(B)
                trips = _cte_trips(T, B, geo.warp_size)
                steps += int(trips.sum()) * per_trip
    ta.rescheduling_steps = steps
    return ta


def _cte_trips(T: int, B: int, warp_size: int) -> np.ndarray:
    """Per-warp lockstep trip counts when B lanes stride a pool of T tasks."""
    w = np.arange(B // warp_size, dtype=np.int64)
    rem = T - warp_size * w
    return np.maximum(0, (rem + B - 1) // B)


# ---------------------------------------------------------------------------
# cost evaluation

@dataclass
class CostReport:
    scheme: str
    total_cycles: float
    useful_lane_cycles: float
    lane_utilization: float
    stage_cycles: dict
    level_kind_cycles: np.ndarray   # (n_levels, 3): net_rc, forward, backward
    rescheduling_steps: int
    n_warps: int
    work_lane_cycles: float         # utilization denominator (x warp_size)

    def summary_row(self):
        return {
            "scheme": self.scheme,
            "total_cycles": self.total_cycles,
            "useful_lane_cycles": self.useful_lane_cycles,
            "lane_utilization": self.lane_utilization,
            "rescheduling_steps": self.rescheduling_steps,
            "n_warps": self.n_warps,
            **{f"cycles_{k}": v for k, v in self.stage_cycles.items()},
        }


def _chunk_max(arr: np.ndarray, size: int) -> np.ndarray:
    n = len(arr)
    if n == 0:
        return np.zeros(0, dtype=arr.dtype)
    pad = (-n) % size
    if pad:
        arr = np.concatenate([arr, np.zeros(pad, dtype=arr.dtype)])
    return arr.reshape(-1, size).max(axis=1)


def evaluate_cost(flat: FlatDesign, assignment: TaskAssignment,
                  cost_model: CostModel | None = None) -> CostReport:
    """Deterministic cycle accounting for one assignment."""
    cm = cost_model or CostModel()
    geo = assignment.geometry
    items = _stage_items(flat)
    c = cm.cycles_per_item
    n_levels = flat.n_levels
    stage_cycles = {k: 0.0 for k in STAGES}
    stage_cycles.update({k: 0.0 for k in OVERHEAD_KEYS})
    level_kind = np.zeros((n_levels, 3))
    useful = 0.0
    work_lane = 0.0   # utilization denominator: work-phase cycles x warp_size
    n_warps = 0
    red_steps = int(math.ceil(math.log2(geo.y_dim))) if geo.y_dim > 1 else 0
    stage_kind = {"loads": KIND_RC, "delays": KIND_RC, "impulses": KIND_RC,
                  "forward": KIND_FORWARD, "backward": KIND_BACKWARD}

    for li, nets in enumerate(assignment.level_nets):
        if assignment.scheme == NET_BASED:
            for stage in STAGES:
                it = items[stage][nets]
                if geo.net_based_parallel_conditions:
                    warp_cycles = _chunk_max(it, geo.warp_size // geo.x_dim) * c
                else:
                    warp_cycles = _chunk_max(4 * it, geo.warp_size) * c
                w = float(warp_cycles.sum())
                stage_cycles[stage] += w
                level_kind[li, stage_kind[stage]] += w
                useful += float(4 * it.sum()) * c
                work_lane += w * geo.warp_size
                n_warps += int((warp_cycles > 0).sum())
            launch = 5 * cm.kernel_launch_cost
            stage_cycles["launch"] += launch
            level_kind[li, KIND_RC] += 3 * cm.kernel_launch_cost
            level_kind[li, KIND_FORWARD] += cm.kernel_launch_cost
            level_kind[li, KIND_BACKWARD] += cm.kernel_launch_cost
        elif assignment.scheme == PIN_BASED:
            for stage in STAGES:
                it = items[stage][nets]
                trips = (it + geo.y_dim - 1) // geo.y_dim
                w = float(trips.sum()) * c
                stage_cycles[stage] += w
                level_kind[li, stage_kind[stage]] += w
                useful += float(4 * it.sum()) * c
                work_lane += w * geo.warp_size
                n_warps += int((trips > 0).sum())
                if stage == "loads":
                    red = float((flat.net_m[nets] > 0).sum()) * red_steps * cm.reduction_step_cost
                elif stage == "forward":
                    red = float((flat.net_a[nets] > 0).sum()) * red_steps * cm.reduction_step_cost
                elif stage == "backward":
                    red = float((flat.net_m[nets] > 0).sum()) * red_steps * cm.reduction_step_cost
                else:
                    red = 0.0
                stage_cycles["reduction"] += red
                level_kind[li, stage_kind[stage]] += red
            launch = 5 * cm.kernel_launch_cost
            stage_cycles["launch"] += launch
            level_kind[li, KIND_RC] += 3 * cm.kernel_launch_cost
            level_kind[li, KIND_FORWARD] += cm.kernel_launch_cost
            level_kind[li, KIND_BACKWARD] += cm.kernel_launch_cost
        elif assignment.scheme == CTE:
            B = assignment.block_size
            per_trip = search_step_count(B + 1)
            block_red = int(math.ceil(math.log2(B))) if B > 1 else 0
            for kname, item_key, pti, stages in _CTE_KERNELS:
                kind = stage_kind[stages[0]]
                for b0 in range(0, len(nets), B):
                    chunk = nets[b0:b0 + B]
                    T = int(4 * items[item_key][chunk].sum())
                    trips = _cte_trips(T, B, geo.warp_size)
                    trip_total = int(trips.sum())
                    for stage in stages:
                        w = trip_total * c
                        stage_cycles[stage] += w
                        level_kind[li, kind] += w
                        work_lane += w * geo.warp_size
                    useful += float(4 * items[item_key][chunk].sum()) * pti * c
                    over = (scan_step_count(B) * cm.scan_step_cost
                            + trip_total * per_trip * cm.search_step_cost
                            + block_red * cm.reduction_step_cost)
                    stage_cycles["reduction"] += over
                    level_kind[li, kind] += over
                    n_warps += int((trips > 0).sum())
                level_kind[li, kind] += cm.kernel_launch_cost
                stage_cycles["launch"] += cm.kernel_launch_cost
        else:
            raise ValueError(f"unknown scheme {assignment.scheme!r}")

    total = float(sum(stage_cycles.values()))
    util = useful / (work_lane if work_lane > 0 else 1.0)
    return CostReport(
        scheme=assignment.scheme,
        total_cycles=total,
        useful_lane_cycles=useful,
        lane_utilization=util,
        stage_cycles=stage_cycles,
        level_kind_cycles=level_kind,
        rescheduling_steps=assignment.rescheduling_steps,
        n_warps=n_warps,
        work_lane_cycles=work_lane,
    )


# ---------------------------------------------------------------------------
# scheduled execution

def run_engine(flat: FlatDesign, reduce_width: int | None = None,
               kernels=None) -> TimingState:
    """Run the backend level kernels over the whole design: RC and forward
    per level in order, backward in reverse, then slacks."""
    state = TimingState.init(flat)
    w = reduce_width if reduce_width is not None else 8
    for li in range(flat.n_levels):
        nets = flat.schedule.levels[li]
        backend.rc_level(flat, state, nets, reduce_width=w, kernels=kernels)
        backend.forward_level(flat, state, nets, kernels=kernels)
    for li in range(flat.n_levels - 1, -1, -1):
        backend.backward_level(flat, state, flat.schedule.levels[li], kernels=kernels)
    state.slack[:, 0:2] = state.arrival[:, 0:2] - state.required[:, 0:2]
    state.slack[:, 2:4] = state.required[:, 2:4] - state.arrival[:, 2:4]
    return state


def execute_scheduled(design, assignment: TaskAssignment,
                      cost_model: CostModel | None = None,
                      state: TimingState | None = None):
    """Execute the analysis under a task assignment: returns the TimingState
    (identical for every scheme; the shared kernels fix the operation order)
    and the scheme's CostReport."""
    flat = design if isinstance(design, FlatDesign) else flatten(design)
    assignment.check_coverage(flat)
    if state is None:
        state = run_engine(flat, reduce_width=assignment.geometry.y_dim)
    report = evaluate_cost(flat, assignment, cost_model)
    return state, report


def simulate_analysis(design, scheme: str, geometry: WarpGeometry | None = None,
                      cost_model: CostModel | None = None,
                      block_size: int | None = None):
    flat = design if isinstance(design, FlatDesign) else flatten(design)
    geo = geometry or WarpGeometry()
    if scheme == NET_BASED:
        ta = assign_net_based(flat, geo)
    elif scheme == PIN_BASED:
        ta = assign_pin_based(flat, geo)
    elif scheme == CTE:
        ta = assign_cte(flat, block_size, geo)
    else:
        raise ValueError(f"unknown scheme {scheme!r} (expected one of {SCHEMES})")
    return execute_scheduled(flat, ta, cost_model)


# ---------------------------------------------------------------------------
# scheme comparison

@dataclass
class SchemeResult:
    report: CostReport
    values_within_tol: bool
    max_rel_dev: float
    exact_vs_tree_oracle: bool


@dataclass
class ComparisonReport:
    results: dict                    # scheme -> SchemeResult
    tns: float
    wns: float
    n_levels: int

    @property
    def all_values_ok(self):
        return all(r.values_within_tol for r in self.results.values())


def _max_rel_dev(a: TimingState, b: TimingState) -> float:
    worst = 0.0
    for f in ("load", "net_delay", "impulse", "slew", "arrival", "required", "slack"):
        x = getattr(a, f)
        y = getattr(b, f)
        finite = np.isfinite(x) & np.isfinite(y)
        if not np.array_equal(np.isfinite(x), np.isfinite(y)):
            return float("inf")
        d = np.abs(x[finite] - y[finite])
        scale = np.maximum(np.abs(y[finite]), 1e-30)
        if d.size:
            worst = max(worst, float((d / scale).max()))
    return worst


def compare_schemes(design, geometry: WarpGeometry | None = None,
                    cost_model: CostModel | None = None,
                    rtol: float = 1e-6, _tamper=None) -> ComparisonReport:
    """Run all three schemes, check their values against the reference
    (default fold order, tolerance rtol) and against the tree-order oracle
    (bit-exact).  _tamper is a test hook mutating the engine state before
    the checks."""
    flat = design if isinstance(design, FlatDesign) else flatten(design)
    geo = geometry or WarpGeometry()
    ref = run_reference(flat)
    ref_tree = run_reference(flat, reduce_mode="tree", reduce_width=geo.y_dim)
    engine_state = run_engine(flat, reduce_width=geo.y_dim)
    if _tamper is not None:
        _tamper(engine_state)
    exact = all(
        np.array_equal(getattr(engine_state, f), getattr(ref_tree, f))
        for f in ("load", "net_delay", "impulse", "slew", "arrival", "required", "slack"))
    results = {}
    for scheme in SCHEMES:
        if scheme == NET_BASED:
            ta = assign_net_based(flat, geo)
        elif scheme == PIN_BASED:
            ta = assign_pin_based(flat, geo)
        else:
            ta = assign_cte(flat, None, geo)
        report = evaluate_cost(flat, ta, cost_model)
        dev = _max_rel_dev(engine_state, ref)
        results[scheme] = SchemeResult(
            report=report,
            values_within_tol=bool(dev <= rtol),
            max_rel_dev=dev,
            exact_vs_tree_oracle=exact,
        )
    return ComparisonReport(
        results=results,
        tns=_tns(engine_state, flat),
        wns=_wns(engine_state, flat),
        n_levels=flat.n_levels,
    )
