"""Two-stream operation-fusion scheduler: kernel dependency graph over the
level schedule, sequential and fused (two-lane, event-synchronized)
makespans, and the actual fused execution of the hard STA and the smooth
gradient passes.

Fusion changes scheduling, never dataflow: the fused executors run the same
per-level kernel bodies as the sequential pipeline, so numerical outputs are
bit-identical across modes by construction.  The dependency discipline is
checked at runtime anyway.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field

import numpy as np

from .flatten import FlatDesign, flatten
from .sta import TimingState
from . import backend
from .warp import (WarpGeometry, CostModel, assign_pin_based, evaluate_cost,
                   KIND_RC, KIND_FORWARD, KIND_BACKWARD)
from .diff import (GradientState, LseConfig, default_gamma, _endpoint_loss,
                   _lse_forward_level, _grad_backward_level)

STA_STREAM = "sta"
GRAD_STREAM = "grad"
STA_KINDS = ("net_rc", "cell_delay_at", "slack_bwd")
GRAD_KINDS = ("lse_fwd", "grad_bwd")
MODES = ("interleaved", "threads")


class FusionError(RuntimeError):
    """Dependency discipline violated during fused execution."""


@dataclass
class Kernel:
    id: str
    stream: str
    kind: str
    level: int
    cost: float

    def __post_init__(self):
        if self.cost < 0:
            raise ValueError("kernel cost must be non-negative")
        sta = self.kind in STA_KINDS
        if sta != (self.stream == STA_STREAM):
            raise ValueError(f"kind {self.kind!r} does not belong to stream {self.stream!r}")


@dataclass
class EventEdge:
    src: str
    dst: str


@dataclass
class FusionConfig:
    granularity: int = 10
    contention: float = 1.0
    mode: str = "interleaved"
    gamma: float | None = None
    loss: str = "hinge"
    reduce_width: int = 8

    def __post_init__(self):
        if self.granularity < 1:
            raise ValueError("granularity must be >= 1")
        if self.contention < 1.0:
            raise ValueError("contention factor must be >= 1.0")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")


@dataclass
class KernelGraph:
    kernels: dict                    # id -> Kernel
    edges: list                      # cross-stream EventEdges
    sta_order: list                  # kernel ids in sta stream order
    grad_order: list                 # kernel ids in grad stream order
    event_granularity: int
    n_levels: int

    def cross_deps(self, kid: str) -> list:
        return [e.src for e in self.edges if e.dst == kid]

    def is_acyclic(self) -> bool:
        """Topological check over stream chains plus cross edges."""
        succ = {kid: [] for kid in self.kernels}
        indeg = {kid: 0 for kid in self.kernels}
        for order in (self.sta_order, self.grad_order):
            for a, b in zip(order, order[1:]):
                succ[a].append(b)
                indeg[b] += 1
        for e in self.edges:
            succ[e.src].append(e.dst)
            indeg[e.dst] += 1
        ready = [k for k, d in indeg.items() if d == 0]
        seen = 0
        while ready:
            k = ready.pop()
            seen += 1
            for s in succ[k]:
                indeg[s] -= 1
                if indeg[s] == 0:
                    ready.append(s)
        return seen == len(self.kernels)


def build_kernel_graph(schedule, costs, granularity: int = 10) -> KernelGraph:
    """Kernel streams over a LevelSchedule (or a level count) with one cross
    event per granularity-g level group: the group's lse_fwd work is gated on
    the cell delay kernel of the group's last level.  costs maps
    (kind, level) -> cycles and must cover every kernel."""
    n_levels = schedule if isinstance(schedule, int) else schedule.n_levels
    if granularity < 1:
        raise ValueError("granularity must be >= 1")

    def kernel(kind, li):
        stream = STA_STREAM if kind in STA_KINDS else GRAD_STREAM
        try:
            cost = float(costs[(kind, li)])
        except KeyError:
            raise ValueError(f"missing cost entry for ({kind!r}, level {li})")
        return Kernel(id=f"{kind}:{li}", stream=stream, kind=kind, level=li, cost=cost)

    kernels = {}
    sta_order = []
    grad_order = []
    for li in range(n_levels):
        for kind in ("net_rc", "cell_delay_at"):
            k = kernel(kind, li)
            kernels[k.id] = k
            sta_order.append(k.id)
    for li in range(n_levels - 1, -1, -1):
        k = kernel("slack_bwd", li)
        kernels[k.id] = k
        sta_order.append(k.id)
    for li in range(n_levels):
        k = kernel("lse_fwd", li)
        kernels[k.id] = k
        grad_order.append(k.id)
    for li in range(n_levels - 1, -1, -1):
        k = kernel("grad_bwd", li)
        kernels[k.id] = k
        grad_order.append(k.id)

    edges = []
    for g0 in range(0, n_levels, granularity):
        g1 = min(g0 + granularity, n_levels) - 1
        edges.append(EventEdge(f"cell_delay_at:{g1}", f"lse_fwd:{g0}"))
    if n_levels:
        last = n_levels - 1
        edges.append(EventEdge(f"slack_bwd:{last}", f"grad_bwd:{last}"))
    return KernelGraph(kernels=kernels, edges=edges, sta_order=sta_order,
                       grad_order=grad_order, event_granularity=granularity,
                       n_levels=n_levels)


# ---------------------------------------------------------------------------
# makespan schedules

@dataclass
class ScheduleResult:
    records: list                    # {id, stream, kind, level, start, finish}
    makespan: float
    overlap_fraction: float
    sta_finish: float
    grad_cycles: float
    overlapped_grad_cycles: float

    def start(self, kid):
        return self._times()[kid][0]

    def finish(self, kid):
        return self._times()[kid][1]

    def _times(self):
        got = getattr(self, "_times_cache", None)
        if got is None:
            got = {r["id"]: (r["start"], r["finish"]) for r in self.records}
            self._times_cache = got
        return got


def _result_from_times(graph: KernelGraph, times: dict) -> ScheduleResult:
    records = []
    sta_fin = 0.0
    for kid in graph.sta_order + graph.grad_order:
        k = graph.kernels[kid]
        s, f = times[kid]
        records.append({"id": kid, "stream": k.stream, "kind": k.kind,
                        "level": k.level, "start": s, "finish": f})
        if k.stream == STA_STREAM:
            sta_fin = max(sta_fin, f)
    grad_cyc = 0.0
    overlapped = 0.0
    for r in records:
        if r["stream"] == GRAD_STREAM:
            grad_cyc += r["finish"] - r["start"]
            overlapped += max(0.0, min(r["finish"], sta_fin) - r["start"])
    makespan = max((f for _, f in times.values()), default=0.0)
    return ScheduleResult(
        records=records,
        makespan=makespan,
        overlap_fraction=(overlapped / grad_cyc) if grad_cyc > 0 else 0.0,
        sta_finish=sta_fin,
        grad_cycles=grad_cyc,
        overlapped_grad_cycles=overlapped,
    )


def schedule_sequential(graph: KernelGraph) -> ScheduleResult:
    """Single lane: the whole sta stream, then the whole grad stream."""
    times = {}
    t = 0.0
    for kid in graph.sta_order + graph.grad_order:
        c = graph.kernels[kid].cost
        times[kid] = (t, t + c)
        t += c
    return _result_from_times(graph, times)


def schedule_fused(graph: KernelGraph, contention: float = 1.0) -> ScheduleResult:
    """Two lanes, one per stream; a kernel starts when its lane is free and
    its incoming events have fired.  The sta lane has no incoming events and
    never waits.  Grad kernels that start while the sta lane is still active
    run at `contention` times their cost."""
    times = {}
    t = 0.0
    for kid in graph.sta_order:
        c = graph.kernels[kid].cost
        times[kid] = (t, t + c)
        t += c
    sta_total = t
    t = 0.0
    for kid in graph.grad_order:
        start = t
        for dep in graph.cross_deps(kid):
            start = max(start, times[dep][1])
        c = graph.kernels[kid].cost
        if start < sta_total:
            c *= contention
        times[kid] = (start, start + c)
        t = start + c
    return _result_from_times(graph, times)


def check_schedule(graph: KernelGraph, result: ScheduleResult) -> list:
    """Schedule validity oracle: same-stream kernels must not overlap, every
    cross edge must be satisfied, makespan must equal the last finish."""
    problems = []
    for order in (graph.sta_order, graph.grad_order):
        for a, b in zip(order, order[1:]):
            if result.start(b) < result.finish(a):
                problems.append(f"stream order violated: {b} starts before {a} ends")
    for e in graph.edges:
        if result.start(e.dst) < result.finish(e.src):
            problems.append(f"event edge violated: {e.dst} starts before {e.src} ends")
    last = max((r["finish"] for r in result.records), default=0.0)
    if result.makespan != last:
        problems.append("makespan does not equal the last kernel finish")
    return problems


# ---------------------------------------------------------------------------
# fused execution

def kernel_costs_from_report(report) -> dict:
    """Per-(kind, level) cycles from a warp cost report: sta kinds take their
    own columns; the grad kernels are estimated at the cost of the sta kernel
    of the same shape (lse_fwd ~ cell_delay_at, grad_bwd ~ slack_bwd)."""
    costs = {}
    lk = report.level_kind_cycles
    for li in range(lk.shape[0]):
        costs[("net_rc", li)] = float(lk[li, KIND_RC])
        costs[("cell_delay_at", li)] = float(lk[li, KIND_FORWARD])
        costs[("slack_bwd", li)] = float(lk[li, KIND_BACKWARD])
        costs[("lse_fwd", li)] = float(lk[li, KIND_FORWARD])
        costs[("grad_bwd", li)] = float(lk[li, KIND_BACKWARD])
    return costs


class _PipelineRun:
    """Shared state and kernel bodies for one design's fused/sequential run."""

    def __init__(self, flat: FlatDesign, cfg: FusionConfig):
        self.flat = flat
        self.cfg = cfg
        self.gamma = cfg.gamma if cfg.gamma is not None else default_gamma(flat.clock_period)
        LseConfig(self.gamma)
        self.state = TimingState.init(flat)
        A = len(flat.arc_from)
        M = len(flat.mem_pin)
        self.lse_at = self.state.arrival[:, 2:4].copy()
        self.weights = np.zeros((A, 2))
        self.d_arc = np.zeros((A, 2))
        self.d_edge = np.zeros((M, 2))
        self.adj = np.zeros((flat.n_pins, 2))
        self.loss = 0.0
        self.done = set()
        self.lock = threading.Lock()

    def execute(self, kernel: Kernel, deps: list):
        with self.lock:
            missing = [d for d in deps if d not in self.done]
        if missing:
            raise FusionError(
                f"kernel {kernel.id} ran before its dependencies {missing}")
        flat = self.flat
        li = kernel.level
        nets = flat.schedule.levels[li]
        if kernel.kind == "net_rc":
            backend.rc_level(flat, self.state, nets, reduce_width=self.cfg.reduce_width)
        elif kernel.kind == "cell_delay_at":
            backend.forward_level(flat, self.state, nets)
        elif kernel.kind == "slack_bwd":
            backend.backward_level(flat, self.state, nets)
        elif kernel.kind == "lse_fwd":
            arc_d = self.state.arc_delay[:, 2:4]
            path_of = lambda mi: self.state.net_delay[flat.mem_pin[mi]][:, 2:4]
            _lse_forward_level(flat, np.float64(self.gamma), self.lse_at, arc_d,
                               path_of, li, weights_out=self.weights)
        elif kernel.kind == "grad_bwd":
            if li == flat.n_levels - 1:
                L, seed = _endpoint_loss(flat, self.lse_at, self.gamma, self.cfg.loss)
                self.loss = float(L)
                self.adj[:] = seed
            _grad_backward_level(flat, self.adj, self.d_arc, self.d_edge,
                                 self.weights, li)
        else:
            raise ValueError(f"unknown kernel kind {kernel.kind!r}")
        with self.lock:
            self.done.add(kernel.id)

    def finalize(self):
        st = self.state
        st.slack[:, 0:2] = st.arrival[:, 0:2] - st.required[:, 0:2]
        st.slack[:, 2:4] = st.required[:, 2:4] - st.arrival[:, 2:4]
        if self.flat.n_levels == 0:
            L, seed = _endpoint_loss(self.flat, self.lse_at, self.gamma, self.cfg.loss)
            self.loss = float(L)
            self.adj[:] = seed
        gstate = GradientState(
            gamma=self.gamma,
            loss_kind=self.cfg.loss,
            lse_arrival=self.lse_at,
            arc_weights=self.weights,
            d_arc=self.d_arc,
            d_edge=self.d_edge,
            adjoint=self.adj,
            loss=self.loss,
            flat=self.flat,
        )
        return st, gstate


def _deps_of(graph: KernelGraph, kid: str, stream_prev: dict) -> list:
    deps = list(graph.cross_deps(kid))
    prev = stream_prev.get(kid)
    if prev is not None:
        deps.append(prev)
    return deps


def _stream_prev_map(graph: KernelGraph) -> dict:
    prev = {}
    for order in (graph.sta_order, graph.grad_order):
        for a, b in zip(order, order[1:]):
            prev[b] = a
    return prev


def _run_interleaved(run: _PipelineRun, graph: KernelGraph, order: list):
    prev = _stream_prev_map(graph)
    for kid in order:
        run.execute(graph.kernels[kid], _deps_of(graph, kid, prev))


def _run_threads(run: _PipelineRun, graph: KernelGraph):
    prev = _stream_prev_map(graph)
    events = {kid: threading.Event() for kid in graph.kernels}
    failures = []

    def worker(order):
        try:
            for kid in order:
                for dep in graph.cross_deps(kid):
                    events[dep].wait()
                run.execute(graph.kernels[kid], _deps_of(graph, kid, prev))
                events[kid].set()
        except BaseException as exc:
            failures.append(exc)
            for kid in order:
                events[kid].set()

    threads = [threading.Thread(target=worker, args=(graph.sta_order,)),
               threading.Thread(target=worker, args=(graph.grad_order,))]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    if failures:
        raise failures[0]


def _interleaved_order(graph: KernelGraph, result: ScheduleResult) -> list:
    """Fixed topological order for the deterministic mode: by simulated start
    time, sta lane first on ties, stream position as the final key."""
    pos = {kid: i for i, kid in enumerate(graph.sta_order)}
    pos.update({kid: i for i, kid in enumerate(graph.grad_order)})
    rank = {STA_STREAM: 0, GRAD_STREAM: 1}
    recs = sorted(result.records,
                  key=lambda r: (r["start"], rank[r["stream"]], pos[r["id"]]))
    return [r["id"] for r in recs]


def execute_sequential(design, schedule=None, geometry: WarpGeometry | None = None,
                       cfg: FusionConfig | None = None,
                       cost_model: CostModel | None = None):
    """The baseline pipeline: every sta kernel in stream order, then every
    grad kernel, single lane.  Same kernel bodies as the fused modes."""
    flat = design if isinstance(design, FlatDesign) else flatten(design, schedule)
    cfg = cfg or FusionConfig()
    graph = _graph_for(flat, geometry, cfg, cost_model)
    run = _PipelineRun(flat, cfg)
    _run_interleaved(run, graph, graph.sta_order + graph.grad_order)
    state, gstate = run.finalize()
    return state, gstate, schedule_sequential(graph)


def execute_fused(design, schedule=None, geometry: WarpGeometry | None = None,
                  cfg: FusionConfig | None = None,
                  cost_model: CostModel | None = None):
    """Fused pipeline under the event discipline; cfg.mode picks the
    deterministic interleaving or the two-worker concurrent execution."""
    flat = design if isinstance(design, FlatDesign) else flatten(design, schedule)
    cfg = cfg or FusionConfig()
    graph = _graph_for(flat, geometry, cfg, cost_model)
    result = schedule_fused(graph, cfg.contention)
    run = _PipelineRun(flat, cfg)
    if cfg.mode == "interleaved":
        _run_interleaved(run, graph, _interleaved_order(graph, result))
    else:
        _run_threads(run, graph)
    state, gstate = run.finalize()
    return state, gstate, result


def _graph_for(flat: FlatDesign, geometry, cfg: FusionConfig,
               cost_model) -> KernelGraph:
    geo = geometry or WarpGeometry()
    report = evaluate_cost(flat, assign_pin_based(flat, geo), cost_model)
    return build_kernel_graph(flat.n_levels, kernel_costs_from_report(report),
                              cfg.granularity)
