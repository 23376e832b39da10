"""Two-stream kernel scheduling and the fused execution pipeline."""

import numpy as np
import pytest

from stasim import (GeneratorConfig, generate_design, flatten, power_law,
                    run_reference, uniform)
from stasim.diff import timing_gradients
from stasim.fusion import (FusionConfig, FusionError, Kernel, KernelGraph,
                           _PipelineRun, build_kernel_graph, check_schedule,
                           execute_fused, execute_sequential,
                           kernel_costs_from_report, schedule_fused,
                           schedule_sequential)
from stasim.warp import assign_pin_based, evaluate_cost, run_engine
from conftest import chain_design

STATE_FIELDS = ("load", "net_delay", "impulse", "slew", "arrival",
                "required", "slack", "arc_delay")
GSTATE_FIELDS = ("lse_arrival", "arc_weights", "d_arc", "d_edge", "adjoint")


def flat_costs(n_levels, sta=10.0, grad=5.0):
    """Cost table putting the whole sta cost on cell_delay_at and the whole
    grad cost on lse_fwd, matching the abstract two-stream examples."""
    costs = {}
    for li in range(n_levels):
        costs[("net_rc", li)] = 0.0
        costs[("cell_delay_at", li)] = sta
        costs[("slack_bwd", li)] = 0.0
        costs[("lse_fwd", li)] = grad
        costs[("grad_bwd", li)] = 0.0
    return costs


# ---------------------------------------------------------------------------
# graph construction

def test_cross_edges_per_level_granularity_one():
    g = build_kernel_graph(3, flat_costs(3), granularity=1)
    cross = [e for e in g.edges if e.src.startswith("cell_delay_at")]
    assert sorted((e.src, e.dst) for e in cross) == [
        ("cell_delay_at:0", "lse_fwd:0"),
        ("cell_delay_at:1", "lse_fwd:1"),
        ("cell_delay_at:2", "lse_fwd:2"),
    ]
    assert g.is_acyclic()


def test_cross_events_granularity_ten():
    g = build_kernel_graph(30, flat_costs(30), granularity=10)
    cross = [e for e in g.edges if e.src.startswith("cell_delay_at")]
    assert len(cross) == 3  # one event per 10-level group
    assert sorted((e.src, e.dst) for e in cross) == [
        ("cell_delay_at:19", "lse_fwd:10"),
        ("cell_delay_at:29", "lse_fwd:20"),
        ("cell_delay_at:9", "lse_fwd:0"),
    ]


def test_graph_stream_orders():
    g = build_kernel_graph(3, flat_costs(3), granularity=1)
    assert g.sta_order == ["net_rc:0", "cell_delay_at:0", "net_rc:1",
                           "cell_delay_at:1", "net_rc:2", "cell_delay_at:2",
                           "slack_bwd:2", "slack_bwd:1", "slack_bwd:0"]
    assert g.grad_order == ["lse_fwd:0", "lse_fwd:1", "lse_fwd:2",
                            "grad_bwd:2", "grad_bwd:1", "grad_bwd:0"]
    assert any(e.src == "slack_bwd:2" and e.dst == "grad_bwd:2"
               for e in g.edges)


def test_missing_cost_entry_raises():
    costs = flat_costs(3)
    del costs[("lse_fwd", 1)]
    with pytest.raises(ValueError, match="missing cost entry"):
        build_kernel_graph(3, costs, granularity=1)


def test_kernel_validation():
    with pytest.raises(ValueError):
        Kernel("x", "sta", "net_rc", 0, -1.0)
    with pytest.raises(ValueError):
        Kernel("x", "grad", "net_rc", 0, 1.0)  # sta kind on grad stream


# ---------------------------------------------------------------------------
# schedule arithmetic

def test_sequential_example_sum():
    g = build_kernel_graph(3, flat_costs(3, sta=10.0, grad=5.0), granularity=1)
    assert schedule_sequential(g).makespan == 45.0


def test_sequential_zero_grad():
    g = build_kernel_graph(3, flat_costs(3, sta=10.0, grad=0.0), granularity=1)
    assert schedule_sequential(g).makespan == 30.0


def test_fused_example_finishes():
    g = build_kernel_graph(3, flat_costs(3, sta=10.0, grad=5.0), granularity=1)
    res = schedule_fused(g)
    assert [res.finish(f"lse_fwd:{i}") for i in range(3)] == [15.0, 25.0, 35.0]
    assert res.makespan == 35.0
    assert check_schedule(g, res) == []


def test_fused_zero_grad_collapses_to_sta():
    g = build_kernel_graph(4, flat_costs(4, sta=7.0, grad=0.0), granularity=1)
    assert schedule_fused(g).makespan == schedule_sequential(g).makespan == 28.0


def test_fused_dominates_on_random_graphs():
    rng = np.random.default_rng(4)
    for _ in range(60):
        L = int(rng.integers(1, 25))
        costs = {(k, li): float(rng.uniform(0, 5)) if rng.random() > 0.2 else 0.0
                 for li in range(L)
                 for k in ("net_rc", "cell_delay_at", "slack_bwd",
                           "lse_fwd", "grad_bwd")}
        g = build_kernel_graph(L, costs, granularity=int(rng.integers(1, 8)))
        assert g.is_acyclic()
        seq = schedule_sequential(g)
        fus = schedule_fused(g)
        assert fus.makespan <= seq.makespan
        assert check_schedule(g, fus) == []
        assert check_schedule(g, seq) == []
        assert 0.0 <= fus.overlap_fraction <= 1.0


def test_contention_slows_overlap():
    # grad nearly as heavy as sta: stretching overlapped kernels moves the
    # critical path
    g = build_kernel_graph(3, flat_costs(3, sta=10.0, grad=9.0), granularity=1)
    base = schedule_fused(g, contention=1.0)
    slow = schedule_fused(g, contention=2.0)
    assert base.makespan == 39.0
    assert slow.makespan > base.makespan
    assert check_schedule(g, slow) == []


def test_kernel_costs_from_report_mapping():
    d = generate_design(GeneratorConfig(num_cells=60, seed=1))
    flat = flatten(d)
    rep = evaluate_cost(flat, assign_pin_based(flat))
    costs = kernel_costs_from_report(rep)
    for li in range(flat.n_levels):
        assert costs[("net_rc", li)] == rep.level_kind_cycles[li, 0]
        assert costs[("cell_delay_at", li)] == rep.level_kind_cycles[li, 1]
        assert costs[("lse_fwd", li)] == rep.level_kind_cycles[li, 1]
        assert costs[("slack_bwd", li)] == rep.level_kind_cycles[li, 2]
        assert costs[("grad_bwd", li)] == rep.level_kind_cycles[li, 2]


# ---------------------------------------------------------------------------
# pipeline execution

def assert_same_outputs(a, b):
    st_a, gs_a = a[0], a[1]
    st_b, gs_b = b[0], b[1]
    for f in STATE_FIELDS:
        assert np.array_equal(getattr(st_a, f), getattr(st_b, f)), f
    for f in GSTATE_FIELDS:
        assert np.array_equal(getattr(gs_a, f), getattr(gs_b, f)), f
    assert gs_a.loss == gs_b.loss


@pytest.mark.parametrize("mode", ["interleaved", "threads"])
def test_fused_bit_identical_to_sequential(mode):
    d = generate_design(GeneratorConfig(num_cells=120,
                                        fanout=power_law(2.0, 32), seed=6))
    flat = flatten(d)
    seq = execute_sequential(flat)
    fus = execute_fused(flat, cfg=FusionConfig(mode=mode))
    assert_same_outputs(seq, fus)
    assert fus[2].makespan <= seq[2].makespan


def test_fused_matches_direct_pipeline():
    # same values as running the engine and gradients by hand
    d = generate_design(GeneratorConfig(num_cells=90, fanout=uniform(1, 6),
                                        seed=8))
    flat = flatten(d)
    state, gstate, _ = execute_fused(flat)
    ref_state = run_engine(flat, reduce_width=8)
    ref_grad = timing_gradients(flat, state=ref_state)
    for f in STATE_FIELDS:
        assert np.array_equal(getattr(state, f), getattr(ref_state, f)), f
    for f in GSTATE_FIELDS:
        assert np.array_equal(getattr(gstate, f), getattr(ref_grad, f)), f


def test_overlap_positive_on_chain():
    d = chain_design(30)
    _, _, res = execute_fused(d, cfg=FusionConfig(granularity=5))
    assert res.overlap_fraction > 0.0
    assert res.makespan > 0.0


def test_dependency_violation_raises():
    d = chain_design(3)
    flat = flatten(d)
    cfg = FusionConfig()
    graph = build_kernel_graph(
        flat.n_levels,
        kernel_costs_from_report(evaluate_cost(flat, assign_pin_based(flat))),
        cfg.granularity)
    run = _PipelineRun(flat, cfg)
    kern = graph.kernels["lse_fwd:0"]
    with pytest.raises(FusionError):
        run.execute(kern, ["cell_delay_at:0"])  # dep never executed


def test_fused_schedule_result_consistent_with_trace():
    d = generate_design(GeneratorConfig(num_cells=150,
                                        fanout=power_law(2.0, 64), seed=2))
    flat = flatten(d)
    _, _, res = execute_fused(flat)
    sta_rec = [r for r in res.records if r["stream"] == "sta"]
    grad_rec = [r for r in res.records if r["stream"] == "grad"]
    # stream serialization: kernels within one stream never overlap
    for recs in (sta_rec, grad_rec):
        recs = sorted(recs, key=lambda r: r["start"])
        for a, b in zip(recs, recs[1:]):
            assert b["start"] >= a["finish"]
    assert res.makespan == max(r["finish"] for r in res.records)
