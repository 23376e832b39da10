"""Static timing analysis with a lockstep warp-execution cost simulator,
a differentiable timing layer, and a two-stream operation-fusion scheduler."""

__version__ = "0.1.0"

from .netlist import (  # noqa: F401
    N_COND, EARLY_RISE, EARLY_FALL, LATE_RISE, LATE_FALL,
    COND_NAMES, EARLY_CONDS, LATE_CONDS,
    Lut2D, TimingArc, Cell, Net, PrimaryInput, Endpoint, Design,
    Violation, DesignFormatError, DesignSemanticsError,
    validate, build_csr, parse_design, serialize_design,
)
from .generator import (  # noqa: F401
    GeneratorConfig, FanoutDist, generate_design, fixed, uniform, power_law,
)
from .flatten import FlatDesign, LevelSchedule, flatten, levelize, CycleError  # noqa: F401
from .sta import (  # noqa: F401
    TimingState, run_reference, interpolate_lut,
    compute_net_loads, compute_net_delays, compute_net_impulses,
    propagate_arrival, propagate_required, tns, wns,
)
from .warp import (  # noqa: F401
    WarpGeometry, CostModel, CostReport, TaskAssignment,
    NET_BASED, PIN_BASED, CTE, SCHEMES,
    exclusive_scan, lower_bound, tree_reduce,
    assign_net_based, assign_pin_based, assign_cte,
    execute_scheduled, evaluate_cost, simulate_analysis, compare_schemes,
)
from .diff import (  # noqa: F401
    LseConfig, GradientState, lse, lse_grad,
    forward_lse_arrival, backward_tns_grad, timing_gradients,
    finite_diff_check, FiniteDiffReport,
)
from .fusion import (  # noqa: F401
    Kernel, EventEdge, KernelGraph, FusionConfig, ScheduleResult,
    build_kernel_graph, schedule_sequential, schedule_fused,
    execute_sequential, execute_fused, kernel_costs_from_report,
)
from .backend import backend_name, available_backends  # noqa: F401
