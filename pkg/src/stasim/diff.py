"""Differentiable timing layer: LSE smooth-max, smooth arrival propagation
over the same level schedule as the hard pass, reverse-mode gradients of a
total-negative-slack loss, and a finite-difference validator.

Variables are the late-mode arc delays (from the hard pass's LUT cache) and
the per-member net edge delays; only late rise/fall participate.  The outer
per-endpoint hinge is hard max(0, lse_arrival - required) by default, with a
softplus variant behind the `loss` switch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .flatten import FlatDesign, flatten
from .sta import TimingState, run_reference

LATE_COLS = (2, 3)          # late-rise, late-fall in the 4-condition order
COL_NAMES = ("late-rise", "late-fall")
LOSS_KINDS = ("hinge", "softplus")


@dataclass
class LseConfig:
    """Smoothness hyper-parameter for the LSE merge (seconds)."""

    gamma: float

    def __post_init__(self):
        if not (self.gamma > 0.0 and math.isfinite(self.gamma)):
            raise ValueError("gamma must be positive and finite")


def default_gamma(clock_period: float) -> float:
    return 0.01 * clock_period


def lse(xs, cfg: LseConfig) -> float:
    """Smooth max: c + gamma*log(sum exp((x-c)/gamma)) with c = max(xs).
    Exact identity for a single input; never overflows for finite inputs."""
    x = np.asarray(xs, dtype=np.float64)
    if x.size == 0:
        raise ValueError("lse of an empty input")
    c = float(x.max())
    z = np.exp((x - c) / cfg.gamma)
    return c + cfg.gamma * float(np.log(z.sum()))


def lse_grad(xs, cfg: LseConfig) -> np.ndarray:
    """Softmax weights w_i = exp((x_i-c)/gamma) / sum_j exp((x_j-c)/gamma)."""
    x = np.asarray(xs, dtype=np.float64)
    if x.size == 0:
        raise ValueError("lse_grad of an empty input")
    z = np.exp((x - x.max()) / cfg.gamma)
    return z / z.sum()


@dataclass
class GradientState:
    """Smooth arrivals, softmax merge weights, and loss gradients."""

    gamma: float
    loss_kind: str
    lse_arrival: np.ndarray      # (n_pins, 2) late rise/fall
    arc_weights: np.ndarray      # (n_arcs, 2) softmax weight inside the merge
    d_arc: np.ndarray            # (n_arcs, 2) dL/d(arc delay)
    d_edge: np.ndarray           # (n_members, 2) dL/d(net edge delay)
    adjoint: np.ndarray          # (n_pins, 2) accumulated sensitivities
    loss: float = float("nan")
    flat: FlatDesign | None = field(default=None, repr=False)

    def values_equal(self, other: "GradientState") -> bool:
        return (self.gamma == other.gamma
                and self.loss == other.loss
                and all(np.array_equal(getattr(self, f), getattr(other, f))
                        for f in ("lse_arrival", "arc_weights", "d_arc",
                                  "d_edge", "adjoint")))


def _level_pos_groups(flat: FlatDesign, li: int):
    """This level's member indices grouped by local position (for tree
    folds), cached on the flat."""
    key = ("dpos", li)
    got = flat._level_cache.get(key)
    if got is None:
        _, mem_idx, _, _, _, _ = flat.level_view(li)
        if len(mem_idx):
            order = np.argsort(flat.mem_local[mem_idx], kind="stable")
            srt = mem_idx[order]
            pos = flat.mem_local[srt]
            hi = int(pos[-1]) + 1
            bounds = np.searchsorted(pos, np.arange(hi + 1))
            got = [srt[bounds[k]:bounds[k + 1]] for k in range(hi)]
        else:
            got = []
        flat._level_cache[key] = got
    return got


def _path_from_edges(flat: FlatDesign, edges: np.ndarray) -> np.ndarray:
    """Cumulative root-to-member delays recomputed from per-edge delays,
    shallowest position first.  Dtype follows `edges`."""
    path = np.zeros_like(edges)
    order = np.argsort(flat.mem_local, kind="stable")
    pos_sorted = flat.mem_local[order]
    hi = int(pos_sorted[-1]) + 1 if len(pos_sorted) else 0
    bounds = np.searchsorted(pos_sorted, np.arange(hi + 1))
    for k in range(hi):
        idx = order[bounds[k]:bounds[k + 1]]
        pl = flat.mem_parent_loc[idx]
        acc = edges[idx].copy()
        inner = pl > 0
        if inner.any():
            pidx = flat.net_ptr[flat.mem_net[idx[inner]]] + pl[inner] - 1
            acc[inner] += path[pidx]
        path[idx] = acc
    return path


def _lse_forward_level(flat: FlatDesign, g, lse_at: np.ndarray,
                       arc_d: np.ndarray, path_of, li: int,
                       weights_out: np.ndarray | None = None):
    """One level of the smooth forward pass.  path_of(mem_idx) supplies the
    cumulative net edge delays for this level's members; the fused executor
    reads them from live state, the plain pass from a precomputed array."""
    nets, mem_idx, mem_seg, arc_nets, arc_idx, arc_seg = flat.level_view(li)
    if len(arc_idx):
        from_pin = flat.arc_from[arc_idx]
        counts = flat.net_a[arc_nets]
        starts = arc_seg[:-1]
        roots = flat.net_root[arc_nets]
        for j in range(2):
            x = lse_at[from_pin, j] + arc_d[arc_idx, j]
            c = np.maximum.reduceat(x, starts)
            z = np.exp((x - np.repeat(c, counts)) / g)
            s = np.add.reduceat(z, starts)
            lse_at[roots, j] = c + g * np.log(s)
            if weights_out is not None:
                weights_out[arc_idx, j] = z / np.repeat(s, counts)
    if len(mem_idx):
        pins = flat.mem_pin[mem_idx]
        roots = flat.net_root[flat.mem_net[mem_idx]]
        lse_at[pins] = lse_at[roots] + path_of(mem_idx)


def _smooth_forward(flat: FlatDesign, gamma, seed: np.ndarray,
                    arc_d: np.ndarray, path: np.ndarray,
                    weights_out: np.ndarray | None = None) -> np.ndarray:
    """LSE forward pass.  seed: (n_pins, 2) starting arrivals (late cols of
    the hard pass; only merge/member pins are overwritten).  arc_d: (A, 2)
    late arc delays.  path: (M, 2) cumulative net edge delays.  Works in the
    dtype of `seed` so the validator can run it in extended precision."""
    lse_at = seed.copy()
    g = seed.dtype.type(gamma)
    for li in range(flat.n_levels):
        _lse_forward_level(flat, g, lse_at, arc_d, lambda mi: path[mi], li,
                           weights_out=weights_out)
    return lse_at


def forward_lse_arrival(design, schedule=None, state: TimingState | None = None,
                        cfg: LseConfig | None = None) -> GradientState:
    """Smooth forward pass over the hard pass's cached arc delays; fills
    lse_arrival and the per-merge softmax weights."""
    flat = design if isinstance(design, FlatDesign) else flatten(design, schedule)
    if state is None:
        state = run_reference(flat)
    gamma = cfg.gamma if cfg is not None else default_gamma(flat.clock_period)
    LseConfig(gamma)
    A = len(flat.arc_from)
    M = len(flat.mem_pin)
    weights = np.zeros((A, 2))
    seed = state.arrival[:, LATE_COLS[0]:LATE_COLS[1] + 1].copy()
    arc_d = state.arc_delay[:, LATE_COLS[0]:LATE_COLS[1] + 1]
    path = state.net_delay[flat.mem_pin][:, LATE_COLS[0]:LATE_COLS[1] + 1]
    lse_at = _smooth_forward(flat, gamma, seed, arc_d, path, weights_out=weights)
    return GradientState(
        gamma=gamma,
        loss_kind="hinge",
        lse_arrival=lse_at,
        arc_weights=weights,
        d_arc=np.zeros((A, 2)),
        d_edge=np.zeros((M, 2)),
        adjoint=np.zeros((flat.n_pins, 2)),
        flat=flat,
    )


def _endpoint_loss(flat: FlatDesign, lse_at: np.ndarray, gamma, kind: str):
    """Loss and per-endpoint outer sensitivities.  Returns (loss, seed pin
    adjoints as a dense (n_pins, 2) array)."""
    dt = lse_at.dtype
    adj = np.zeros((flat.n_pins, 2), dtype=dt)
    if not len(flat.ep_pin):
        return dt.type(0.0), adj
    v = lse_at[flat.ep_pin] - flat.ep_required[:, LATE_COLS[0]:LATE_COLS[1] + 1].astype(dt)
    if kind == "hinge":
        loss = np.maximum(v, dt.type(0.0)).sum()
        g = (v > 0.0).astype(dt)
    elif kind == "softplus":
        g_ = dt.type(gamma)
        loss = (np.maximum(v, dt.type(0.0))
                + g_ * np.log1p(np.exp(-np.abs(v) / g_))).sum()
        g = 1.0 / (1.0 + np.exp(-v / g_))
    else:
        raise ValueError(f"unknown loss kind {kind!r} (expected one of {LOSS_KINDS})")
    for j in range(2):
        np.add.at(adj[:, j], flat.ep_pin, g[:, j])
    return loss, adj


def _grad_backward_level(flat: FlatDesign, adj: np.ndarray, d_arc: np.ndarray,
                         d_edge: np.ndarray, arc_weights: np.ndarray, li: int):
    """One reverse level: fold member adjoints down the net trees into edge
    gradients and the root, then distribute root adjoints over arc weights."""
    nets, mem_idx, mem_seg, arc_nets, arc_idx, arc_seg = flat.level_view(li)
    if len(mem_idx):
        d_edge[mem_idx] = adj[flat.mem_pin[mem_idx]]
        groups = _level_pos_groups(flat, li)
        for k in range(len(groups) - 1, -1, -1):
            idx = groups[k]
            pl = flat.mem_parent_loc[idx]
            inner = pl > 0
            if inner.any():
                pidx = flat.net_ptr[flat.mem_net[idx[inner]]] + pl[inner] - 1
                d_edge[pidx] += d_edge[idx[inner]]
            outer = ~inner
            if outer.any():
                roots = flat.net_root[flat.mem_net[idx[outer]]]
                adj[roots] += d_edge[idx[outer]]
    if len(arc_idx):
        counts = flat.net_a[arc_nets]
        roots = flat.net_root[arc_nets]
        from_pin = flat.arc_from[arc_idx]
        for j in range(2):
            contrib = np.repeat(adj[roots, j], counts) * arc_weights[arc_idx, j]
            d_arc[arc_idx, j] = contrib
            np.add.at(adj[:, j], from_pin, contrib)


def backward_tns_grad(design, schedule=None, gstate: GradientState | None = None,
                      loss: str = "hinge") -> GradientState:
    """Reverse accumulation: endpoint hinge sensitivities flow back through
    net edges (subtree folds) and arc merges (softmax weights)."""
    if gstate is None:
        gstate = forward_lse_arrival(design, schedule)
    flat = gstate.flat
    if flat is None:
        flat = design if isinstance(design, FlatDesign) else flatten(design, schedule)
        gstate.flat = flat
    L, adj = _endpoint_loss(flat, gstate.lse_arrival, gstate.gamma, loss)
    gstate.d_arc[:] = 0.0
    gstate.d_edge[:] = 0.0
    for li in range(flat.n_levels - 1, -1, -1):
        _grad_backward_level(flat, adj, gstate.d_arc, gstate.d_edge,
                             gstate.arc_weights, li)
    gstate.loss = float(L)
    gstate.loss_kind = loss
    gstate.adjoint = adj
    return gstate


def timing_gradients(design, cfg: LseConfig | None = None, loss: str = "hinge",
                     state: TimingState | None = None) -> GradientState:
    """Hard pass (if not supplied), smooth forward, reverse gradients."""
    flat = design if isinstance(design, FlatDesign) else flatten(design)
    if state is None:
        state = run_reference(flat)
    gstate = forward_lse_arrival(flat, state=state, cfg=cfg)
    return backward_tns_grad(flat, gstate=gstate, loss=loss)


# ---------------------------------------------------------------------------
# finite-difference validation

def _mpf_pair(x):
    """Exact mpmath value of a long double via a two-float decomposition."""
    from mpmath import mpf
    hi = float(x)
    lo = float(x - np.longdouble(hi))
    return mpf(hi) + mpf(lo)


def mp_loss(flat: FlatDesign, gamma: float, seed: np.ndarray,
            arc_d, edges, loss_kind: str = "hinge", dps: int = 40):
    """Arbitrary-precision evaluation of the smooth loss (mpmath), used to
    re-check finite-difference coordinates whose long-double quotient is
    noise-limited, and as an independent oracle in tests.  arc_d (A, 2) and
    edges (M, 2) may be float64 or long double arrays."""
    import mpmath
    with mpmath.workdps(dps):
        g = _mpf_pair(np.longdouble(gamma))
        lse_at = {}
        for p in range(flat.n_pins):
            for j in range(2):
                lse_at[(p, j)] = mpmath.mpf(float(seed[p, j]))
        av = {(a, j): _mpf_pair(np.longdouble(arc_d[a, j]))
              for a in range(len(flat.arc_from)) for j in range(2)}
        ev = {(k, j): _mpf_pair(np.longdouble(edges[k, j]))
              for k in range(len(flat.mem_pin)) for j in range(2)}
        for li in range(flat.n_levels):
            for net in flat.schedule.levels[li]:
                net = int(net)
                a0, a1 = flat.net_in_ptr[net], flat.net_in_ptr[net + 1]
                root = int(flat.net_root[net])
                if a1 > a0:
                    for j in range(2):
                        xs = [lse_at[(int(flat.arc_from[ai]), j)] + av[(int(ai), j)]
                              for ai in flat.net_in_arc[a0:a1]]
                        c = max(xs)
                        s = mpmath.fsum(mpmath.exp((x - c) / g) for x in xs)
                        lse_at[(root, j)] = c + g * mpmath.log(s)
                m0, m1 = flat.net_ptr[net], flat.net_ptr[net + 1]
                for j in range(2):
                    path = []
                    for k in range(m0, m1):
                        pl = int(flat.mem_parent_loc[k])
                        base = path[pl - 1] if pl > 0 else mpmath.mpf(0)
                        path.append(ev[(k, j)] + base)
                        pin = int(flat.mem_pin[k])
                        lse_at[(pin, j)] = lse_at[(root, j)] + path[-1]
        total = mpmath.mpf(0)
        for e in range(len(flat.ep_pin)):
            pin = int(flat.ep_pin[e])
            for j in range(2):
                v = lse_at[(pin, j)] - mpmath.mpf(float(flat.ep_required[e, 2 + j]))
                if loss_kind == "hinge":
                    if v > 0:
                        total += v
                else:
                    total += (max(v, mpmath.mpf(0))
                              + g * mpmath.log1p(mpmath.exp(-abs(v) / g)))
        return total


@dataclass
class FiniteDiffReport:
    max_rel_error: float
    max_abs_error: float
    worst_coordinate: tuple | None   # (kind, index, condition name)
    n_coords: int
    n_significant: int
    epsilon: float
    gamma: float
    epsilon_dominated: bool
    loss_kind: str
    n_refined: int = 0

    def __str__(self):
        flag = " [epsilon-dominated]" if self.epsilon_dominated else ""
        return (f"finite-diff: max rel {self.max_rel_error:.3e} "
                f"(abs {self.max_abs_error:.3e}) over {self.n_significant}"
                f"/{self.n_coords} coords at eps={self.epsilon:.3e}, "
                f"gamma={self.gamma:.3e}{flag}")


def finite_diff_check(design, cfg: LseConfig | None = None,
                      epsilon: float | None = None, loss: str = "hinge",
                      grad_floor: float = 1e-8,
                      refine_threshold: float = 1e-5) -> FiniteDiffReport:
    """Central finite differences of the loss against the analytic gradients,
    one coordinate at a time.  The perturbed passes run in extended precision
    (long double) so the difference quotient keeps enough significant digits
    at epsilon values far below the arrival magnitudes; coordinates whose
    quotient is still noise-limited (relative error above refine_threshold)
    are re-evaluated with mpmath at 40 digits.  Coordinates with
    |analytic| <= grad_floor contribute to the absolute error only."""
    flat = design if isinstance(design, FlatDesign) else flatten(design)
    if epsilon is not None and epsilon <= 0:
        raise ValueError("epsilon must be positive")
    state = run_reference(flat)
    gamma = cfg.gamma if cfg is not None else default_gamma(flat.clock_period)
    eps = epsilon if epsilon is not None else 1e-6 * flat.clock_period
    gstate = timing_gradients(flat, LseConfig(gamma), loss=loss, state=state)

    ld = np.longdouble
    seed = state.arrival[:, 2:4].astype(ld)
    arc_d = state.arc_delay[:, 2:4].astype(ld)
    nd = state.net_delay[flat.mem_pin][:, 2:4].astype(ld)
    pl = flat.mem_parent_loc
    pidx = np.where(pl > 0, flat.net_ptr[flat.mem_net] + pl - 1, 0)
    parent_nd = np.where((pl > 0)[:, None], nd[pidx], ld(0.0))
    edges = nd - parent_nd
    e = ld(eps)

    base_path = _path_from_edges(flat, edges)

    def loss_at(arc_d_v, edges_v, path_v=None):
        path = path_v if path_v is not None else _path_from_edges(flat, edges_v)
        lse_at = _smooth_forward(flat, gamma, seed, arc_d_v, path)
        L, _ = _endpoint_loss(flat, lse_at, gamma, loss)
        return L

    A = len(flat.arc_from)
    M = len(flat.mem_pin)
    rows = []
    for a in range(A):
        for j in range(2):
            up = arc_d.copy()
            up[a, j] += e
            dn = arc_d.copy()
            dn[a, j] -= e
            fd = float((loss_at(up, edges, base_path) - loss_at(dn, edges, base_path))
                       / (2 * e))
            rows.append([float(gstate.d_arc[a, j]), fd, ("arc", a, COL_NAMES[j])])
    for k in range(M):
        for j in range(2):
            up = edges.copy()
            up[k, j] += e
            dn = edges.copy()
            dn[k, j] -= e
            fd = float((loss_at(arc_d, up) - loss_at(arc_d, dn)) / (2 * e))
            rows.append([float(gstate.d_edge[k, j]), fd, ("edge", k, COL_NAMES[j])])

    # re-check noise-limited quotients at higher precision
    n_refined = 0
    try:
        import mpmath  # noqa: F401
        have_mp = True
    except ImportError:
        have_mp = False
    if have_mp:
        for row in rows:
            an, fd, coord = row
            if abs(an) <= grad_floor or abs(fd - an) <= refine_threshold * abs(an):
                continue
            kind, idx, j = coord[0], coord[1], COL_NAMES.index(coord[2])
            if kind == "arc":
                up = arc_d.copy()
                up[idx, j] += e
                dn = arc_d.copy()
                dn[idx, j] -= e
                hi = mp_loss(flat, gamma, seed, up, edges, loss)
                lo = mp_loss(flat, gamma, seed, dn, edges, loss)
            else:
                up = edges.copy()
                up[idx, j] += e
                dn = edges.copy()
                dn[idx, j] -= e
                hi = mp_loss(flat, gamma, seed, arc_d, up, loss)
                lo = mp_loss(flat, gamma, seed, arc_d, dn, loss)
            with mpmath.workdps(40):
                row[1] = float((hi - lo) / (2 * _mpf_pair(e)))
            n_refined += 1

    max_rel = 0.0
    max_abs = 0.0
    worst = None
    n_sig = 0
    for an, fd, coord in rows:
        err = abs(fd - an)
        max_abs = max(max_abs, err)
        if abs(an) > grad_floor:
            n_sig += 1
            rel = err / abs(an)
            if rel > max_rel:
                max_rel = rel
                worst = coord

    return FiniteDiffReport(
        max_rel_error=max_rel,
        max_abs_error=max_abs,
        worst_coordinate=worst,
        n_coords=2 * (A + M),
        n_significant=n_sig,
        epsilon=eps,
        gamma=gamma,
        epsilon_dominated=bool(eps >= 0.1 * gamma),
        loss_kind=loss,
        n_refined=n_refined,
    )
