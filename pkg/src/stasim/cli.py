"""Command-line surface: gen, sta, compare, grad, bench.

Exit code is 0 iff every correctness check the invocation requested passed.
Report payload goes to stdout (or the requested file); diagnostics go to
stderr only.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import __version__
from .netlist import parse_design, serialize_design
from .generator import GeneratorConfig, generate_design
from .flatten import flatten
from .sta import run_reference
from .warp import SCHEMES, simulate_analysis, compare_schemes
from .diff import LseConfig, default_gamma, timing_gradients, finite_diff_check
from .fusion import FusionConfig, execute_sequential, execute_fused
from . import reports

GRAD_CHECK_THRESHOLD = 1e-4

# canned state mutations for the hidden --tamper hook (negative testing of
# the compare exit discipline)
_TAMPERS = {
    "loads": lambda st: st.load.__imul__(1.0 + 1e-3),
    "arrival": lambda st: st.arrival.__iadd__(1e-10),
}


def _load_design(path):
    with open(path, "r", encoding="utf-8") as fh:
        return parse_design(fh.read())


def _write(path, text):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def _manifest_for(path, command, config, dhash, seed, outputs, wall):
    _write(path, reports.run_manifest(command, config, dhash, seed, outputs, wall))


def cmd_gen(args) -> int:
    import time
    t0 = time.perf_counter()
    with open(args.config, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    cfg = GeneratorConfig.from_doc(doc)
    design = generate_design(cfg)
    text = serialize_design(design)
    _write(args.out, text)
    dhash = reports.design_hash(text)
    _manifest_for(args.out + ".manifest.json", "gen", cfg.to_doc(), dhash,
                  cfg.seed, [args.out], time.perf_counter() - t0)
    n_pins = len(design.pin_names)
    print(f"#Cells {len(design.cells)}  #Nets {len(design.nets)}  #Pins {n_pins}")
    return 0


def cmd_sta(args) -> int:
    import time
    t0 = time.perf_counter()
    design = _load_design(args.design)
    flat = flatten(design)
    if args.scheme == "reference":
        state = run_reference(flat)
        cost_report = None
    else:
        state, cost_report = simulate_analysis(design, args.scheme)
    text = reports.timing_report(flat, state, args.scheme, cost_report)
    dhash = reports.design_hash(flat.design)
    if args.report:
        _write(args.report, text)
        _manifest_for(args.report + ".manifest.json", "sta",
                      {"design": args.design, "scheme": args.scheme}, dhash,
                      None, [args.report], time.perf_counter() - t0)
        for k, v in reports.timing_summary(flat, state, cost_report).items():
            print(f"{k} = {v}")
    else:
        sys.stdout.write(text)
    return 0


def cmd_compare(args) -> int:
    design = _load_design(args.design)
    tamper = _TAMPERS[args.tamper] if args.tamper else None
    comp = compare_schemes(design, _tamper=tamper)
    dhash = reports.design_hash(design)
    sys.stdout.write(reports.comparison_text(dhash, comp))
    sys.stdout.write("\n")
    sys.stdout.write(reports.comparison_csv(dhash, comp))
    ok = True
    for scheme in SCHEMES:
        r = comp.results[scheme]
        if not r.values_within_tol:
            print(f"stasim: {scheme} values deviate from reference "
                  f"(max rel {r.max_rel_dev:.3e})", file=sys.stderr)
            ok = False
        if not r.exact_vs_tree_oracle:
            print(f"stasim: {scheme} engine values are not bit-equal to the "
                  "tree-order oracle", file=sys.stderr)
            ok = False
    return 0 if ok else 1


def cmd_grad(args) -> int:
    if args.gamma is not None and not (args.gamma > 0):
        print("stasim: error: --gamma must be > 0", file=sys.stderr)
        return 2
    if args.strict and not args.check:
        print("stasim: error: --strict requires --check", file=sys.stderr)
        return 2
    design = _load_design(args.design)
    flat = flatten(design)
    state = run_reference(flat)
    gamma = args.gamma if args.gamma is not None else default_gamma(flat.clock_period)
    cfg = LseConfig(gamma)
    gstate = timing_gradients(flat, cfg=cfg, state=state)
    fd = finite_diff_check(flat, cfg=cfg) if args.check else None
    sys.stdout.write(reports.gradient_report(flat, state, gstate, fd))
    rc = 0
    if args.fuse:
        fcfg = FusionConfig(granularity=args.granularity, gamma=gamma)
        st_s, gs_s, seq = execute_sequential(flat, cfg=fcfg)
        st_f, gs_f, fused = execute_fused(flat, cfg=fcfg)
        dhash = reports.design_hash(flat.design)
        sys.stdout.write("\n")
        sys.stdout.write(reports.schedule_trace(dhash, seq, fused))
        if fused.makespan > seq.makespan:
            print("stasim: fused makespan exceeds sequential", file=sys.stderr)
            rc = 1
        same = (st_s.values_equal(st_f, rtol=0.0, atol=0.0)
                and gs_s.values_equal(gs_f))
        if not same:
            print("stasim: fused pipeline values differ from sequential",
                  file=sys.stderr)
            rc = 1
    if args.check and args.strict and fd.max_rel_error > GRAD_CHECK_THRESHOLD:
        print(f"stasim: finite-difference max rel error {fd.max_rel_error:.3e} "
              f"exceeds {GRAD_CHECK_THRESHOLD:.0e}", file=sys.stderr)
        rc = 1
    return rc


def cmd_bench(args) -> int:
    from .bench import run_suite
    return run_suite(args.suite, args.out, parallel=args.parallel)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stasim",
        description="Static timing analysis with a warp-execution cost "
                    "simulator, differentiable timing, and fused scheduling.")
    parser.add_argument("--version", action="version",
                        version=f"stasim {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic design")
    p.add_argument("--config", required=True, help="generator config JSON")
    p.add_argument("--out", required=True, help="output design file")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("sta", help="run timing analysis on a design")
    p.add_argument("--design", required=True)
    p.add_argument("--scheme", default="reference",
                   choices=("reference",) + SCHEMES)
    p.add_argument("--report", default=None, help="write the report here "
                   "instead of stdout (stdout then carries the summary)")
    p.set_defaults(func=cmd_sta)

    p = sub.add_parser("compare", help="run all schemes and compare against "
                       "the reference")
    p.add_argument("--design", required=True)
    p.add_argument("--tamper", default=None, choices=sorted(_TAMPERS),
                   help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("grad", help="smooth timing loss and its gradients")
    p.add_argument("--design", required=True)
    p.add_argument("--gamma", type=float, default=None,
                   help="LSE smoothness in seconds (default 0.01 x clock period)")
    p.add_argument("--check", action="store_true",
                   help="validate gradients with central finite differences")
    p.add_argument("--strict", action="store_true",
                   help="with --check: nonzero exit if max rel error > 1e-4")
    p.add_argument("--fuse", action="store_true",
                   help="also run the fused two-stream pipeline and report "
                        "sequential vs fused makespans")
    p.add_argument("--granularity", type=int, default=10,
                   help="levels per fusion event group")
    p.set_defaults(func=cmd_grad)

    p = sub.add_parser("bench", help="run a benchmark suite")
    p.add_argument("--suite", required=True, help="suite JSON")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--parallel", type=int, default=0,
                   help="worker processes (0 = sequential)")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except BrokenPipeError:
        # downstream consumer closed the pipe (e.g. head); not our error
        try:
            sys.stdout.close()
        except OSError:
            pass
        return 0
    except (ValueError, OSError, KeyError) as exc:
        print(f"stasim: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
