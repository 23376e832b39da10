"""Benchmark suite runner.

A suite file lists generator configs with repetition counts; per-run seeds
are derived deterministically from the suite seed, so reruns (sequential or
parallel) produce byte-identical CSV rows.  Rows are per (run, scheme);
design-level metrics (makespans, gradient error) repeat on each scheme row
of the run.
"""

from __future__ import annotations

import json
import math
import os
import sys
import time

import numpy as np

from . import __version__
from .generator import GeneratorConfig, generate_design
from .flatten import flatten
from .warp import SCHEMES, PIN_BASED, compare_schemes
from .diff import finite_diff_check
from .fusion import (build_kernel_graph, kernel_costs_from_report,
                     schedule_sequential, schedule_fused)
from . import reports

SUITE_METRICS = ("cycles", "utilization", "makespans", "gradient_errors")
ROW_COLUMNS = ("entry", "rep", "seed", "design", "pins", "nets", "levels",
               "scheme", "total_cycles", "useful_lane_cycles",
               "lane_utilization", "rescheduling_steps", "values_within_tol",
               "exact_vs_tree", "max_rel_dev", "sequential_makespan",
               "fused_makespan", "overlap_fraction", "grad_max_rel_error",
               "status")
GRAD_PIN_LIMIT = 300
GRAD_ERROR_THRESHOLD = 1e-4
FUSION_GRANULARITY = 10


class BenchmarkSuite:
    """Parsed suite file: (GeneratorConfig, repetitions) entries plus the
    metric list and the suite seed all per-run seeds derive from."""

    def __init__(self, name, seed, metrics, entries):
        if not entries:
            raise ValueError("suite has no entries")
        for _, reps in entries:
            if reps < 1:
                raise ValueError("repetitions must be >= 1")
        for m in metrics:
            if m not in SUITE_METRICS:
                raise ValueError(f"unknown metric {m!r}")
        self.name = name
        self.seed = int(seed)
        self.metrics = tuple(metrics)
        self.entries = entries

    @classmethod
    def from_doc(cls, doc):
        entries = [(GeneratorConfig.from_doc(e["config"]),
                    int(e.get("repetitions", 1)))
                   for e in doc["entries"]]
        return cls(str(doc.get("name", "suite")), doc.get("seed", 0),
                   doc.get("metrics", list(SUITE_METRICS)), entries)

    @classmethod
    def load(cls, path):
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_doc(json.load(fh))

    def run_seed(self, entry_idx: int, rep: int) -> int:
        """Deterministic per-run seed derived from the suite seed."""
        ss = np.random.SeedSequence(entropy=[self.seed, entry_idx, rep])
        return int(ss.generate_state(1, np.uint32)[0])

    def units(self):
        return [(ei, r) for ei, (_, reps) in enumerate(self.entries)
                for r in range(reps)]


def default_suite_path() -> str:
    return os.path.join(os.path.dirname(__file__), "data", "default_suite.json")


def _run_unit(payload):
    """One (entry, rep) run: generate, compare schemes, schedule fusion,
    optionally finite-difference check.  Returns CSV row dicts.  Pure in
    the unit arguments, so parallel and sequential runs agree."""
    suite_doc, entry_idx, rep = payload
    suite = BenchmarkSuite.from_doc(suite_doc)
    cfg, _ = suite.entries[entry_idx]
    seed = suite.run_seed(entry_idx, rep)
    base = {"entry": entry_idx, "rep": rep, "seed": seed}
    try:
        run_cfg = GeneratorConfig.from_doc({**cfg.to_doc(), "seed": seed})
        design = generate_design(run_cfg)
        flat = flatten(design)
        dhash = reports.design_hash(design)
        comp = compare_schemes(design)
        seq_ms = fused_ms = overlap = ""
        if "makespans" in suite.metrics:
            costs = kernel_costs_from_report(comp.results[PIN_BASED].report)
            graph = build_kernel_graph(flat.n_levels, costs, FUSION_GRANULARITY)
            seq = schedule_sequential(graph)
            fused = schedule_fused(graph)
            seq_ms = repr(seq.makespan)
            fused_ms = repr(fused.makespan)
            overlap = repr(fused.overlap_fraction)
        grad_err = ""
        if "gradient_errors" in suite.metrics and flat.n_pins <= GRAD_PIN_LIMIT:
            grad_err = repr(finite_diff_check(flat).max_rel_error)
        rows = []
        for scheme in SCHEMES:
            r = comp.results[scheme]
            rep_ = r.report
            rows.append({**base,
                         "design": dhash, "pins": flat.n_pins,
                         "nets": flat.n_nets, "levels": flat.n_levels,
                         "scheme": scheme,
                         "total_cycles": repr(rep_.total_cycles),
                         "useful_lane_cycles": repr(rep_.useful_lane_cycles),
                         "lane_utilization": repr(rep_.lane_utilization),
                         "rescheduling_steps": rep_.rescheduling_steps,
                         "values_within_tol": int(r.values_within_tol),
                         "exact_vs_tree": int(r.exact_vs_tree_oracle),
                         "max_rel_dev": repr(r.max_rel_dev),
                         "sequential_makespan": seq_ms,
                         "fused_makespan": fused_ms,
                         "overlap_fraction": overlap,
                         "grad_max_rel_error": grad_err,
                         "status": "ok"})
        return rows
    except Exception as exc:  # partial failure: keep the row, poison the run
        row = {c: "" for c in ROW_COLUMNS}
        row.update(base)
        row["status"] = f"error: {type(exc).__name__}: {exc}".replace(",", ";")
        return [row]


def _aggregate(rows):
    """Suite summary: geometric-mean cycle ratio per scheme vs pin-based,
    mean overlap fraction, worst measured gradient error."""
    by_run = {}
    for row in rows:
        if row["status"] != "ok":
            continue
        by_run.setdefault((row["entry"], row["rep"]), {})[row["scheme"]] = row
    ratios = {s: [] for s in SCHEMES}
    overlaps = []
    grad_errs = []
    for (_, _), per in sorted(by_run.items()):
        if len(per) != len(SCHEMES):
            continue
        pin = float(per[PIN_BASED]["total_cycles"])
        for s in SCHEMES:
            ratios[s].append(float(per[s]["total_cycles"]) / pin)
        any_row = per[PIN_BASED]
        if any_row["overlap_fraction"] != "":
            overlaps.append(float(any_row["overlap_fraction"]))
        if any_row["grad_max_rel_error"] != "":
            grad_errs.append(float(any_row["grad_max_rel_error"]))
    lines = []
    for s in SCHEMES:
        if ratios[s]:
            g = math.exp(sum(math.log(x) for x in ratios[s]) / len(ratios[s]))
            lines.append(f"geomean_cycle_ratio.{s} = {g!r}")
    if overlaps:
        lines.append(f"mean_overlap_fraction = {sum(overlaps) / len(overlaps)!r}")
    if grad_errs:
        lines.append(f"worst_grad_max_rel_error = {max(grad_errs)!r}")
    lines.append(f"runs_ok = {len(by_run)}")
    return lines, grad_errs


def run_suite(suite_path: str, out_dir: str, parallel: int = 0) -> int:
    """Run the suite, write rows.csv / summary.txt / manifest.json into
    out_dir, print the summary, and return the exit code (0 iff every row
    is ok and every correctness check passed)."""
    t0 = time.perf_counter()
    suite = BenchmarkSuite.load(suite_path)
    os.makedirs(out_dir, exist_ok=True)
    units = suite.units()
    with open(suite_path, "r", encoding="utf-8") as fh:
        suite_doc = json.load(fh)
    payloads = [(suite_doc, ei, r) for ei, r in units]

    if parallel and parallel > 1:
        import multiprocessing as mp
        with mp.get_context("spawn").Pool(parallel) as pool:
            chunks = pool.map(_run_unit, payloads)
    else:
        chunks = [_run_unit(p) for p in payloads]

    rows = [row for chunk in chunks for row in chunk]
    csv_text = reports.render_csv(ROW_COLUMNS, rows)
    summary_lines, grad_errs = _aggregate(rows)
    header = [f"# stasim {__version__} bench summary",
              f"# suite: {suite.name} (seed {suite.seed})"]
    summary_text = "\n".join(header + summary_lines) + "\n"

    with open(os.path.join(out_dir, "rows.csv"), "w", encoding="utf-8") as fh:
        fh.write(csv_text)
    with open(os.path.join(out_dir, "summary.txt"), "w", encoding="utf-8") as fh:
        fh.write(summary_text)
    manifest = reports.run_manifest(
        "bench", suite_doc, None, suite.seed,
        [os.path.join(out_dir, "rows.csv"), os.path.join(out_dir, "summary.txt")],
        time.perf_counter() - t0)
    with open(os.path.join(out_dir, "manifest.json"), "w", encoding="utf-8") as fh:
        fh.write(manifest)
    sys.stdout.write(summary_text)

    rc = 0
    for row in rows:
        if row["status"] != "ok":
            print(f"stasim: bench run entry={row['entry']} rep={row['rep']} "
                  f"failed: {row['status']}", file=sys.stderr)
            rc = 1
        elif not (int(row["values_within_tol"]) and int(row["exact_vs_tree"])):
            print(f"stasim: bench correctness check failed for entry="
                  f"{row['entry']} rep={row['rep']} scheme={row['scheme']}",
                  file=sys.stderr)
            rc = 1
    if any(e > GRAD_ERROR_THRESHOLD for e in grad_errs):
        print("stasim: bench gradient check exceeded threshold", file=sys.stderr)
        rc = 1
    return rc
