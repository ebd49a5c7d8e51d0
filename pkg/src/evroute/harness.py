"""Experiment orchestration and file export.

An experiment runs the search once per seed on one shared instance and
aggregates the final best scores into a four-number summary (worst, best,
mean, population variance). All outputs are delimited text tables with
full-precision decimals, so identical configurations always produce
byte-identical files; there is no wall-clock entropy anywhere.

Seeds are mutually independent by construction (each run derives every
random stream from its own seed), so execution order cannot change any
result.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .anneal import SaSchedule
from .bocs import BocsParams, SearchHistory, run_bocs, run_random_search
from .evaluator import simulate_battery
from .instance import (
    BatteryParams,
    GenParams,
    ProblemInstance,
    generate_instance,
    load_instance,
)
from .qubo import PenaltyWeights

__all__ = [
    "ExperimentConfig",
    "SeedRun",
    "ExperimentReport",
    "Summary",
    "run_experiment",
    "run_random_baseline",
    "summarize",
    "export",
    "summary_from_history_files",
]

_FORMATS = {"csv": ",", "tsv": "\t"}

HISTORY_COLUMNS = ("iteration", "y", "a", "b", "best_so_far", "s")
TRACE_COLUMNS = ("step", "before_charge", "after_charge", "after_move",
                 "charge_overflow", "move_underflow", "move_overflow")
SUMMARY_COLUMNS = ("worst", "best", "mean", "variance")


@dataclass(frozen=True)
class ExperimentConfig:
    """One campaign: an instance source, a seed list, and all solver knobs.

    Exactly one of instance_path and gen must be set. battery may only
    accompany gen (a loaded instance carries its own). out_dir None keeps
    the report in memory; otherwise files are written there per the emit
    flags.
    """

    instance_path: str | None = None
    gen: GenParams | None = None
    battery: BatteryParams | None = None
    params: BocsParams = field(default_factory=BocsParams)
    weights: PenaltyWeights | None = None
    schedule: SaSchedule | None = None
    seeds: tuple[int, ...] = (0,)
    out_dir: str | None = None
    table_format: str = "csv"
    emit_history: bool = True
    emit_traces: bool = True
    emit_summary: bool = True

    def __post_init__(self):
        if (self.instance_path is None) == (self.gen is None):
            raise ValueError("exactly one of instance_path and gen must be set")
        if self.battery is not None and self.gen is None:
            raise ValueError("battery overrides require a generated instance")
        seeds = tuple(int(s) for s in self.seeds)
        if len(seeds) < 1:
            raise ValueError("at least one seed is required")
        if len(set(seeds)) != len(seeds):
            raise ValueError("seeds must be distinct")
        object.__setattr__(self, "seeds", seeds)
        if self.table_format not in _FORMATS:
            raise ValueError(f"table_format must be one of {sorted(_FORMATS)}")

    def resolve_instance(self) -> ProblemInstance:
        if self.instance_path is not None:
            return load_instance(self.instance_path)
        return generate_instance(self.gen, self.battery)


@dataclass(frozen=True)
class SeedRun:
    seed: int
    history: SearchHistory


@dataclass(frozen=True)
class ExperimentReport:
    config: ExperimentConfig
    instance: ProblemInstance
    runs: tuple[SeedRun, ...]
    method: str  # "bocs" or "random"

    def final_bests(self) -> np.ndarray:
        return np.array([run.history.final_best for run in self.runs])


@dataclass(frozen=True)
class Summary:
    n_runs: int
    worst: float
    best: float
    mean: float
    variance: float


def summarize(report: ExperimentReport) -> Summary:
    """Four-number summary of final best scores, recomputed from the
    histories every time (never cached)."""
    return _summary_of(report.final_bests())


def _summary_of(finals: np.ndarray) -> Summary:
    finals = np.asarray(finals, dtype=np.float64)
    return Summary(
        n_runs=len(finals),
        worst=float(np.max(finals)),
        best=float(np.min(finals)),
        mean=float(np.mean(finals)),
        variance=float(np.var(finals)),  # population variance: 1 run -> 0
    )


def _check_writable(out_dir: str) -> None:
    os.makedirs(out_dir, exist_ok=True)
    probe = Path(out_dir) / ".write_probe"
    with open(probe, "w", encoding="utf-8"):
        pass
    os.remove(probe)


def _run(cfg: ExperimentConfig, guided: bool) -> ExperimentReport:
    inst = cfg.resolve_instance()
    if cfg.out_dir is not None:
        _check_writable(cfg.out_dir)   # fail on IO problems before any compute
    runs = []
    for seed in cfg.seeds:
        params = replace(cfg.params, seed=seed)
        runner = run_bocs if guided else run_random_search
        history = runner(inst, params, cfg.weights, cfg.schedule)
        runs.append(SeedRun(seed=seed, history=history))
    report = ExperimentReport(
        config=cfg, instance=inst, runs=tuple(runs),
        method="bocs" if guided else "random",
    )
    if cfg.out_dir is not None:
        export(report)
    return report


def run_experiment(cfg: ExperimentConfig) -> ExperimentReport:
    """Run the surrogate-guided search for every seed and aggregate."""
    return _run(cfg, guided=True)


def run_random_baseline(cfg: ExperimentConfig) -> ExperimentReport:
    """Same campaign shape with uniform-random proposals instead of the
    surrogate, at the same budget, for paired comparison."""
    return _run(cfg, guided=False)


def _fmt(value: float) -> str:
    # repr gives the shortest decimal that round-trips, so re-parsing the
    # file reproduces every float bit for bit
    return repr(float(value))


def _write_table(path: Path, header, rows, delim: str) -> None:
    lines = [delim.join(header)]
    lines.extend(delim.join(row) for row in rows)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _history_rows(history: SearchHistory):
    for rec in history.records:
        yield (str(rec.index), _fmt(rec.y), _fmt(rec.a), _fmt(rec.b),
               _fmt(rec.best_so_far), rec.config.to_bitstring())


def _trace_rows(report: ExperimentReport, run: SeedRun):
    ev = run.history.best_evaluation
    if ev.tour is None:
        return
    eparams = report.config.params.eval_params()
    trace = simulate_battery(report.instance, ev.tour,
                             run.history.best_config.as_array(),
                             charge_at_arrival=eparams.charge_at_arrival)
    for t in range(trace.n_steps):
        yield (str(t), _fmt(trace.before_charge[t]), _fmt(trace.after_charge[t]),
               _fmt(trace.after_move[t]), str(int(trace.charge_overflow[t])),
               str(int(trace.move_underflow[t])), str(int(trace.move_overflow[t])))


def export(report: ExperimentReport, out_dir: str | None = None,
           table_format: str | None = None) -> list[Path]:
    """Write the report as delimited text tables and return the paths.

    Per seed: a history table (one row per evaluation) and a battery trace
    of the best solution. Plus one summary table holding the four-number
    row. Column order is fixed; floats are full precision; re-exporting the
    same report yields identical bytes.
    """
    cfg = report.config
    out = out_dir if out_dir is not None else cfg.out_dir
    if out is None:
        raise ValueError("no output directory: set out_dir in the config or pass one")
    fmt = table_format if table_format is not None else cfg.table_format
    if fmt not in _FORMATS:
        raise ValueError(f"table_format must be one of {sorted(_FORMATS)}")
    delim = _FORMATS[fmt]
    os.makedirs(out, exist_ok=True)
    base = Path(out)
    written: list[Path] = []

    for run in report.runs:
        if cfg.emit_history:
            path = base / f"history_seed{run.seed}.{fmt}"
            _write_table(path, HISTORY_COLUMNS, _history_rows(run.history), delim)
            written.append(path)
        if cfg.emit_traces:
            path = base / f"trace_seed{run.seed}.{fmt}"
            _write_table(path, TRACE_COLUMNS, _trace_rows(report, run), delim)
            written.append(path)

    if cfg.emit_summary:
        s = summarize(report)
        path = base / f"summary.{fmt}"
        row = (_fmt(s.worst), _fmt(s.best), _fmt(s.mean), _fmt(s.variance))
        _write_table(path, SUMMARY_COLUMNS, [row], delim)
        written.append(path)
    return written


def summary_from_history_files(paths, table_format: str = "csv") -> Summary:
    """Recompute the summary from exported history tables.

    Each file contributes its last row's best_so_far value. Because floats
    are exported at full precision this reproduces the original summary
    exactly.
    """
    if table_format not in _FORMATS:
        raise ValueError(f"table_format must be one of {sorted(_FORMATS)}")
    delim = _FORMATS[table_format]
    finals = []
    for p in paths:
        lines = Path(p).read_text(encoding="utf-8").strip().split("\n")
        header = tuple(lines[0].split(delim))
        if header != HISTORY_COLUMNS:
            raise ValueError(f"{p}: unexpected columns {header}")
        if len(lines) < 2:
            raise ValueError(f"{p}: no data rows")
        finals.append(float(lines[-1].split(delim)[4]))
    if not finals:
        raise ValueError("no history files given")
    return _summary_of(np.array(finals))
