"""Experiment configuration, orchestration and CSV output.

A configuration is a YAML document; see ``configs/example.yaml`` for every
key with its default. Output files (all under the output directory):

``<strategy>.csv``
    ``TC,Mean,CI width,number of runs`` with a closing ``Total`` row.
``<strategy>_trace.csv``
    one line per adaptive batch, full float precision.
``summary.csv``
    totals and width statistics per strategy.
``timing.txt``
    wall time per strategy (kept out of the CSVs, which are reproducible
    byte for byte).
``plotdata/<strategy>_intervals.csv``, ``plotdata/<strategy>_trajectory.csv``
    interval endpoints and width-vs-runs trajectories.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import yaml

from .alloc import (
    AllocationConfig,
    AllocationTrace,
    StrategyReport,
    run_brute_force,
    run_greedy,
    run_model_greedy,
)
from .seeding import strategy_seed
from .sim import FactorGrid, GaussianSimulator, OUDSimulator, SimParams, build_grid, linear_truth

log = logging.getLogger(__name__)

STRATEGIES = ("brute_force", "greedy", "model_greedy", "model_greedy_no_interaction")
ADAPTIVE = STRATEGIES[1:]
TABLE_HEADER = ("TC", "Mean", "CI width", "number of runs")
SUMMARY_HEADER = ("strategy", "total_runs", "max_ci_width", "mean_ci_width", "status")

_TOP_KEYS = {
    "master_seed", "output_dir", "workers", "parallel_strategies",
    "grid", "sim", "simulator", "strategies", *STRATEGIES,
}
_ALLOC_KEYS = {f.name for f in dataclasses.fields(AllocationConfig)} - {"with_interaction"}
_BRUTE_KEYS = {"runs_per_condition", "confidence"}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class BruteForceConfig:
    runs_per_condition: int = 500
    confidence: float = 0.95


@dataclass
class ExperimentConfig:
    grid: FactorGrid
    sim: SimParams = SimParams()
    simulator: dict = field(default_factory=lambda: {"kind": "oud"})
    strategies: tuple[str, ...] = STRATEGIES
    brute_force: BruteForceConfig = BruteForceConfig()
    greedy: AllocationConfig = AllocationConfig()
    model_greedy: AllocationConfig = AllocationConfig(with_interaction=True)
    model_greedy_no_interaction: AllocationConfig = AllocationConfig(with_interaction=False)
    master_seed: int = 0
    output_dir: Path = Path("results")
    workers: int = 1
    parallel_strategies: bool = False

    def make_simulator(self):
        kind = self.simulator.get("kind", "oud")
        if kind == "oud":
            return OUDSimulator(self.sim)
        beta = self.simulator["beta"]
        return GaussianSimulator(linear_truth(beta), float(self.simulator.get("sd", 0.0)))


def _unknown(section, given, allowed):
    extra = sorted(set(given) - set(allowed))
    if extra:
        raise ConfigError(f"{section}: unknown key(s) {extra}")


def _alloc_config(raw, section, **fixed):
    raw = dict(raw or {})
    _unknown(section, raw, _ALLOC_KEYS)
    try:
        cfg = AllocationConfig(**raw, **fixed)
        cfg.validate()
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{section}: {exc}") from exc
    return cfg


def parse_config(doc: Mapping[str, Any] | None) -> ExperimentConfig:
    """Validate a configuration mapping and apply defaults."""
    doc = dict(doc or {})
    _unknown("config", doc, _TOP_KEYS)

    try:
        grid = build_grid(doc.get("grid"))
    except ValueError as exc:
        raise ConfigError(f"grid: {exc}") from exc

    sim_raw = dict(doc.get("sim") or {})
    _unknown("sim", sim_raw, {f.name for f in dataclasses.fields(SimParams)})
    try:
        sim = SimParams(**sim_raw)
        rows, cols = grid.shape
        sim.validate(max_x1=cols - 1, max_x2=rows - 1)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"sim: {exc}") from exc

    simulator = dict(doc.get("simulator") or {"kind": "oud"})
    kind = simulator.setdefault("kind", "oud")
    if kind == "oud":
        _unknown("simulator", simulator, {"kind"})
    elif kind == "linear":
        _unknown("simulator", simulator, {"kind", "beta", "sd"})
        if len(simulator.get("beta") or ()) not in (3, 4):
            raise ConfigError("simulator.beta: needs 3 or 4 coefficients")
        if float(simulator.get("sd", 0.0)) < 0:
            raise ConfigError("simulator.sd: must be non-negative")
    else:
        raise ConfigError(f"simulator.kind: expected 'oud' or 'linear', got {kind!r}")

    strategies = doc.get("strategies", list(STRATEGIES))
    if isinstance(strategies, str):
        strategies = [s.strip() for s in strategies.split(",") if s.strip()]
    for s in strategies:
        if s not in STRATEGIES:
            raise ConfigError(f"strategies: unknown strategy {s!r} (expected one of {', '.join(STRATEGIES)})")
    if len(set(strategies)) != len(strategies):
        raise ConfigError("strategies: listed more than once")

    bf_raw = dict(doc.get("brute_force") or {})
    _unknown("brute_force", bf_raw, _BRUTE_KEYS)
    bf = BruteForceConfig(**bf_raw)
    if bf.runs_per_condition < 2:
        raise ConfigError("brute_force.runs_per_condition: must be at least 2")
    if not 0 < bf.confidence < 1:
        raise ConfigError("brute_force.confidence: must be in (0, 1)")

    seed = doc.get("master_seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or not 0 <= seed < 2**64:
        raise ConfigError("master_seed: must be an integer in [0, 2**64)")
    workers = doc.get("workers", 1)
    if not isinstance(workers, int) or workers < 1:
        raise ConfigError("workers: must be a positive integer")

    cfg = ExperimentConfig(
        grid=grid,
        sim=sim,
        simulator=simulator,
        strategies=tuple(strategies),
        brute_force=bf,
        greedy=_alloc_config(doc.get("greedy"), "greedy"),
        model_greedy=_alloc_config(doc.get("model_greedy"), "model_greedy", with_interaction=True),
        model_greedy_no_interaction=_alloc_config(
            doc.get("model_greedy_no_interaction"), "model_greedy_no_interaction", with_interaction=False
        ),
        master_seed=seed,
        output_dir=Path(doc.get("output_dir", "results")),
        workers=workers,
        parallel_strategies=bool(doc.get("parallel_strategies", False)),
    )
    for name in ADAPTIVE:
        try:
            getattr(cfg, name).validate(len(grid))
        except ValueError as exc:
            raise ConfigError(f"{name}: {exc}") from exc
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        doc = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML: {exc}") from exc
    if doc is not None and not isinstance(doc, Mapping):
        raise ConfigError(f"{path}: top level must be a mapping")
    return parse_config(doc)


# --------------------------------------------------------------------------
# Running
# --------------------------------------------------------------------------


@dataclass
class StrategyRun:
    report: StrategyReport
    trace: AllocationTrace | None
    wall_time: float
    confidence: float


@dataclass
class ReportBundle:
    runs: dict[str, StrategyRun] = field(default_factory=dict)

    def __bool__(self) -> bool:
        return bool(self.runs)


def _run_one(cfg: ExperimentConfig, name: str) -> StrategyRun:
    sim = cfg.make_simulator()
    seed = strategy_seed(cfg.master_seed, name)
    start = time.perf_counter()
    if name == "brute_force":
        bf = cfg.brute_force
        report = run_brute_force(sim, cfg.grid, bf.runs_per_condition, bf.confidence, seed, cfg.workers)
        trace, conf = None, bf.confidence
    elif name == "greedy":
        report, trace = run_greedy(sim, cfg.grid, cfg.greedy, seed, cfg.workers)
        conf = cfg.greedy.confidence
    else:
        acfg = getattr(cfg, name)
        report, trace = run_model_greedy(sim, cfg.grid, acfg, seed, cfg.workers, name=name)
        conf = acfg.confidence
    elapsed = time.perf_counter() - start
    log.info("%s: %d runs in %.2fs", name, report.total_runs, elapsed)
    return StrategyRun(report, trace, elapsed, conf)


def run_strategies(cfg: ExperimentConfig) -> ReportBundle:
    if cfg.parallel_strategies and len(cfg.strategies) > 1:
        with ThreadPoolExecutor(max_workers=len(cfg.strategies)) as pool:
            futures = {name: pool.submit(_run_one, cfg, name) for name in cfg.strategies}
            return ReportBundle({name: futures[name].result() for name in cfg.strategies})
    return ReportBundle({name: _run_one(cfg, name) for name in cfg.strategies})


def _fmt2(x: float) -> str:
    return f"{x:.2f}"


def _full(x: float) -> str:
    return repr(float(x))


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def table_rows(report: StrategyReport) -> list[list[str]]:
    rows = [[r.label, _fmt2(r.mean), _fmt2(r.ci_width), str(r.runs)] for r in report.rows]
    rows.append(["Total", "", "", str(report.total_runs)])
    return rows


def _trace_rows(trace: AllocationTrace):
    header = ["iteration", "condition", "batch_size", "total_runs", "max_ci_width"]
    header += [f"ci_width_{lab}" for lab in trace.labels]
    rows = [
        [str(r.iteration), r.label, str(r.batch_size), str(r.total_runs), _full(max(r.widths))]
        + [_full(w) for w in r.widths]
        for r in trace.records
    ]
    return header, rows


class _Writer:
    """Writes files and remembers them so a failed run can be rolled back."""

    def __init__(self, root: Path):
        self.root = Path(root)
        self.written: list[Path] = []
        self.made_dirs: list[Path] = []

    def write(self, rel: str, text: str) -> Path:
        path = self.root / rel
        for parent in reversed(path.relative_to(self.root).parents):
            d = self.root / parent
            if not d.exists():
                d.mkdir(parents=True)
                self.made_dirs.append(d)
        with open(path, "w", newline="") as fh:
            fh.write(text)
        self.written.append(path)
        return path

    def rollback(self) -> None:
        for p in self.written:
            p.unlink(missing_ok=True)
        for d in reversed(self.made_dirs):
            try:
                d.rmdir()
            except OSError:
                pass


def emit_plot_data(bundle: ReportBundle, out_dir, _writer: _Writer | None = None) -> list[Path]:
    """Write interval endpoints and width trajectories under ``out_dir/plotdata``."""
    writer = _writer or _Writer(out_dir)
    paths = []
    for name, run in bundle.runs.items():
        rows = []
        for r in run.report.rows:
            half = r.ci_width / 2.0
            rows.append([r.label, _full(r.mean), _full(r.mean - half), _full(r.mean + half), str(r.runs)])
        paths.append(writer.write(
            f"plotdata/{name}_intervals.csv",
            _csv_text(["TC", "mean", "lower", "upper", "runs"], rows),
        ))
        if run.trace is not None:
            traj = [[str(i), str(t), _full(w)] for i, (t, w) in enumerate(run.trace.trajectory())]
            paths.append(writer.write(
                f"plotdata/{name}_trajectory.csv",
                _csv_text(["step", "total_runs", "max_ci_width"], traj),
            ))
    return paths


def write_outputs(bundle: ReportBundle, out_dir, _writer: _Writer | None = None) -> list[Path]:
    writer = _writer or _Writer(out_dir)
    if not bundle:
        return []
    summary = []
    for name, run in bundle.runs.items():
        writer.write(f"{name}.csv", _csv_text(TABLE_HEADER, table_rows(run.report)))
        status = ""
        if run.trace is not None:
            header, rows = _trace_rows(run.trace)
            writer.write(f"{name}_trace.csv", _csv_text(header, rows))
            status = run.trace.status.value
        rep = run.report
        summary.append([name, str(rep.total_runs), _fmt2(rep.max_ci_width), _fmt2(rep.mean_ci_width), status])
    writer.write("summary.csv", _csv_text(SUMMARY_HEADER, summary))
    writer.write("timing.txt", "".join(f"{n}\t{r.wall_time:.3f}s\n" for n, r in bundle.runs.items()))
    emit_plot_data(bundle, out_dir, writer)
    return list(writer.written)


def run_experiment(cfg: ExperimentConfig, out_dir=None) -> ReportBundle:
    """Run every selected strategy and write the report files.

    Files written before a failure are removed again.
    """
    out = Path(out_dir) if out_dir is not None else cfg.output_dir
    writer = _Writer(out)
    try:
        bundle = run_strategies(cfg)
        write_outputs(bundle, out, writer)
    except BaseException:
        writer.rollback()
        raise
    return bundle


def oracle_table(cfg: ExperimentConfig) -> list[tuple[str, int, int, float, bool]]:
    """Exact expected outcome at every grid condition: ``(TC, x1, x2, value, active)``."""
    sim = cfg.make_simulator()
    active = set(cfg.grid.labels)
    return [(c.label, c.x1, c.x2, sim.expected(c), c.label in active) for c in cfg.grid.conditions]

