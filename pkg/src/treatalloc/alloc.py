"""Replication allocation strategies.

* brute force: equal replications at every condition;
* greedy: after an initial sweep, batches go to the condition with the
  widest sample confidence interval until every width is under a threshold;
* model-based greedy: the same loop, but means and widths come from an OLS
  surface fitted across all conditions, with or without the x1*x2 term.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import Executor, ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field
from functools import partial
from typing import Sequence

import numpy as np

from .seeding import replication_seeds
from .sim import FactorGrid, Simulator
from .stats import (
    ConditionEstimate,
    RegressionModel,
    ci_width_or_inf,
    fit_ols_grouped,
    predict_with_ci,
    update_stats,
)


class Status(str, enum.Enum):
    CONVERGED = "Converged"
    BUDGET_EXHAUSTED = "BudgetExhausted"


@dataclass(frozen=True)
class AllocationConfig:
    """Settings of an adaptive run.

    ``stop_metric`` is ``"ci"`` (stop once every width is below
    ``ci_threshold``) or ``"error"`` (model-based only: stop once the largest
    gap between model and sample means is below ``ci_threshold``; batches
    then go to the condition with the largest gap).
    ``batch_mode`` is ``"selected"`` (one condition per batch) or ``"all"``
    (model-based only: every condition gets a batch each round).
    """

    initial_runs: int = 100
    batch_size: int = 50
    ci_threshold: float = 4.0
    confidence: float = 0.95
    budget_cap: int | None = None
    with_interaction: bool = True
    stop_metric: str = "ci"
    batch_mode: str = "selected"

    def validate(self, n_conditions: int | None = None) -> "AllocationConfig":
        if self.initial_runs < 2:
            raise ValueError("initial_runs must be at least 2")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if not self.ci_threshold > 0:
            raise ValueError("ci_threshold must be positive")
        if not 0.0 < self.confidence < 1.0:
            raise ValueError("confidence must be in (0, 1)")
        if self.stop_metric not in ("ci", "error"):
            raise ValueError(f"stop_metric must be 'ci' or 'error', got {self.stop_metric!r}")
        if self.batch_mode not in ("selected", "all"):
            raise ValueError(f"batch_mode must be 'selected' or 'all', got {self.batch_mode!r}")
        if self.budget_cap is not None and n_conditions is not None:
            if self.budget_cap < n_conditions * self.initial_runs:
                raise ValueError(
                    f"budget_cap={self.budget_cap} is smaller than the initial sweep "
                    f"({n_conditions} x {self.initial_runs})"
                )
        return self


@dataclass(frozen=True)
class TraceRecord:
    iteration: int
    label: str
    batch_size: int
    widths: tuple[float, ...]  # per-condition widths seen before the batch
    total_runs: int  # cumulative, after the batch


@dataclass
class AllocationTrace:
    labels: tuple[str, ...]
    initial_total: int
    records: list[TraceRecord] = field(default_factory=list)
    final_widths: tuple[float, ...] = ()
    status: Status | None = None

    def trajectory(self) -> list[tuple[int, float]]:
        """``(cumulative runs, max width)`` after the sweep and after each batch."""
        totals = [self.initial_total] + [r.total_runs for r in self.records]
        widths = [r.widths for r in self.records] + [self.final_widths]
        return [(t, max(w)) for t, w in zip(totals, widths)]


@dataclass(frozen=True)
class ConditionResult:
    label: str
    mean: float
    ci_width: float
    runs: int


@dataclass
class StrategyReport:
    name: str
    rows: list[ConditionResult]
    model: RegressionModel | None = None
    model_error: float | None = None

    @property
    def total_runs(self) -> int:
        return sum(r.runs for r in self.rows)

    @property
    def max_ci_width(self) -> float:
        return max(r.ci_width for r in self.rows)

    @property
    def mean_ci_width(self) -> float:
        return float(np.mean([r.ci_width for r in self.rows]))


def select_max_ci(widths: Sequence[float]) -> int:
    """Index of the widest interval; ties go to the earliest condition."""
    if len(widths) == 0:
        raise ValueError("no condition estimates to choose from")
    w = np.array([math.inf if x is None or math.isnan(x) else x for x in widths], dtype=float)
    return int(np.argmax(w))


@contextmanager
def _executor(workers: int):
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            yield pool
    else:
        yield None


class _Sampler:
    """Draws replications condition by condition and keeps their moments.

    Replication ``r`` of a condition always uses the seed derived from
    ``(stream_seed, condition.index, r)``, whatever the batch layout.
    """

    def __init__(self, sim: Simulator, grid: FactorGrid, stream_seed: int, executor: Executor | None):
        self.sim = sim
        self.conds = grid.active_conditions
        self.stream_seed = stream_seed
        self.executor = executor
        self.estimates = [ConditionEstimate() for _ in self.conds]

    @property
    def total(self) -> int:
        return sum(e.n for e in self.estimates)

    def draw(self, pos: int, k: int) -> None:
        cond = self.conds[pos]
        est = self.estimates[pos]
        seeds = replication_seeds(self.stream_seed, cond.index, est.n, k)
        if self.executor is None:
            values = [self.sim.sample(cond, s) for s in seeds]
        else:
            values = list(self.executor.map(partial(self.sim.sample, cond), seeds))
        for v in values:
            est = update_stats(est, v)
        self.estimates[pos] = est

    def sweep(self, k: int) -> None:
        for pos in range(len(self.conds)):
            self.draw(pos, k)

    def widths(self, confidence: float) -> tuple[float, ...]:
        return tuple(ci_width_or_inf(e, confidence) for e in self.estimates)


def run_brute_force(
    sim: Simulator,
    grid: FactorGrid,
    runs_per_condition: int,
    confidence: float = 0.95,
    seed: int = 0,
    workers: int = 1,
) -> StrategyReport:
    if runs_per_condition < 2:
        raise ValueError("runs_per_condition must be at least 2")
    with _executor(workers) as pool:
        s = _Sampler(sim, grid, seed, pool)
        s.sweep(runs_per_condition)
    widths = s.widths(confidence)
    rows = [ConditionResult(c.label, e.mean, w, e.n) for c, e, w in zip(s.conds, s.estimates, widths)]
    return StrategyReport("brute_force", rows)


def run_greedy(
    sim: Simulator,
    grid: FactorGrid,
    config: AllocationConfig,
    seed: int = 0,
    workers: int = 1,
) -> tuple[StrategyReport, AllocationTrace]:
    config.validate(len(grid))
    cap = config.budget_cap
    with _executor(workers) as pool:
        s = _Sampler(sim, grid, seed, pool)
        s.sweep(config.initial_runs)
        trace = AllocationTrace(tuple(grid.labels), s.total)
        while True:
            widths = s.widths(config.confidence)
            if max(widths) < config.ci_threshold:
                trace.status = Status.CONVERGED
                break
            if cap is not None and s.total + config.batch_size > cap:
                trace.status = Status.BUDGET_EXHAUSTED
                break
            j = select_max_ci(widths)
            s.draw(j, config.batch_size)
            trace.records.append(
                TraceRecord(len(trace.records) + 1, s.conds[j].label, config.batch_size, widths, s.total)
            )
    trace.final_widths = widths
    rows = [ConditionResult(c.label, e.mean, w, e.n) for c, e, w in zip(s.conds, s.estimates, widths)]
    return StrategyReport("greedy", rows), trace


def run_model_greedy(
    sim: Simulator,
    grid: FactorGrid,
    config: AllocationConfig,
    seed: int = 0,
    workers: int = 1,
    name: str | None = None,
) -> tuple[StrategyReport, AllocationTrace]:
    """Greedy allocation driven by an OLS surface over the coded levels.

    Reported means and widths are the model's; ``runs`` are the raw
    replication counts per condition.
    """
    config.validate(len(grid))
    conds = grid.active_conditions
    x1 = [c.x1 for c in conds]
    x2 = [c.x2 for c in conds]
    for label, xs in (("x1 (Buprenorphine)", x1), ("x2 (Naloxone)", x2)):
        if len(set(xs)) < 2:
            raise ValueError(f"active grid is singular for the regression: covariate {label} takes a single value")
    if name is None:
        name = "model_greedy" if config.with_interaction else "model_greedy_no_interaction"
    cap = config.budget_cap
    all_mode = config.batch_mode == "all"

    with _executor(workers) as pool:
        s = _Sampler(sim, grid, seed, pool)
        s.sweep(config.initial_runs)
        trace = AllocationTrace(tuple(grid.labels), s.total)
        while True:
            model = fit_ols_grouped(x1, x2, s.estimates, config.with_interaction)
            preds = [predict_with_ci(model, c, config.confidence) for c in conds]
            means = tuple(m for m, _ in preds)
            widths = tuple(w for _, w in preds)
            gaps = [abs(m - e.mean) for m, e in zip(means, s.estimates)]
            error = max(gaps)
            by_error = config.stop_metric == "error"
            if (error if by_error else max(widths)) < config.ci_threshold:
                trace.status = Status.CONVERGED
                break
            if all_mode:
                targets = range(len(conds))
            else:
                targets = [select_max_ci(gaps if by_error else widths)]
            step = config.batch_size * len(targets)
            if cap is not None and s.total + step > cap:
                trace.status = Status.BUDGET_EXHAUSTED
                break
            for j in targets:
                s.draw(j, config.batch_size)
            label = "ALL" if all_mode else conds[targets[0]].label
            trace.records.append(TraceRecord(len(trace.records) + 1, label, step, widths, s.total))
    trace.final_widths = widths
    rows = [ConditionResult(c.label, m, w, e.n) for c, m, w, e in zip(conds, means, widths, s.estimates)]
    return StrategyReport(name, rows, model=model, model_error=error), trace
