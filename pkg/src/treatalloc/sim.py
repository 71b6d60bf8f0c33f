"""Treatment-condition grid and a stochastic OUD surrogate simulator.

The surrogate is a discrete-time Markov model over independent agents with
states NoUse, OUD, Treatment, Remission and ODDeath (absorbing). Buprenorphine
raises the daily OUD -> Treatment probability; Naloxone lowers the probability
that an overdose is fatal. It reproduces the structure of a population-scale
OUD model, not any calibrated county-level numbers.

Because agents are independent, a replication is sampled event by event: the
time spent in a state is geometric in the total daily outflow probability and
the destination is drawn from the normalised outflow row. This is exact for
the daily chain and much cheaper than stepping every agent through every day.
NoUse is left at most once, so its onsets are drawn as a binomial count plus
truncated geometric onset days.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Callable, Mapping, Protocol, Sequence

import numpy as np

from .seeding import make_rng

NOUSE, OUD, TREATMENT, REMISSION, ODDEATH = range(5)
STATE_NAMES = ("NoUse", "OUD", "Treatment", "Remission", "ODDeath")
N_STATES = len(STATE_NAMES)

DEFAULT_NALOXONE_LEVELS = ("A", "B", "C", "D", "E")
DEFAULT_BUPRENORPHINE_LEVELS = ("a", "b", "c", "d", "e")
DEFAULT_ACTIVE_ROWS = ("A", "B")


# --------------------------------------------------------------------------
# Grid
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class TreatmentCondition:
    naloxone_index: int
    buprenorphine_index: int
    label: str
    index: int  # row-major position in the full grid; keys the RNG streams

    @property
    def x1(self) -> int:
        """Coded Buprenorphine level."""
        return self.buprenorphine_index

    @property
    def x2(self) -> int:
        """Coded Naloxone level."""
        return self.naloxone_index


@dataclass(frozen=True)
class FactorGrid:
    naloxone_levels: tuple[str, ...]
    buprenorphine_levels: tuple[str, ...]
    active_conditions: tuple[TreatmentCondition, ...]

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.naloxone_levels), len(self.buprenorphine_levels)

    @property
    def conditions(self) -> tuple[TreatmentCondition, ...]:
        """All cells of the grid, row-major (Naloxone outer)."""
        return _cross_product(self.naloxone_levels, self.buprenorphine_levels)

    @property
    def labels(self) -> list[str]:
        return [c.label for c in self.active_conditions]

    def condition(self, label: str) -> TreatmentCondition:
        for c in self.conditions:
            if c.label == label:
                return c
        raise KeyError(f"unknown treatment condition {label!r}")

    def __len__(self) -> int:
        return len(self.active_conditions)


def _cross_product(nal, bup) -> tuple[TreatmentCondition, ...]:
    return tuple(
        TreatmentCondition(i, j, nal[i] + bup[j], i * len(bup) + j)
        for i in range(len(nal))
        for j in range(len(bup))
    )


def _check_levels(name, levels):
    levels = tuple(str(v) for v in levels)
    if not levels:
        raise ValueError(f"{name}: at least one level is required")
    if len(set(levels)) != len(levels):
        raise ValueError(f"{name}: duplicate level labels in {list(levels)}")
    return levels


def build_grid(config: Mapping | None = None) -> FactorGrid:
    """Build a :class:`FactorGrid` from a grid description.

    Recognised keys are ``naloxone_levels``, ``buprenorphine_levels`` and
    ``active``. ``active`` may be ``"all"``, a mapping ``{"rows": [...]}``
    and/or ``{"columns": [...]}`` naming Naloxone / Buprenorphine levels, or
    a list of condition labels. Without ``active`` the first two Naloxone rows
    are used (the whole grid if it has fewer rows). Active conditions are
    always returned in grid (row-major) order.
    """
    config = dict(config or {})
    nal = _check_levels("naloxone_levels", config.pop("naloxone_levels", DEFAULT_NALOXONE_LEVELS))
    bup = _check_levels("buprenorphine_levels", config.pop("buprenorphine_levels", DEFAULT_BUPRENORPHINE_LEVELS))
    active = config.pop("active", None)
    if config:
        raise ValueError(f"grid: unknown key(s) {sorted(config)}")

    cells = _cross_product(nal, bup)
    labels = [c.label for c in cells]
    if len(set(labels)) != len(labels):
        raise ValueError("grid: concatenated condition labels are not unique")

    if active is None:
        rows = [r for r in DEFAULT_ACTIVE_ROWS if r in nal] or list(nal[:2])
        chosen = [c for c in cells if nal[c.naloxone_index] in rows]
    elif active == "all":
        chosen = list(cells)
    elif isinstance(active, Mapping):
        extra = set(active) - {"rows", "columns"}
        if extra:
            raise ValueError(f"grid.active: unknown key(s) {sorted(extra)}")
        rows = [str(r) for r in active.get("rows", nal)]
        cols = [str(c) for c in active.get("columns", bup)]
        for r in rows:
            if r not in nal:
                raise ValueError(f"grid.active: unknown Naloxone level {r!r}")
        for c in cols:
            if c not in bup:
                raise ValueError(f"grid.active: unknown Buprenorphine level {c!r}")
        chosen = [c for c in cells if nal[c.naloxone_index] in rows and bup[c.buprenorphine_index] in cols]
    else:
        wanted = [str(a) for a in active]
        for w in wanted:
            if w not in labels:
                raise ValueError(f"grid.active: unknown treatment condition {w!r}")
        if len(set(wanted)) != len(wanted):
            raise ValueError("grid.active: duplicate treatment conditions")
        chosen = [c for c in cells if c.label in wanted]

    if not chosen:
        raise ValueError("grid.active: no active treatment conditions")
    return FactorGrid(nal, bup, tuple(chosen))


# --------------------------------------------------------------------------
# Parameters
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SimParams:
    """Daily transition probabilities of the surrogate model.

    ``init_oud``, ``init_treatment`` and ``init_remission`` are the fractions
    of the population starting in those states; everyone else starts in
    NoUse. Initial counts are rounded once, so the simulator and
    :func:`expected_outcome` start from identical integer counts.
    """

    population: int = 10_000
    horizon_days: int = 730
    p_onset: float = 0.0002
    p_treat_base: float = 0.01
    p_treat_gain: float = 0.005
    p_relapse: float = 0.002
    p_remit: float = 0.003
    p_overdose: float = 0.004
    p_death_base: float = 0.10
    p_death_drop: float = 0.015
    init_oud: float = 0.25
    init_treatment: float = 0.05
    init_remission: float = 0.0

    @property
    def p_treat(self) -> float:
        """OUD -> Treatment probability at Buprenorphine level 0."""
        return self.p_treat_base

    @property
    def p_death(self) -> float:
        """Death probability given overdose at Naloxone level 0."""
        return self.p_death_base

    def validate(self, max_x1: int = 0, max_x2: int = 0) -> "SimParams":
        """Raise ``ValueError`` naming the violated bound; return ``self``."""
        if int(self.population) != self.population or self.population < 1:
            raise ValueError(f"population must be a positive integer, got {self.population}")
        if int(self.horizon_days) != self.horizon_days or self.horizon_days < 0:
            raise ValueError(f"horizon_days must be a non-negative integer, got {self.horizon_days}")
        for f in dataclasses.fields(self):
            if f.name.startswith(("p_", "init_")):
                v = getattr(self, f.name)
                if not 0.0 <= v <= 1.0:
                    raise ValueError(f"{f.name}={v} is outside [0, 1]")
        top_treat = self.p_treat_base + self.p_treat_gain * max_x1
        if top_treat > 1.0:
            raise ValueError(
                f"p_treat_base + p_treat_gain*{max_x1} = {top_treat:g} exceeds 1"
            )
        low_death = self.p_death_base - self.p_death_drop * max_x2
        if low_death < 0.0:
            raise ValueError(
                f"p_death_base - p_death_drop*{max_x2} = {low_death:g} is negative"
            )
        # worst case OUD outflow over the grid: highest p_treat with lowest x2
        if top_treat + self.p_overdose * self.p_death_base > 1.0 + 1e-12:
            raise ValueError("OUD daily outflow probabilities sum to more than 1")
        if self.p_relapse + self.p_remit > 1.0 + 1e-12:
            raise ValueError("Treatment daily outflow probabilities (p_relapse + p_remit) sum to more than 1")
        if self.init_oud + self.init_treatment + self.init_remission > 1.0 + 1e-12:
            raise ValueError("initial state fractions sum to more than 1")
        return self


def condition_params(base: SimParams, cond: TreatmentCondition) -> SimParams:
    """Resolve the level effects of ``cond`` into ``base``.

    The result has ``p_treat_base`` and ``p_death_base`` set to the effective
    probabilities at this condition and zero gain/drop, so its ``p_treat`` and
    ``p_death`` are the condition's values.
    """
    p_treat = base.p_treat_base + base.p_treat_gain * cond.x1
    p_death = base.p_death_base - base.p_death_drop * cond.x2
    if not 0.0 <= p_treat <= 1.0:
        raise ValueError(f"p_treat={p_treat:g} at {cond.label} is outside [0, 1]")
    if not 0.0 <= p_death <= 1.0:
        raise ValueError(f"p_death={p_death:g} at {cond.label} is outside [0, 1]")
    return dataclasses.replace(base, p_treat_base=p_treat, p_treat_gain=0.0, p_death_base=p_death, p_death_drop=0.0)


def transition_matrix(params: SimParams) -> np.ndarray:
    """Daily transition matrix at the params' level-0 probabilities."""
    P = np.zeros((N_STATES, N_STATES))
    P[NOUSE, OUD] = params.p_onset
    P[OUD, TREATMENT] = params.p_treat
    P[OUD, ODDEATH] = params.p_overdose * params.p_death
    P[TREATMENT, OUD] = params.p_relapse
    P[TREATMENT, REMISSION] = params.p_remit
    out = P.sum(axis=1)
    if np.any(out > 1.0 + 1e-12):
        raise ValueError("daily outflow probabilities sum to more than 1")
    P[np.diag_indices(N_STATES)] = np.clip(1.0 - out, 0.0, 1.0)
    return P


def initial_counts(params: SimParams) -> np.ndarray:
    pop = int(params.population)
    counts = np.zeros(N_STATES, dtype=np.int64)
    counts[OUD] = round(pop * params.init_oud)
    counts[TREATMENT] = round(pop * params.init_treatment)
    counts[REMISSION] = round(pop * params.init_remission)
    counts[NOUSE] = pop - counts[1:].sum()
    if counts[NOUSE] < 0:
        raise ValueError("initial state fractions exceed the population")
    return counts


# --------------------------------------------------------------------------
# Simulation
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SimOutcome:
    od_deaths: int
    treated_entries: int
    occupancy: np.ndarray | None = dataclasses.field(default=None, compare=False, repr=False)


def _exits(P):
    """Per state: total outflow, first and second destination, P(first | leave).

    Every transient state of the surrogate has at most two exits.
    """
    out = P.sum(axis=1) - np.diag(P)
    first = np.zeros(N_STATES, dtype=np.int64)
    second = np.zeros(N_STATES, dtype=np.int64)
    frac = np.ones(N_STATES)
    for s in range(N_STATES):
        if out[s] <= 0.0:
            continue
        targets = [j for j in range(N_STATES) if j != s and P[s, j] > 0.0]
        if len(targets) > 2:
            raise ValueError(f"state {STATE_NAMES[s]} has more than two exits")
        first[s] = targets[0]
        second[s] = targets[-1]
        frac[s] = P[s, targets[0]] / out[s] if len(targets) == 2 else 1.0
    return out, first, second, frac


def _geometric(u, q):
    """Inverse-CDF geometric on {1, 2, ...}; ``u`` uniform on [0, 1)."""
    q = np.asarray(q, dtype=float)
    with np.errstate(divide="ignore"):
        g = np.ceil(np.log1p(-u) / np.log1p(-q))
    return np.where(q >= 1.0, 1, np.maximum(g, 1.0)).astype(np.int64)


def simulate_replication(params: SimParams, seed: int, trajectory: bool = False) -> SimOutcome:
    """One stochastic replication over ``params.horizon_days`` days.

    ``params`` must already be resolved for a condition (see
    :func:`condition_params`). With ``trajectory=True`` the outcome carries
    an ``(horizon_days + 1, 5)`` array of daily state occupancy counts.
    """
    rng = make_rng(seed)
    P = transition_matrix(params)
    out, first, second, frac = _exits(P)
    horizon = int(params.horizon_days)
    counts0 = initial_counts(params)
    events = []  # (day, from, to) arrays, for the trajectory only

    q = out[NOUSE]
    n_onset = 0
    reach = 0.0
    if q > 0.0 and horizon > 0:
        with np.errstate(divide="ignore"):
            reach = float(-np.expm1(horizon * np.log1p(-q)))
        n_onset = int(rng.binomial(counts0[NOUSE], reach))
    onset_day = np.minimum(_geometric(rng.random(n_onset) * reach, np.full(n_onset, q)), horizon)
    if trajectory:
        events.append((onset_day, np.full(n_onset, NOUSE), np.full(n_onset, OUD)))

    state = np.concatenate([
        np.full(counts0[OUD], OUD), np.full(counts0[TREATMENT], TREATMENT),
        np.full(counts0[REMISSION], REMISSION), np.full(n_onset, OUD),
    ]).astype(np.int64)
    clock = np.concatenate([np.zeros(state.size - n_onset, dtype=np.int64), onset_day])

    deaths = 0
    entries = 0
    keep = out[state] > 0.0
    state, clock = state[keep], clock[keep]
    while state.size:
        u = rng.random((2, state.size))
        when = clock + _geometric(u[0], out[state])
        moving = when <= horizon
        state, when, u2 = state[moving], when[moving], u[1][moving]
        if not state.size:
            break
        dest = np.where(u2 < frac[state], first[state], second[state])
        deaths += int(np.count_nonzero(dest == ODDEATH))
        entries += int(np.count_nonzero((state == OUD) & (dest == TREATMENT)))
        if trajectory:
            events.append((when, state, dest))
        keep = out[dest] > 0.0
        state, clock = dest[keep], when[keep]

    occupancy = None
    if trajectory:
        flow = np.zeros((horizon + 1, N_STATES), dtype=np.int64)
        for when, src, dst in events:
            np.add.at(flow, (when, src), -1)
            np.add.at(flow, (when, dst), 1)
        occupancy = counts0 + np.cumsum(flow, axis=0)
    return SimOutcome(deaths, entries, occupancy)


def expected_outcome(params: SimParams) -> float:
    """Expected OD deaths by cohort recursion through the daily matrix."""
    P = transition_matrix(params)
    v = initial_counts(params).astype(float) / params.population
    for _ in range(int(params.horizon_days)):
        v = v @ P
    return float(params.population * v[ODDEATH])


# --------------------------------------------------------------------------
# Simulator interface
# --------------------------------------------------------------------------


class Simulator(Protocol):
    """Anything the allocation strategies can draw replications from.

    ``sample`` must be a pure function of ``(cond, seed)``.
    """

    def sample(self, cond: TreatmentCondition, seed: int) -> float: ...


@dataclass(frozen=True)
class OUDSimulator:
    base: SimParams = SimParams()

    def params(self, cond: TreatmentCondition) -> SimParams:
        return condition_params(self.base, cond)

    def sample(self, cond: TreatmentCondition, seed: int) -> float:
        return float(simulate_replication(self.params(cond), seed).od_deaths)

    def expected(self, cond: TreatmentCondition) -> float:
        return expected_outcome(self.params(cond))


def _per_condition(value) -> Callable[[TreatmentCondition], float]:
    if callable(value):
        return value
    if isinstance(value, Mapping):
        return lambda c: float(value[c.label])
    return lambda c: float(value)


class GaussianSimulator:
    """Gaussian outcomes with per-condition mean and standard deviation.

    ``mean`` and ``sd`` may each be a constant, a mapping from condition
    label, or a callable taking a :class:`TreatmentCondition`.
    """

    def __init__(self, mean=0.0, sd=1.0):
        self._mean = _per_condition(mean)
        self._sd = _per_condition(sd)

    def expected(self, cond: TreatmentCondition) -> float:
        return self._mean(cond)

    def sd(self, cond: TreatmentCondition) -> float:
        return self._sd(cond)

    def sample(self, cond: TreatmentCondition, seed: int) -> float:
        mu, sd = self._mean(cond), self._sd(cond)
        if sd == 0.0:
            return float(mu)
        return float(make_rng(seed).normal(mu, sd))


def linear_truth(beta: Sequence[float]) -> Callable[[TreatmentCondition], float]:
    """Mean surface ``b0 + b1*x1 + b2*x2 [+ b3*x1*x2]`` over coded levels."""
    b = tuple(float(v) for v in beta)
    if len(b) not in (3, 4):
        raise ValueError("beta needs 3 or 4 coefficients")
    b3 = b[3] if len(b) == 4 else 0.0
    return lambda c: b[0] + b[1] * c.x1 + b[2] * c.x2 + b3 * c.x1 * c.x2
