"""
The OUD surrogate and its expected-value oracle
===============================================

Each replication of the surrogate follows a cohort through five states
(NoUse, OUD, Treatment, Remission, ODDeath) for two years. The outcome is
the number of overdose deaths. Because the chain is Markov with fixed
daily probabilities, its expectation can be computed exactly by pushing
occupancy through the transition matrix.
"""

import numpy as np

from treatalloc import SimParams, build_grid, condition_params, expected_outcome, simulate_replication
from treatalloc.seeding import replication_seed

base = SimParams()
grid = build_grid({"active": "all"})
print(f"{len(grid.conditions)} treatment conditions, population {base.population}")

###############################################################################
# Expected deaths over the whole grid. Rows are Naloxone levels (A..E),
# columns Buprenorphine levels (a..e). Both factors push deaths down.

table = np.zeros(grid.shape)
for c in grid.conditions:
    table[c.x2, c.x1] = expected_outcome(condition_params(base, c))
print("     " + "".join(f"{b:>9}" for b in grid.buprenorphine_levels))
for i, row in enumerate(table):
    print(f"{grid.naloxone_levels[i]:>5}" + "".join(f"{v:9.2f}" for v in row))

###############################################################################
# Monte Carlo against the oracle at two corners.

for label in ("Aa", "Ee"):
    c = grid.condition(label)
    p = condition_params(base, c)
    x = np.array([simulate_replication(p, replication_seed(1, c.index, r)).od_deaths for r in range(400)])
    se = x.std(ddof=1) / np.sqrt(len(x))
    print(f"{label}: MC {x.mean():.2f} +/- {se:.2f}   oracle {expected_outcome(p):.2f}")

###############################################################################
# One trajectory, for a feel of the dynamics: occupancy on a few days.

occ = simulate_replication(condition_params(base, grid.condition("Aa")), 2016, trajectory=True).occupancy
for day in (0, 90, 365, 730):
    print(f"day {day:4d}: " + "  ".join(f"{n}={v}" for n, v in zip(
        ("NoUse", "OUD", "Treat", "Remit", "Dead"), occ[day])))
