"""
Model-based greedy and the bias-variance trade-off
==================================================

When the response is smooth in the treatment levels, a regression across
conditions borrows strength between neighbours and reaches the target
width with far fewer runs. Dropping the interaction term narrows the
intervals further, but if the truth does have an interaction the plane
cannot follow it and the corners inherit a bias.
"""

import numpy as np

from treatalloc import AllocationConfig, GaussianSimulator, build_grid, linear_truth, run_greedy, run_model_greedy
from treatalloc.seeding import strategy_seed

beta = (2400.0, -15.0, -7.0, 0.5)
truth = linear_truth(beta)
grid = build_grid()
sim = GaussianSimulator(truth, 50.0)

g, _ = run_greedy(sim, grid, AllocationConfig(), seed=strategy_seed(0, "greedy"))
m, _ = run_model_greedy(sim, grid, AllocationConfig(with_interaction=True), seed=strategy_seed(0, "model_greedy"))
p, _ = run_model_greedy(sim, grid, AllocationConfig(with_interaction=False),
                        seed=strategy_seed(0, "model_greedy_no_interaction"))
for rep in (g, m, p):
    print(f"{rep.name:30s} total runs {rep.total_runs:6d}  max width {rep.max_ci_width:.2f}")

###############################################################################
# Where did the runs go? The regression learns most from the extremes, so
# the corners of the design absorb nearly all batches.

print("TC    greedy  model  plane")
for a, b, c in zip(g.rows, m.rows, p.rows):
    print(f"{a.label:4s} {a.runs:7d} {b.runs:6d} {c.runs:6d}")

###############################################################################
# Errors against the known truth. Part of the plane's error is systematic:
# it is the residual of projecting the x1*x2 term onto the plane, weighted
# by the run counts. The noise part is still larger at this budget.

for rep in (m, p):
    err = np.array([r.mean - truth(grid.condition(r.label)) for r in rep.rows])
    print(f"{rep.name:30s} errors: " + " ".join(f"{e:+.2f}" for e in err))
