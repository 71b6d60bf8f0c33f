"""
Streaming moments and the full-width confidence interval
=======================================================

Allocation decisions are driven by the *full* width of a Student-t
interval, 2 * t * s / sqrt(n). Moments are kept with Welford updates so a
condition never needs its raw samples.
"""

import numpy as np

from treatalloc import ConditionEstimate, ci_width, update_stats
from treatalloc.seeding import make_rng

rng = make_rng(5)
est = ConditionEstimate()
for n, v in enumerate(rng.normal(2400, 50, 3000), start=1):
    est = update_stats(est, v)
    if n in (10, 100, 1000, 3000):
        print(f"n={n:5d} mean={est.mean:8.2f} sd={np.sqrt(est.variance):6.2f} width={ci_width(est):7.3f}")

###############################################################################
# Width shrinks like 1/sqrt(n). With sd 50 a width below 4 needs roughly
# (2 * 1.96 * 50 / 4)**2 replications.

print("replications for width < 4 at sd 50:", int(np.ceil((2 * 1.96 * 50 / 4) ** 2)))

###############################################################################
# Coverage check: the half-width contains the true mean about 95% of the time.

hits = sum(
    abs(e.mean) <= ci_width(e) / 2
    for e in (ConditionEstimate.from_values(rng.normal(0, 1, 30)) for _ in range(2000))
)
print(f"coverage over 2000 trials: {hits / 2000:.3f}")
