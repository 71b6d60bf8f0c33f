"""
Brute force versus greedy allocation
====================================

Brute force gives every condition the same number of replications. The
greedy rule sends each new batch to the condition whose interval is
currently widest, so noisy conditions get more runs and quiet ones stop
early.
"""

from treatalloc import AllocationConfig, GaussianSimulator, build_grid, run_brute_force, run_greedy

grid = build_grid({"naloxone_levels": ["A"], "buprenorphine_levels": ["a", "b", "c"], "active": "all"})
sim = GaussianSimulator(0.0, {"Aa": 5.0, "Ab": 10.0, "Ac": 20.0})

cfg = AllocationConfig(initial_runs=20, batch_size=10, ci_threshold=1.0)
report, trace = run_greedy(sim, grid, cfg, seed=1)
print("greedy:", trace.status.value)
for r in report.rows:
    print(f"  {r.label}: runs={r.runs:5d} width={r.ci_width:.3f}")

###############################################################################
# Counts grow like sigma squared: doubling the noise roughly quadruples the
# replications needed for the same width.

runs = {r.label: r.runs for r in report.rows}
print(f"Ab/Aa = {runs['Ab'] / runs['Aa']:.2f}, Ac/Ab = {runs['Ac'] / runs['Ab']:.2f}")

###############################################################################
# Brute force with the same total spread evenly overshoots the quiet
# conditions and undershoots the noisy one.

bf = run_brute_force(sim, grid, report.total_runs // 3, seed=1)
for r in bf.rows:
    print(f"  brute {r.label}: runs={r.runs:5d} width={r.ci_width:.3f}")

###############################################################################
# The trace keeps every decision, so the run can be replayed or plotted.

for step, (total, width) in enumerate(trace.trajectory()[:5]):
    print(f"step {step}: total={total} max width={width:.3f}")
