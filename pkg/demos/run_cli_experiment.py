"""
Running a full experiment from a config file
============================================

The same pipeline as the ``treatalloc run`` command: load a YAML config,
run every strategy, and write tables, traces and plot data.
"""

import sys
import tempfile
from pathlib import Path

from treatalloc.harness import load_config, run_experiment

root = Path(__file__).resolve().parents[1]
cfg = load_config(root / "configs" / "linear_truth.yaml")
cfg.strategies = ("brute_force", "greedy", "model_greedy")
cfg.brute_force = type(cfg.brute_force)(runs_per_condition=200)

out = Path(tempfile.mkdtemp()) / "demo"
bundle = run_experiment(cfg, out)
for name, run in bundle.runs.items():
    print(f"{name:14s} total runs {run.report.total_runs:6d}  wall {run.wall_time:.2f}s")

###############################################################################
# Output layout.

for p in sorted(out.rglob("*")):
    print(p.relative_to(out))
print()
sys.stdout.write((out / "model_greedy.csv").read_text())
