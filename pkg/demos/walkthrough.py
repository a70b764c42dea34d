"""Stage-by-stage tour of the pipeline on a synthetic expression matrix.

Run: python3 demos/walkthrough.py   (about half a minute on one core)
"""

from __future__ import annotations

import numpy as np

from genefuse import PipelineConfig, run_pipeline, synthesize
from genefuse.pool import METHOD_NAMES

data, truth = synthesize(80, 500, 10, n_classes=2, seed=1)
print(f"{data.n_samples} samples x {data.n_features} genes, informative: {truth.tolist()}")

res = run_pipeline(data, PipelineConfig(seed=1))

# which selector voted for which candidate
pool = res.pool
print(f"\ncandidate pool: {len(pool)} genes")
for name, row in zip(METHOD_NAMES, pool.membership):
    hits = np.isin(pool.candidate_indices[row], truth).sum()
    print(f"  {name:<8} picked {row.sum():3d}  ({hits} informative)")

sel = res.selected_indices
print(f"\nswarm kept {sel.size} genes; recall {np.isin(truth, sel).mean():.2f}")
print(f"fitness {res.pso_history[0]:.3f} -> {res.pso_history[-1]:.3f} over {len(res.pso_history) - 1} iterations")

print("\ntest accuracy")
for label, m in res.member_metrics.items():
    print(f"  {label:<20} {100 * m.accuracy:6.2f}%")
print(f"  {'Voting Classifier':<20} {100 * res.ensemble_metrics.accuracy:6.2f}%")

print("\nstage seconds:", {k: round(v, 2) for k, v in res.stage_times.items()})
