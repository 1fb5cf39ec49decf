"""
Numerical stability of the minimal solvers
==========================================

Feed each solver exact minimal samples and look at how far the recovered
division parameter lands from the truth.
"""

import numpy as np

from rdct.synth import SceneConfig, run_stability_study

# %%
# Fifty noiseless scenes are enough to see the shape of the distribution.

rows = run_stability_study(SceneConfig(n_trials=50, seed=11))

# %%
# Report log10 of the relative error.  Failures count as infinitely bad.

by_solver = {}
for r in rows:
    err = r["rel_lambda_err"] if r["status"] == "ok" else np.inf
    by_solver.setdefault(r["solver"], []).append(np.log10(max(err, 1e-17)))

for solver, vals in by_solver.items():
    v = np.asarray(vals)
    print(f"{solver:5s} median {np.median(v):7.2f}   p95 {np.percentile(v, 95):7.2f}   "
          f"failed {np.sum(~np.isfinite(v))}/{len(v)}")
