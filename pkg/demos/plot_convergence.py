"""
How fast does the posterior converge?
=====================================

With an exact chi-squared push-forward available we can measure the error
caused by replacing it with a KDE, and watch it shrink like N^(-2/(m+4)).
"""

import numpy as np

from consistent_bayes.experiments import run_chi2_convergence

###############################################################################
# A smaller study than the full sweep: 5 repetitions, a quick evaluation set.

records = run_chi2_convergence(dims=[4], qoi_counts=[1, 2], N_grid=[100, 316, 1000, 3162],
                               reps=5, seed=7, eval_count=5000)

for rec in records:
    print(f"d={rec.dim} m={rec.qoi_count}  slope {rec.fitted_slope:+.3f}"
          f"  (theory {-2 / (rec.qoi_count + 4):+.3f})")
    for n, e in zip(rec.sample_sizes, rec.errors):
        print(f"    N={n:5d}  median L1 error {e:.4f}")

###############################################################################
# Log-log slope by hand, for the first record.

rec = records[0]
print(np.polyfit(np.log(rec.sample_sizes), np.log(rec.errors), 1)[0])
