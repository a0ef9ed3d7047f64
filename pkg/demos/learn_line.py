"""Learn an unbalanced two-component mixture on the line.

Candidates are built from a handful of samples (pairs of points as means,
pair distances as variances) and a knockout tournament on the remaining
samples picks one. The exact L1 error comes from adaptive quadrature.

    python3 demos/learn_line.py
"""

import numpy as np

from sphmix import EstimatorConfig, Mixture, l1_quadrature_1d, learn_1d, sample

truth = Mixture([0.3, 0.7], [[-5.0], [5.0]], [1.0, 4.0])
cfg = EstimatorConfig(k=2, eps=0.2, delta=0.1, seed=0, candidate_samples=18, weight_scale=3.0, unordered=True)

for n in (218, 618, 1618):
    data = sample(truth, n, seed=n)
    fit, report = learn_1d(data, cfg)
    err = l1_quadrature_1d(truth, fit)
    print(f"n={n:5d}  candidates={report.n_candidates}  games={report.games}  L1={err:.3f}")
    print("         weights", np.round(fit.weights, 3), "means", np.round(fit.means[:, 0], 2),
          "variances", np.round(fit.variances, 2))
