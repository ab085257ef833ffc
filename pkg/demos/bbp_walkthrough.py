"""Rank-one spike over a semicircular matrix.

A spike theta = 2 added to a semicircle of variance 1 pushes one eigenvalue
out of [-2, 2] to theta + 1/theta = 2.5, and the top eigenvector keeps a
fraction 1 - 1/theta^2 = 0.75 of its mass on the spike direction.  The
script prints the prediction, then a few small Monte Carlo trials.

    python3 demos/bbp_walkthrough.py [N] [trials]
"""

import sys

import numpy as np

from freeoutliers import measures as M
from freeoutliers.outliers import SpikedModel, predict
from freeoutliers.simulation import SimulationConfig, run_monte_carlo

N = int(sys.argv[1]) if len(sys.argv) > 1 else 400
trials = int(sys.argv[2]) if len(sys.argv) > 2 else 5

A = SpikedModel(M.point_mass(0.0), (2.0,))
B = SpikedModel(M.semicircle(0.0, 1.0))
rep = predict("additive", A, B)
o, = rep.outliers
print(f"support of the bulk: {rep.K.components}")
print(f"predicted outlier {o.rho:.10f}, overlap weight {o.weight_A:.10f}")

# below the threshold theta = 1 there is nothing to see
print("theta = 0.8 gives", len(predict("additive", SpikedModel(M.point_mass(0.0), (0.8,)), B).outliers),
      "outliers")

res = run_monte_carlo(SimulationConfig("additive", A, B, N, trials, seed=1), rep)
for t in res.trials:
    w = t.windows[0]
    print(f"trial {t.trial}: top eigenvalue {np.max(t.eigenvalues):.4f}, overlap {w['overlapA']:.4f}")
