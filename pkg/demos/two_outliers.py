"""One spike of B, two outliers.

A is 2p - 1 for a projection p of half rank, B carries a single eigenvalue 10
next to a small GUE block.  The limiting support is {-1, 1}, and the spike
shows up twice: once above the support and once in the gap between the two
atoms, at the roots 5 -+ sqrt(26) of z / (z^2 - 1) = 1/10.

The script writes a histogram of the pooled spectra with the predicted marks
to ``two_outliers_hist.csv`` and prints a coarse text plot of the gap.

    python3 demos/two_outliers.py [N] [trials]
"""

import sys

import numpy as np

from freeoutliers import measures as M
from freeoutliers.outliers import SpikedModel, predict
from freeoutliers.simulation import SimulationConfig, run_monte_carlo

N = int(sys.argv[1]) if len(sys.argv) > 1 else 300
trials = int(sys.argv[2]) if len(sys.argv) > 2 else 5

A = SpikedModel(M.two_atom(-1.0, 1.0, 0.5))
B = SpikedModel(M.point_mass(0.0), (10.0,))
rep = predict("additive", A, B)
for o in rep.outliers:
    print(f"rho = {o.rho: .8f}  k = {o.k}  ell = {o.ell}  weight_B = {o.weight_B:.6f}")

cfg = SimulationConfig("additive", A, B, N, trials, seed=3,
                       B_recipe={"source": "gue", "scale_per_n": 0.5})
res = run_monte_carlo(cfg, rep)
res.write_histogram("two_outliers_hist.csv", bins=240)
res.write_markers("two_outliers_marks.csv")

lam = np.concatenate([t.eigenvalues for t in res.trials])
edges = np.linspace(-1.5, 1.5, 31)
cnt, _ = np.histogram(lam, edges)
for a, c in zip(edges[:-1], cnt):
    bar = "#" * min(60, int(np.ceil(60 * c / cnt.max()))) if c else ""
    print(f"{a:+.1f} {bar}")
far = lam[np.abs(np.abs(lam) - 1) > 0.1]
print("eigenvalues away from {-1, 1}:", np.round(np.sort(far), 4))
