"""Unitary product with a spike in a gap of the limiting support.

Both factors have seven equal atoms on the arc [-0.8, 0.8].  Moving one
eigenvalue of A to angle 2.5 leaves the bulk of AU*BU on an arc around 1 and
places one outlier in the gap.  Eigenvalues of the simulated unitary are on
the circle to rounding error.

    python3 demos/circle_gap.py [N] [trials]
"""

import sys

import numpy as np

from freeoutliers import measures as M
from freeoutliers.outliers import SpikedModel, predict
from freeoutliers.simulation import SimulationConfig, run_monte_carlo

N = int(sys.argv[1]) if len(sys.argv) > 1 else 300
trials = int(sys.argv[2]) if len(sys.argv) > 2 else 3

ang = np.linspace(-0.8, 0.8, 7)
bulk = M.circle_atomic(ang, np.full(7, 1 / 7))
A = SpikedModel(bulk, (np.exp(2.5j),))
B = SpikedModel(bulk)
rep = predict("circle", A, B)
print("support arcs:", [(round(a, 4), round(b, 4)) for a, b in rep.K.components])
for o in rep.outliers:
    print(f"outlier at angle {o.angle:.6f}, weight_A {o.weight_A:.6f}")

res = run_monte_carlo(SimulationConfig("circle", A, B, N, trials, seed=0), rep)
for t in res.trials:
    w = t.windows[0]
    print(f"trial {t.trial}: window angles {np.round(np.angle(w['values']), 4)}, "
          f"overlap {w['overlapA']:.4f}, max ||lambda|-1| {t.modulus_error:.1e}")
