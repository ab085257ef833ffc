"""Densities of a few free convolutions against their closed forms.

    semicircle(0,1) + semicircle(0,1)  ->  semicircle of variance 2
    two-atom(-1,1) + itself            ->  arcsine on [-2, 2]
    Marchenko-Pastur x Marchenko-Pastur (moments only)

    python3 demos/densities.py
"""

import numpy as np

from freeoutliers import measures as M
from freeoutliers.convolution import density, support

x = np.linspace(-2.7, 2.7, 541)
g = density(M.semicircle(0, 1), M.semicircle(0, 1), "additive", abscissae=x)
exact = np.sqrt(np.clip(8 - x * x, 0, None)) / (4 * np.pi)
print(f"semicircle sum: sup error {np.max(np.abs(g.densities - exact)):.2e}")
print("  support", support(M.semicircle(0, 1), M.semicircle(0, 1), "additive").components,
      "vs +-", 2 * np.sqrt(2))

mu = M.two_atom(-1, 1, 0.5)
x = np.linspace(-1.9, 1.9, 381)
g = density(mu, mu, "additive", abscissae=x)
print(f"arcsine: sup error {np.max(np.abs(g.densities - 1 / (np.pi * np.sqrt(4 - x * x)))):.2e}")

a, b = M.marchenko_pastur(0.5, 1.0), M.marchenko_pastur(0.3, 2.0)
g = density(a, b, "positive", points=8001)
x, d = g.abscissae, g.densities
m1 = np.trapezoid(x * d, x) / np.trapezoid(d, x)
print(f"MP x MP: first moment {m1:.5f} vs {a.mean * b.mean:.5f}")
g.to_csv("mp_product_density.csv")
