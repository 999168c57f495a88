"""Two-mode Gaussian states in shot-noise units.

Squeezes two vacua orthogonally, mixes them on a balanced beamsplitter and
prints the joint quadrature variances that certify entanglement.
"""

import math

import numpy as np

from cvchip import gaussian as gs

r = 0.5
state = gs.vacuum(2)
state = gs.squeeze(state, 0, r)  # x-squeezed
state = gs.squeeze(state, 1, r, math.pi / 2)  # p-squeezed
epr = gs.beamsplitter(state, 0, 1, 0.5)

np.set_printoptions(precision=4, suppress=True)
print("covariance after the beamsplitter:")
print(epr.cov)

x1, p1, x2, p2 = range(4)
c = epr.cov
var_x_minus = 0.5 * (c[x1, x1] + c[x2, x2] - 2 * c[x1, x2])
var_p_plus = 0.5 * (c[p1, p1] + c[p2, p2] + 2 * c[p1, p2])
print(f"Var[(x1 - x2)/sqrt2] = {var_x_minus:.4f}  (e^-2r = {math.exp(-2 * r):.4f})")
print(f"Var[(p1 + p2)/sqrt2] = {var_p_plus:.4f}")
print(f"product criterion    = {math.sqrt(var_x_minus * var_p_plus):.4f} < 1")

# the reduced single mode is thermal: flat in the LO phase
thetas = np.linspace(0, math.pi, 7)
print("mode 1 variance vs LO phase:", [round(gs.quadrature_variance(epr, 0, t), 4) for t in thetas])
print("uncertainty eigenvalues:", epr.uncertainty_eigenvalues())
