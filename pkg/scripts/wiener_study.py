"""Regulated propagator against the Trotter value: Monte Carlo and deterministic quadrature.

The quadrature has no sampling noise, so it isolates the bias of the
finite-nu regulated value from the statistical error of the estimator.
"""

import math

from spinpath.exact_oracle import FieldProtocol
from spinpath.su2_core import CoherentLabel
from spinpath.trotter_evaluator import build_grid, trotter_propagator
from spinpath.wiener_regulator import regulated_propagator, regulated_quadrature

field = FieldProtocol.constant([0.0, 0.0, 1.0], 1.0)
state = CoherentLabel(math.pi / 2, 0.0)
n = 64
ref = trotter_propagator(field, n, build_grid(16, 16), state, state)
print(f"trotter reference: {ref:.6f}")
for nu in (1.0, 10.0, 100.0):
    quad = regulated_quadrature(field, n, nu, build_grid(24, 24), state, state)
    est = regulated_propagator(field, n, nu, 20_000, state, state, seed=1)
    print(f"nu={nu:6g}  quadrature {quad:.5f} (gap {abs(quad - ref):.4f})  "
          f"MC {est.mean:.5f} +- {est.std_error:.4f} (gap {abs(est.mean - ref):.4f})")
