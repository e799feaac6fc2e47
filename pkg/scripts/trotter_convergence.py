"""Trotter error against the exact propagator as n and the grid are refined.

Prints |A_n - A_exact| for each grid and the fitted log-log slope.
"""

import math

import numpy as np

from spinpath.exact_oracle import FieldProtocol, matrix_element, propagate
from spinpath.su2_core import CoherentLabel
from spinpath.trotter_evaluator import build_grid, trotter_propagator

field = FieldProtocol.rotating(1.0, 2.0, 0.5, 1.0)
bra = ket = CoherentLabel(math.pi / 2, 0.0)
exact = matrix_element(bra, propagate(field, 65536), ket)
ns = [8, 16, 32, 64, 128, 256]
print("grid     " + "  ".join(f"n={n:<7d}" for n in ns) + "  slope")
for shape in [(2, 4), (8, 8), (12, 12), (24, 24)]:
    grid = build_grid(*shape)
    errs = [abs(trotter_propagator(field, n, grid, bra, ket) - exact) for n in ns]
    slope = np.polyfit(np.log(ns), np.log(errs), 1)[0]
    print(f"{str(shape):8s} " + "  ".join(f"{e:.3e}" for e in errs) + f"  {slope:.3f}")
